#pragma once

#include <cstddef>
#include <type_traits>

#include <Eigen/Core>

namespace canvoi::nn {

// C (+)= op(A) * op(B) over row-major storage with leading dimensions.
// Built-in floating types go through Eigen's blocked kernel; any other scalar
// (the counting scalar in particular) takes the plain triple loop, which
// performs exactly one multiply and one add per term.
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  if constexpr (std::is_floating_point_v<T>) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using CMap = Eigen::Map<const Mat, Eigen::Unaligned, Eigen::OuterStride<>>;
    using MMap = Eigen::Map<Mat, Eigen::Unaligned, Eigen::OuterStride<>>;
    const auto ai = static_cast<Eigen::Index>(trans_a ? k : m);
    const auto aj = static_cast<Eigen::Index>(trans_a ? m : k);
    const auto bi = static_cast<Eigen::Index>(trans_b ? n : k);
    const auto bj = static_cast<Eigen::Index>(trans_b ? k : n);
    CMap A(a, ai, aj, Eigen::OuterStride<>(static_cast<Eigen::Index>(lda)));
    CMap B(b, bi, bj, Eigen::OuterStride<>(static_cast<Eigen::Index>(ldb)));
    MMap C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n),
           Eigen::OuterStride<>(static_cast<Eigen::Index>(ldc)));
    if (!accumulate) C.setZero();
    if (k == 0) return;
    if (!trans_a && !trans_b) C.noalias() += A * B;
    else if (trans_a && !trans_b) C.noalias() += A.transpose() * B;
    else if (!trans_a && trans_b) C.noalias() += A * B.transpose();
    else C.noalias() += A.transpose() * B.transpose();
  } else {
    auto at = [&](std::size_t i, std::size_t p) -> const T& { return trans_a ? a[p * lda + i] : a[i * lda + p]; };
    auto bt = [&](std::size_t p, std::size_t j) -> const T& { return trans_b ? b[j * ldb + p] : b[p * ldb + j]; };
    for (std::size_t i = 0; i < m; ++i) {
      T* cr = c + i * ldc;
      if (!accumulate)
        for (std::size_t j = 0; j < n; ++j) cr[j] = T(0);
      for (std::size_t p = 0; p < k; ++p) {
        const T av = at(i, p);
        for (std::size_t j = 0; j < n; ++j) cr[j] += av * bt(p, j);
      }
    }
  }
}

}  // namespace canvoi::nn
