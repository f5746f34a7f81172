#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace canvoi::nn {

// Attribution buckets for instrumented FLOP counts.
enum class FlopTag : int {
  patch_projection = 0,
  position,
  norms,
  qkv,
  attention_scores,
  softmax,
  attention_apply,
  output_projection,
  mlp,
  activation,
  residual,
  head,
  other,
  count_
};

inline constexpr std::size_t kFlopTagCount = static_cast<std::size_t>(FlopTag::count_);

// Process-wide tally written by Counted<> arithmetic. Counting runs are
// single-threaded by construction (the kernels have no internal threading).
struct FlopLedger {
  std::array<std::uint64_t, kFlopTagCount> by_tag{};
  FlopTag current = FlopTag::other;
  bool active = false;

  static FlopLedger& instance() {
    static FlopLedger ledger;
    return ledger;
  }
  void add(std::uint64_t n) {
    if (active) by_tag[static_cast<std::size_t>(current)] += n;
  }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto v : by_tag) t += v;
    return t;
  }
};

// RAII attribution of everything counted in scope to `tag`. No-op cost outside
// counting runs.
class FlopRegion {
 public:
  explicit FlopRegion(FlopTag tag) : saved_(FlopLedger::instance().current) {
    FlopLedger::instance().current = tag;
  }
  ~FlopRegion() { FlopLedger::instance().current = saved_; }
  FlopRegion(const FlopRegion&) = delete;
  FlopRegion& operator=(const FlopRegion&) = delete;

 private:
  FlopTag saved_;
};

// Scalar that counts every arithmetic operation and transcendental call it
// takes part in. Instantiating the real kernels over Counted<double> gives an
// executed-operation count. Each of + - * / and exp, log, tanh, sqrt costs 1;
// comparisons are free.
template <class V = double>
struct Counted {
  V v{};

  Counted() = default;
  constexpr Counted(V x) : v(x) {}  // NOLINT: implicit by design of the scalar
  template <class U, class = std::enable_if_t<std::is_arithmetic_v<U>>>
  constexpr Counted(U x) : v(static_cast<V>(x)) {}
  explicit operator V() const { return v; }
  explicit operator float() const requires(!std::is_same_v<V, float>) { return static_cast<float>(v); }

  static void tick() { FlopLedger::instance().add(1); }

  friend Counted operator+(Counted a, Counted b) { tick(); return Counted(a.v + b.v); }
  friend Counted operator-(Counted a, Counted b) { tick(); return Counted(a.v - b.v); }
  friend Counted operator*(Counted a, Counted b) { tick(); return Counted(a.v * b.v); }
  friend Counted operator/(Counted a, Counted b) { tick(); return Counted(a.v / b.v); }
  friend Counted operator-(Counted a) { return Counted(-a.v); }
  Counted& operator+=(Counted b) { tick(); v += b.v; return *this; }
  Counted& operator-=(Counted b) { tick(); v -= b.v; return *this; }
  Counted& operator*=(Counted b) { tick(); v *= b.v; return *this; }
  Counted& operator/=(Counted b) { tick(); v /= b.v; return *this; }

  friend bool operator<(Counted a, Counted b) { return a.v < b.v; }
  friend bool operator>(Counted a, Counted b) { return a.v > b.v; }
  friend bool operator<=(Counted a, Counted b) { return a.v <= b.v; }
  friend bool operator>=(Counted a, Counted b) { return a.v >= b.v; }
  friend bool operator==(Counted a, Counted b) { return a.v == b.v; }

  friend Counted exp(Counted a) { tick(); return Counted(std::exp(a.v)); }
  friend Counted log(Counted a) { tick(); return Counted(std::log(a.v)); }
  friend Counted tanh(Counted a) { tick(); return Counted(std::tanh(a.v)); }
  friend Counted sqrt(Counted a) { tick(); return Counted(std::sqrt(a.v)); }
  friend bool isfinite(Counted a) { return std::isfinite(a.v); }
};

// Scoped activation of the ledger, reset on entry.
class FlopCountingScope {
 public:
  FlopCountingScope() {
    auto& l = FlopLedger::instance();
    l.by_tag.fill(0);
    l.current = FlopTag::other;
    l.active = true;
  }
  ~FlopCountingScope() { FlopLedger::instance().active = false; }
  FlopCountingScope(const FlopCountingScope&) = delete;
  FlopCountingScope& operator=(const FlopCountingScope&) = delete;
};

}  // namespace canvoi::nn
