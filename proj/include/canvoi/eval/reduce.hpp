#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "canvoi/core/error.hpp"
#include "canvoi/core/rng.hpp"
#include "canvoi/eval/splits.hpp"

namespace canvoi::eval {

// Half-up rounding; the small bias absorbs products like 0.3 * 5 that land
// just under .5 in binary.
inline long long round_half_up(double x) { return static_cast<long long>(std::floor(x + 0.5 + 1e-9)); }

struct ReductionTargets {
  std::map<int, std::size_t> per_class;
  std::size_t total = 0;
};

// Per-class keep counts: round(f * n_c) with a floor of one, then single
// steps on the classes with the largest rounding slack until the sum equals
// round(f * N). No class moves more than one sample from f * n_c.
inline ReductionTargets reduction_targets(const std::map<int, std::size_t>& class_counts, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("reduction fraction must lie in (0, 1]");
  std::size_t n = 0;
  for (const auto& [c, k] : class_counts) n += k;
  ReductionTargets t;
  t.total = static_cast<std::size_t>(round_half_up(fraction * static_cast<double>(n)));
  struct Slot {
    int c;
    double exact;
    long long cap;
    long long kept;
  };
  std::vector<Slot> slots;
  long long sum = 0;
  for (const auto& [c, k] : class_counts) {
    const double exact = fraction * static_cast<double>(k);
    const long long kept = std::max(1LL, round_half_up(exact));
    slots.push_back({c, exact, static_cast<long long>(k), kept});
    sum += kept;
  }
  const long long target = static_cast<long long>(t.total);
  constexpr double eps = 1e-9;
  while (sum != target) {
    Slot* pick = nullptr;
    for (auto& s : slots) {
      const double d = static_cast<double>(s.kept) - s.exact;
      if (sum > target) {
        if (s.kept > 1 && d > -eps && (!pick || d > static_cast<double>(pick->kept) - pick->exact)) pick = &s;
      } else if (s.kept < s.cap && d < eps && (!pick || d < static_cast<double>(pick->kept) - pick->exact)) {
        pick = &s;
      }
    }
    if (!pick)
      throw ConfigError("fraction " + std::to_string(fraction) +
                        " cannot keep every class within one sample of its share");
    const long long step = sum > target ? -1 : 1;
    pick->kept += step;
    sum += step;
  }
  for (const auto& s : slots) t.per_class[s.c] = static_cast<std::size_t>(s.kept);
  return t;
}

// Stratified subset of the train+validation pool. Each class is shuffled once
// from the seed, so smaller fractions keep a subset of larger ones.
inline std::vector<std::string> reduce_labels(const std::vector<SlideRef>& pool, double fraction,
                                              std::uint64_t seed) {
  std::map<int, std::vector<std::string>> by_class;
  for (const auto& s : pool) by_class[s.label].push_back(s.id);
  if (fraction == 1.0) {
    std::vector<std::string> all;
    for (const auto& s : pool) all.push_back(s.id);
    return all;
  }
  std::map<int, std::size_t> counts;
  for (const auto& [c, ids] : by_class) counts[c] = ids.size();
  const auto targets = reduction_targets(counts, fraction);
  std::vector<std::string> kept_ids;
  for (auto& [c, ids] : by_class) {
    std::sort(ids.begin(), ids.end());
    Rng rng(seed, "reduce_labels:" + std::to_string(c));
    rng.shuffle(ids);
    const std::size_t take = targets.per_class.at(c);
    kept_ids.insert(kept_ids.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take));
  }
  // back in pool order
  std::vector<std::string> out;
  std::set<std::string> keep(kept_ids.begin(), kept_ids.end());
  for (const auto& s : pool)
    if (keep.count(s.id)) out.push_back(s.id);
  return out;
}

}  // namespace canvoi::eval
