#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "randcon/errors.hpp"

namespace randcon {

enum class Alternative { two_sided, greater, less };

// Midranks (1-based) of |values|; tied magnitudes share the average rank.
inline std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct SignedRankResult {
  double w_plus = 0.0;
  double w_minus = 0.0;
  double statistic = 0.0;  // w_plus - w_minus; sign gives the effect direction of a - b
  double p_value = 1.0;
  std::size_t n_used = 0;  // non-zero differences
  bool exact = false;
  bool all_zero = false;
};

// Wilcoxon signed-rank test on paired samples (differences a - b; zero
// differences dropped). Exact null distribution for up to 25 non-zero
// differences, normal approximation with tie and continuity correction above.
inline SignedRankResult paired_group_compare(std::span<const double> a, std::span<const double> b,
                                             Alternative alt = Alternative::two_sided) {
  if (a.size() != b.size()) throw ParameterError("paired comparison needs equal-length inputs");
  if (a.size() < 6) throw ParameterError("paired comparison needs at least 6 pairs");
  std::vector<double> diff;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] - b[i] != 0.0) diff.push_back(a[i] - b[i]);
  SignedRankResult out;
  out.n_used = diff.size();
  if (diff.empty()) {
    out.all_zero = true;
    return out;
  }
  std::vector<double> mags(diff.size());
  std::transform(diff.begin(), diff.end(), mags.begin(), [](double d) { return std::abs(d); });
  const auto ranks = midranks(mags);
  for (std::size_t i = 0; i < diff.size(); ++i) (diff[i] > 0 ? out.w_plus : out.w_minus) += ranks[i];
  out.statistic = out.w_plus - out.w_minus;
  const std::size_t n = diff.size();

  double p_upper = 1.0, p_lower = 1.0;  // P(W+ >= observed), P(W+ <= observed)
  if (n <= 25) {
    out.exact = true;
    // Doubled ranks are integers even with midranks.
    std::vector<std::size_t> r2(n);
    std::size_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      r2[i] = static_cast<std::size_t>(std::llround(2.0 * ranks[i]));
      total += r2[i];
    }
    std::vector<double> ways(total + 1, 0.0);
    ways[0] = 1.0;
    for (std::size_t r : r2)
      for (std::size_t s = total; s >= r; --s) {
        ways[s] += ways[s - r];
        if (s == r) break;
      }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    const auto observed = static_cast<std::size_t>(std::llround(2.0 * out.w_plus));
    double up = 0.0, lo = 0.0;
    for (std::size_t s = 0; s <= total; ++s) {
      if (s >= observed) up += ways[s];
      if (s <= observed) lo += ways[s];
    }
    p_upper = up / all;
    p_lower = lo / all;
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    double ties = 0.0;
    auto sorted = mags;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      ties += t * t * t - t;
      i = j;
    }
    const double sd = std::sqrt(nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - ties / 48.0);
    p_upper = 1.0 - normal_cdf((out.w_plus - mean - 0.5) / sd);
    p_lower = normal_cdf((out.w_plus - mean + 0.5) / sd);
  }
  switch (alt) {
    case Alternative::greater: out.p_value = std::min(1.0, p_upper); break;
    case Alternative::less: out.p_value = std::min(1.0, p_lower); break;
    case Alternative::two_sided: out.p_value = std::min(1.0, 2.0 * std::min(p_upper, p_lower)); break;
  }
  return out;
}

struct RankSumResult {
  double u = 0.0;  // Mann-Whitney U of sample a
  double z = 0.0;
  double p_value = 1.0;
};

// Mann-Whitney U test for two independent samples (normal approximation with
// tie and continuity correction).
inline RankSumResult unpaired_group_compare(std::span<const double> a, std::span<const double> b,
                                            Alternative alt = Alternative::two_sided) {
  if (a.size() < 2 || b.size() < 2) throw ParameterError("unpaired comparison needs at least 2 values per group");
  std::vector<double> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  const auto ranks = midranks(all);
  const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size()), n = n1 + n2;
  double r1 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r1 += ranks[i];
  RankSumResult out;
  out.u = r1 - n1 * (n1 + 1.0) / 2.0;
  auto sorted = all;
  std::sort(sorted.begin(), sorted.end());
  double ties = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    i = j;
  }
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
  if (!(var > 0.0)) return out;
  const double mean = n1 * n2 / 2.0;
  const double sd = std::sqrt(var);
  const double p_upper = 1.0 - normal_cdf((out.u - mean - 0.5) / sd);
  const double p_lower = normal_cdf((out.u - mean + 0.5) / sd);
  out.z = (out.u - mean) / sd;
  switch (alt) {
    case Alternative::greater: out.p_value = std::min(1.0, p_upper); break;
    case Alternative::less: out.p_value = std::min(1.0, p_lower); break;
    case Alternative::two_sided: out.p_value = std::min(1.0, 2.0 * std::min(p_upper, p_lower)); break;
  }
  return out;
}

// "*", "**", "***" for p below 0.05, 0.01, 0.001.
inline const char* significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

}  // namespace randcon
