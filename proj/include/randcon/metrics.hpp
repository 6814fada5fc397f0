#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "randcon/clustering.hpp"
#include "randcon/connectivity.hpp"
#include "randcon/errors.hpp"
#include "randcon/stats.hpp"

namespace randcon {

// Cluster-by-truth counts n_ij with marginals a_i (rows) and b_j (columns).
struct ContingencyTable {
  std::vector<int> row_labels;
  std::vector<int> col_labels;
  std::vector<std::vector<std::int64_t>> counts;
  std::vector<std::int64_t> row_sums;
  std::vector<std::int64_t> col_sums;
  std::int64_t total = 0;
};

inline ContingencyTable contingency(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ParameterError("labelings differ in length");
  std::map<int, std::size_t> ra, rb;
  for (int v : a) ra.emplace(v, 0);
  for (int v : b) rb.emplace(v, 0);
  ContingencyTable t;
  for (auto& [label, idx] : ra) {
    idx = t.row_labels.size();
    t.row_labels.push_back(label);
  }
  for (auto& [label, idx] : rb) {
    idx = t.col_labels.size();
    t.col_labels.push_back(label);
  }
  t.counts.assign(ra.size(), std::vector<std::int64_t>(rb.size(), 0));
  t.row_sums.assign(ra.size(), 0);
  t.col_sums.assign(rb.size(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto r = ra[a[i]], c = rb[b[i]];
    ++t.counts[r][c];
    ++t.row_sums[r];
    ++t.col_sums[c];
  }
  t.total = static_cast<std::int64_t>(a.size());
  return t;
}

// Adjusted Rand index from the contingency table, in exact integer
// arithmetic up to the final division. Returns 1 when both partitions are
// trivially equal (the index is 0/0 there).
inline double ari(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ParameterError("ARI needs labelings of equal length");
  if (a.size() < 2) throw ParameterError("ARI needs at least 2 samples");
  const auto t = contingency(a, b);
  using i128 = __int128;
  auto c2 = [](std::int64_t n) { return static_cast<i128>(n) * (n - 1) / 2; };
  i128 sum_ij = 0, sum_a = 0, sum_b = 0;
  for (const auto& row : t.counts)
    for (auto v : row) sum_ij += c2(v);
  for (auto v : t.row_sums) sum_a += c2(v);
  for (auto v : t.col_sums) sum_b += c2(v);
  const i128 pairs = c2(t.total);
  // Both terms multiplied by 2 * C(n, 2).
  const i128 num = 2 * (sum_ij * pairs - sum_a * sum_b);
  const i128 den = (sum_a + sum_b) * pairs - 2 * sum_a * sum_b;
  if (den == 0) return 1.0;
  return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
}

// Fraction of time points whose matched estimated label equals the truth.
// Labels are 0-based; estimated label e maps to matching.permutation[e].
inline double overlap_ratio(std::span<const int> est, std::span<const int> truth, const StateMatching& matching) {
  if (est.size() != truth.size()) throw ParameterError("overlap ratio needs equal-length label sequences");
  if (est.empty()) throw ParameterError("overlap ratio of empty sequences");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (est[i] < 0 || static_cast<std::size_t>(est[i]) >= matching.permutation.size())
      throw ParameterError("estimated label " + std::to_string(est[i]) + " is outside the matching");
    if (matching.permutation[static_cast<std::size_t>(est[i])] == truth[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(est.size());
}

inline std::vector<int> apply_matching(std::span<const int> est, const StateMatching& matching) {
  std::vector<int> out(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (est[i] < 0 || static_cast<std::size_t>(est[i]) >= matching.permutation.size())
      throw ParameterError("estimated label " + std::to_string(est[i]) + " is outside the matching");
    out[i] = matching.permutation[static_cast<std::size_t>(est[i])];
  }
  return out;
}

// A matched (estimated, true) pair of state vectors.
struct StatePair {
  std::vector<double> a;
  std::vector<double> b;
};

inline std::vector<StatePair> matched_pairs(const Matrix& estimated, const Matrix& truth, const StateMatching& matching) {
  std::vector<StatePair> pairs;
  for (std::size_t e = 0; e < estimated.rows(); ++e) {
    const auto est = estimated.row(e);
    const auto tru = truth.row(static_cast<std::size_t>(matching.permutation.at(e)));
    pairs.push_back({{est.begin(), est.end()}, {tru.begin(), tru.end()}});
  }
  return pairs;
}

inline void check_pairs(std::span<const StatePair> pairs) {
  if (pairs.empty()) throw ParameterError("no state pairs given");
  for (const auto& p : pairs) {
    if (p.a.size() != p.b.size() || p.a.empty()) throw ParameterError("state pair vectors must be non-empty and equal length");
    for (std::size_t i = 0; i < p.a.size(); ++i)
      if (!std::isfinite(p.a[i]) || !std::isfinite(p.b[i])) throw ParameterError("state vectors must be finite");
  }
}

// Mean over states of (1/n) sum (A_i - B_i)^2.
inline double state_mse(std::span<const StatePair> pairs) {
  check_pairs(pairs);
  double total = 0.0;
  for (const auto& p : pairs) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.a.size(); ++i) acc += (p.a[i] - p.b[i]) * (p.a[i] - p.b[i]);
    total += acc / static_cast<double>(p.a.size());
  }
  return total / static_cast<double>(pairs.size());
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw DegenerateError("cosine similarity of a zero-norm vector");
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

// Mean over states of the cosine similarity between matched vectors.
inline double state_cosine(std::span<const StatePair> pairs) {
  check_pairs(pairs);
  double total = 0.0;
  for (std::size_t s = 0; s < pairs.size(); ++s) {
    try {
      total += cosine_similarity(pairs[s].a, pairs[s].b);
    } catch (const DegenerateError&) {
      throw DegenerateError("cosine similarity undefined: state " + std::to_string(s) + " has a zero-norm vector");
    }
  }
  return total / static_cast<double>(pairs.size());
}

// Maximal runs of each label, per state (labels 0 .. m-1).
inline std::vector<std::vector<std::size_t>> run_lengths(std::span<const int> seq, std::size_t m) {
  std::vector<std::vector<std::size_t>> runs(m);
  for (std::size_t i = 0; i < seq.size();) {
    std::size_t j = i;
    while (j < seq.size() && seq[j] == seq[i]) ++j;
    if (seq[i] < 0 || static_cast<std::size_t>(seq[i]) >= m) throw ParameterError("label out of range");
    runs[static_cast<std::size_t>(seq[i])].push_back(j - i);
    i = j;
  }
  return runs;
}

enum class KlDirection { estimated_to_true, true_to_estimated };

struct SojournKl {
  double value = 0.0;               // mean over included states
  std::vector<double> per_state;    // NaN for excluded states
  std::vector<int> excluded;        // states absent from both sides
  KlDirection direction = KlDirection::estimated_to_true;
};

// Dwell-time ("sojourn") distributions per state with additive smoothing
// alpha over the union support 1..L (L = longest run seen on either side),
// compared with KL(P_est || P_true) by default. Runs never cross segment
// boundaries, so pass one segment per subject.
inline SojournKl sojourn_kl(std::span<const std::vector<int>> est_segments,
                            std::span<const std::vector<int>> true_segments, std::size_t m, double alpha = 1.0,
                            KlDirection direction = KlDirection::estimated_to_true) {
  if (est_segments.empty() || true_segments.empty()) throw ParameterError("sojourn KL needs non-empty sequences");
  if (!(alpha > 0.0)) throw ParameterError("smoothing alpha must be positive");
  std::vector<std::vector<std::size_t>> est(m), tru(m);
  for (const auto& s : est_segments) {
    auto r = run_lengths(s, m);
    for (std::size_t k = 0; k < m; ++k) est[k].insert(est[k].end(), r[k].begin(), r[k].end());
  }
  for (const auto& s : true_segments) {
    auto r = run_lengths(s, m);
    for (std::size_t k = 0; k < m; ++k) tru[k].insert(tru[k].end(), r[k].begin(), r[k].end());
  }
  SojournKl out;
  out.direction = direction;
  out.per_state.assign(m, std::nan(""));
  double sum = 0.0;
  std::size_t included = 0;
  for (std::size_t k = 0; k < m; ++k) {
    if (est[k].empty() && tru[k].empty()) {
      out.excluded.push_back(static_cast<int>(k));
      continue;
    }
    std::size_t longest = 0;
    for (auto v : est[k]) longest = std::max(longest, v);
    for (auto v : tru[k]) longest = std::max(longest, v);
    std::vector<double> p(longest, alpha), q(longest, alpha);
    for (auto v : est[k]) p[v - 1] += 1.0;
    for (auto v : tru[k]) q[v - 1] += 1.0;
    const double zp = static_cast<double>(est[k].size()) + alpha * static_cast<double>(longest);
    const double zq = static_cast<double>(tru[k].size()) + alpha * static_cast<double>(longest);
    if (direction == KlDirection::true_to_estimated) std::swap(p, q);
    const double norm_p = direction == KlDirection::true_to_estimated ? zq : zp;
    const double norm_q = direction == KlDirection::true_to_estimated ? zp : zq;
    double kl = 0.0;
    for (std::size_t i = 0; i < longest; ++i) {
      const double pi = p[i] / norm_p, qi = q[i] / norm_q;
      kl += pi * std::log(pi / qi);
    }
    kl = std::max(kl, 0.0);
    out.per_state[k] = kl;
    sum += kl;
    ++included;
  }
  out.value = included ? sum / static_cast<double>(included) : 0.0;
  return out;
}

inline SojournKl sojourn_kl(std::span<const int> est, std::span<const int> truth, std::size_t m, double alpha = 1.0,
                            KlDirection direction = KlDirection::estimated_to_true) {
  const std::vector<std::vector<int>> e{{est.begin(), est.end()}}, t{{truth.begin(), truth.end()}};
  return sojourn_kl(e, t, m, alpha, direction);
}

inline std::vector<double> fraction_of_time(std::span<const int> seq, std::size_t m) {
  if (seq.empty()) throw ParameterError("fraction of time of an empty sequence");
  std::vector<double> frac(m, 0.0);
  for (int l : seq) {
    if (l < 0 || static_cast<std::size_t>(l) >= m) throw ParameterError("label out of range");
    frac[static_cast<std::size_t>(l)] += 1.0;
  }
  for (double& f : frac) f /= static_cast<double>(seq.size());
  return frac;
}

struct DwellTimes {
  std::vector<double> mean;          // 0 for states never visited
  std::vector<std::size_t> runs;     // number of runs per state
  std::vector<bool> visited;
};

inline DwellTimes mean_dwell_time(std::span<const int> seq, std::size_t m) {
  const auto runs = run_lengths(seq, m);
  DwellTimes out{std::vector<double>(m, 0.0), std::vector<std::size_t>(m, 0), std::vector<bool>(m, false)};
  for (std::size_t k = 0; k < m; ++k) {
    out.runs[k] = runs[k].size();
    if (runs[k].empty()) continue;
    out.visited[k] = true;
    double total = 0.0;
    for (auto r : runs[k]) total += static_cast<double>(r);
    out.mean[k] = total / static_cast<double>(runs[k].size());
  }
  return out;
}

// Mean over upper-triangle connections of each connection's temporal
// (population) standard deviation.
inline double fc_variability(const FcSeries& fcs) {
  if (fcs.frames() < 2) throw ParameterError("FC variability needs at least 2 frames");
  const std::size_t n = fcs.n();
  const double frames = static_cast<double>(fcs.frames());
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t k = m + 1; k < n; ++k) {
      double mean = 0.0;
      for (std::size_t t = 0; t < fcs.frames(); ++t) mean += fcs.at(t, m, k);
      mean /= frames;
      double ss = 0.0;
      for (std::size_t t = 0; t < fcs.frames(); ++t) ss += (fcs.at(t, m, k) - mean) * (fcs.at(t, m, k) - mean);
      total += std::sqrt(ss / frames);
      ++count;
    }
  return count ? total / static_cast<double>(count) : 0.0;
}

inline constexpr double kFisherClip = 1.0 - 1e-7;

// Mean cosine similarity between each Fisher-transformed frame and the
// temporal mean of the transformed frames (lower triangle). A zero frame
// contributes similarity 0.
inline double centroid_similarity(const FcSeries& fcs) {
  if (fcs.frames() < 2) throw ParameterError("centroid similarity needs at least 2 frames");
  const std::size_t n = fcs.n();
  const std::size_t d = lower_tri_length(n);
  Matrix z(fcs.frames(), d);
  std::vector<double> mean(d, 0.0);
  for (std::size_t t = 0; t < fcs.frames(); ++t) {
    vectorize_lower_into(fcs.frame(t), n, z.row(t));
    for (std::size_t i = 0; i < d; ++i) {
      double& v = z(t, i);
      v = std::atanh(std::clamp(v, -kFisherClip, kFisherClip));
      mean[i] += v;
    }
  }
  double norm = 0.0;
  for (double& v : mean) {
    v /= static_cast<double>(fcs.frames());
    norm += v * v;
  }
  if (norm == 0.0 || norm < 1e-24 * static_cast<double>(d))
    throw DegenerateError("centroid similarity undefined: the mean connectivity vector has zero norm");
  double total = 0.0;
  for (std::size_t t = 0; t < fcs.frames(); ++t) {
    try {
      total += cosine_similarity(z.row(t), mean);
    } catch (const DegenerateError&) {
    }
  }
  return total / static_cast<double>(fcs.frames());
}

}  // namespace randcon
