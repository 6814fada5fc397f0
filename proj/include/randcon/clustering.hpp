#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "randcon/assignment.hpp"
#include "randcon/errors.hpp"
#include "randcon/matrix.hpp"
#include "randcon/parallel.hpp"
#include "randcon/rng.hpp"

namespace randcon {

struct KMeansOptions {
  std::size_t n_restarts = 100;
  std::size_t max_iters = 20;
  std::uint64_t seed = 0;
};

// Labels are 0-based cluster indices aligned with the input sample order.
struct ClusterResult {
  Matrix centroids;
  std::vector<int> labels;
  double db_index = 0.0;
  double inertia = 0.0;
  std::size_t n_runs = 0;
  std::size_t winning_run = 0;
  std::uint64_t seed = 0;
  std::vector<double> inertia_trace;  // winning run, one entry per Lloyd pass
  std::vector<double> restart_db;     // every restart; +inf where DB was undefined
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

struct LloydRun {
  Matrix centroids;
  std::vector<int> labels;
  double inertia = 0.0;
  std::vector<double> trace;
};

inline Matrix kmeans_plus_plus(const Matrix& x, std::size_t m, Philox& rng) {
  const std::size_t s = x.rows();
  Matrix centroids(m, x.cols());
  auto first = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(s) - 1));
  std::copy(x.row(first).begin(), x.row(first).end(), centroids.row(0).begin());
  std::vector<double> d2(s);
  for (std::size_t i = 0; i < s; ++i) d2[i] = squared_distance(x.row(i), centroids.row(0));
  for (std::size_t c = 1; c < m; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double cum = 0.0;
      pick = s;
      for (std::size_t i = 0; i < s; ++i) {
        if (d2[i] <= 0.0) continue;
        cum += d2[i];
        pick = i;
        if (cum > target) break;
      }
    } else {
      pick = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(s) - 1));
    }
    std::copy(x.row(pick).begin(), x.row(pick).end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < s; ++i) d2[i] = std::min(d2[i], squared_distance(x.row(i), centroids.row(c)));
  }
  return centroids;
}

inline LloydRun lloyd(const Matrix& x, std::size_t m, std::size_t max_iters, Philox& rng) {
  const std::size_t s = x.rows();
  const std::size_t dim = x.cols();
  LloydRun run{kmeans_plus_plus(x, m, rng), std::vector<int>(s, -1), 0.0, {}};
  std::vector<double> dist(s, 0.0);
  std::vector<std::size_t> counts(m);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    std::size_t changed = 0;
    for (std::size_t i = 0; i < s; ++i) {
      int best = 0;
      double best_d = squared_distance(x.row(i), run.centroids.row(0));
      for (std::size_t c = 1; c < m; ++c) {
        const double d = squared_distance(x.row(i), run.centroids.row(c));
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (run.labels[i] != best) ++changed;
      run.labels[i] = best;
      dist[i] = best_d;
    }
    if (changed == 0) break;

    std::fill(counts.begin(), counts.end(), 0);
    for (int l : run.labels) ++counts[static_cast<std::size_t>(l)];
    // An empty cluster takes over the sample farthest from its own centroid.
    for (std::size_t c = 0; c < m; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far = s;
      for (std::size_t i = 0; i < s; ++i) {
        if (counts[static_cast<std::size_t>(run.labels[i])] < 2) continue;
        if (far == s || dist[i] > dist[far]) far = i;
      }
      if (far == s) break;
      --counts[static_cast<std::size_t>(run.labels[far])];
      run.labels[far] = static_cast<int>(c);
      dist[far] = 0.0;
      counts[c] = 1;
    }

    Matrix sums(m, dim);
    for (std::size_t i = 0; i < s; ++i) {
      auto dst = sums.row(static_cast<std::size_t>(run.labels[i]));
      const auto src = x.row(i);
      for (std::size_t k = 0; k < dim; ++k) dst[k] += src[k];
    }
    for (std::size_t c = 0; c < m; ++c) {
      if (counts[c] == 0) continue;
      const double inv = 1.0 / static_cast<double>(counts[c]);
      auto dst = run.centroids.row(c);
      const auto src = sums.row(c);
      for (std::size_t k = 0; k < dim; ++k) dst[k] = src[k] * inv;
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < s; ++i)
      inertia += squared_distance(x.row(i), run.centroids.row(static_cast<std::size_t>(run.labels[i])));
    run.trace.push_back(inertia);
  }
  run.inertia = run.trace.empty() ? 0.0 : run.trace.back();
  return run;
}

// Lexicographic row order. Clustering runs on this canonical order so the
// result does not depend on how the caller ordered the samples.
inline std::vector<std::size_t> canonical_order(const Matrix& x) {
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = x.row(a), rb = x.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  return order;
}

}  // namespace detail

// Davies-Bouldin index: mean over clusters of the worst (s_i + s_j) / d_ij,
// with s_i the mean Euclidean distance of members to centroid i.
inline double davies_bouldin(const Matrix& samples, std::span<const int> labels, const Matrix& centroids) {
  const std::size_t m = centroids.rows();
  if (labels.size() != samples.rows()) throw DimensionError("one label per sample required");
  std::vector<double> scatter(m, 0.0);
  std::vector<std::size_t> counts(m, 0);
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || c >= m) throw ParameterError("label out of range for the given centroids");
    scatter[c] += std::sqrt(detail::squared_distance(samples.row(i), centroids.row(c)));
    ++counts[c];
  }
  std::vector<std::size_t> active;
  for (std::size_t c = 0; c < m; ++c)
    if (counts[c] > 0) {
      scatter[c] /= static_cast<double>(counts[c]);
      active.push_back(c);
    }
  if (active.size() < 2) throw ParameterError("Davies-Bouldin needs at least two non-empty clusters");
  double total = 0.0;
  for (std::size_t a : active) {
    double worst = 0.0;
    for (std::size_t b : active) {
      if (a == b) continue;
      const double d = std::sqrt(detail::squared_distance(centroids.row(a), centroids.row(b)));
      if (d == 0.0)
        throw DegenerateError("Davies-Bouldin undefined: centroids " + std::to_string(a) + " and " +
                              std::to_string(b) + " coincide");
      worst = std::max(worst, (scatter[a] + scatter[b]) / d);
    }
    total += worst;
  }
  return total / static_cast<double>(active.size());
}

// k-means++ seeded Lloyd fits, n_restarts times; the run with the lowest
// Davies-Bouldin index wins (ties go to the lower restart index).
inline ClusterResult kmeans(const Matrix& samples, std::size_t m, const KMeansOptions& opt = {}) {
  const std::size_t s = samples.rows();
  if (m < 2) throw ParameterError("k-means needs m >= 2 clusters");
  if (samples.cols() < 1) throw ParameterError("k-means needs at least one feature");
  if (s < m)
    throw ParameterError("k-means needs at least as many samples as clusters (S=" + std::to_string(s) +
                         ", m=" + std::to_string(m) + ")");
  if (opt.n_restarts < 1 || opt.max_iters < 1) throw ParameterError("k-means needs >= 1 restart and >= 1 iteration");
  bool all_same = true;
  for (std::size_t i = 1; i < s && all_same; ++i)
    all_same = std::equal(samples.row(i).begin(), samples.row(i).end(), samples.row(0).begin());
  if (all_same) throw DegenerateError("k-means degenerate: all samples are identical");

  const auto order = detail::canonical_order(samples);
  Matrix x(s, samples.cols());
  for (std::size_t i = 0; i < s; ++i) std::copy(samples.row(order[i]).begin(), samples.row(order[i]).end(), x.row(i).begin());

  std::vector<detail::LloydRun> runs(opt.n_restarts);
  std::vector<double> db(opt.n_restarts, std::numeric_limits<double>::infinity());
  parallel_for(opt.n_restarts, [&](std::size_t r) {
    auto rng = make_rng(derive_seed(opt.seed, r), Stream::kmeans);
    runs[r] = detail::lloyd(x, m, opt.max_iters, rng);
    try {
      db[r] = davies_bouldin(x, runs[r].labels, runs[r].centroids);
    } catch (const Error&) {
      db[r] = std::numeric_limits<double>::infinity();
    }
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < opt.n_restarts; ++r)
    if (db[r] < db[best]) best = r;
  if (!std::isfinite(db[best]))
    throw DegenerateError("k-means degenerate: no restart produced " + std::to_string(m) + " distinct clusters");

  ClusterResult out;
  out.centroids = runs[best].centroids;
  out.labels.assign(s, 0);
  for (std::size_t i = 0; i < s; ++i) out.labels[order[i]] = runs[best].labels[i];
  out.db_index = db[best];
  out.inertia = runs[best].inertia;
  out.n_runs = opt.n_restarts;
  out.winning_run = best;
  out.seed = opt.seed;
  out.inertia_trace = runs[best].trace;
  out.restart_db = std::move(db);
  return out;
}

struct ElbowResult {
  std::size_t k = 0;
  std::vector<std::size_t> ks;
  std::vector<double> inertias;
  bool monotone = true;  // false when inertia rose with k (a fit landed poorly)
};

// Point of maximum perpendicular distance to the chord between the first and
// last (k, inertia) points. Ties go to the smallest k.
inline std::size_t elbow_from_inertias(std::span<const std::size_t> ks, std::span<const double> inertias) {
  if (ks.size() != inertias.size() || ks.size() < 3) throw ParameterError("elbow needs at least three (k, inertia) points");
  const double x0 = static_cast<double>(ks.front()), y0 = inertias.front();
  const double x1 = static_cast<double>(ks.back()), y1 = inertias.back();
  const double dx = x1 - x0, dy = y1 - y0;
  const double norm = std::hypot(dx, dy);
  std::vector<double> dist(ks.size(), 0.0);
  double best = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    dist[i] = norm > 0.0 ? std::abs(dy * (static_cast<double>(ks[i]) - x0) - dx * (inertias[i] - y0)) / norm : 0.0;
    best = std::max(best, dist[i]);
  }
  double scale = 0.0;
  for (double v : inertias) scale = std::max(scale, std::abs(v));
  const double tol = 1e-12 * std::max({1.0, scale, std::abs(dx)});
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (dist[i] >= best - tol) return ks[i];
  return ks.front();
}

inline ElbowResult elbow_k(const Matrix& samples, std::size_t k_min, std::size_t k_max, const KMeansOptions& opt = {}) {
  if (k_min < 2 || k_max < k_min + 2) throw ParameterError("elbow needs k_min >= 2 and k_max >= k_min + 2");
  if (samples.rows() < k_max) throw ParameterError("elbow needs at least k_max samples");
  ElbowResult out;
  for (std::size_t k = k_min; k <= k_max; ++k) {
    out.ks.push_back(k);
    out.inertias.push_back(kmeans(samples, k, opt).inertia);
  }
  for (std::size_t i = 1; i < out.inertias.size(); ++i)
    if (out.inertias[i] > out.inertias[i - 1]) out.monotone = false;
  out.k = elbow_from_inertias(out.ks, out.inertias);
  return out;
}

// Estimated state e is matched to true state permutation[e].
struct StateMatching {
  std::vector<int> permutation;
  double total_distance = 0.0;
};

inline Matrix distance_matrix(const Matrix& a, const Matrix& b) {
  Matrix d(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) d(i, j) = std::sqrt(detail::squared_distance(a.row(i), b.row(j)));
  return d;
}

// Bijection minimizing the summed Euclidean distance between matched states.
inline StateMatching match_states(const Matrix& estimated, const Matrix& truth) {
  if (estimated.rows() != truth.rows())
    throw ParameterError("state count mismatch: " + std::to_string(estimated.rows()) + " estimated vs " +
                         std::to_string(truth.rows()) + " true");
  if (estimated.cols() != truth.cols()) throw ParameterError("state dimension mismatch");
  const Matrix cost = distance_matrix(estimated, truth);
  StateMatching out;
  out.permutation = lexicographic_min_assignment(cost);
  out.total_distance = assignment_cost(cost, out.permutation);
  return out;
}

// Principal-component scores via randomized subspace iteration. Offered for
// reducing very high-dimensional FC vectors before clustering.
struct Projection {
  Matrix scores;      // S x dims
  Matrix components;  // dims x D
  std::vector<double> mean;
};

inline Projection project_principal_components(const Matrix& samples, std::size_t dims, std::uint64_t seed,
                                               std::size_t power_iters = 4) {
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto s = static_cast<Eigen::Index>(samples.rows());
  const auto d = static_cast<Eigen::Index>(samples.cols());
  if (dims < 1 || static_cast<Eigen::Index>(dims) > std::min(s, d))
    throw ParameterError("projection dimension must be in [1, min(S, D)]");
  Mat x = Eigen::Map<const Mat>(samples.data(), s, d);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;

  const auto l = std::min<Eigen::Index>(static_cast<Eigen::Index>(dims) + 8, std::min(s, d));
  Mat omega(d, l);
  auto rng = make_rng(seed, Stream::projection);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < l; ++j) omega(i, j) = standard_normal(rng);
  Mat q = Eigen::HouseholderQR<Mat>(x * omega).householderQ() * Mat::Identity(s, l);
  for (std::size_t it = 0; it < power_iters; ++it) {
    Mat z = Eigen::HouseholderQR<Mat>(x.transpose() * q).householderQ() * Mat::Identity(d, l);
    q = Eigen::HouseholderQR<Mat>(x * z).householderQ() * Mat::Identity(s, l);
  }
  const Mat b = q.transpose() * x;
  Eigen::JacobiSVD<Mat> svd(b, Eigen::ComputeThinV);
  Mat v = svd.matrixV().leftCols(static_cast<Eigen::Index>(dims));
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    Eigen::Index arg = 0;
    v.col(c).cwiseAbs().maxCoeff(&arg);
    if (v(arg, c) < 0) v.col(c) *= -1.0;
  }
  const Mat scores = x * v;
  Projection p;
  p.scores = Matrix(samples.rows(), dims, std::vector<double>(scores.data(), scores.data() + scores.size()));
  const Mat comp = v.transpose();
  p.components = Matrix(dims, samples.cols(), std::vector<double>(comp.data(), comp.data() + comp.size()));
  p.mean.assign(mean.data(), mean.data() + mean.size());
  return p;
}

}  // namespace randcon
