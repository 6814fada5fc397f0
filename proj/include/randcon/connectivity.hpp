#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "randcon/convolution.hpp"
#include "randcon/errors.hpp"
#include "randcon/hilbert.hpp"
#include "randcon/matrix.hpp"
#include "randcon/parallel.hpp"
#include "randcon/timeseries.hpp"

namespace randcon {

enum class FcMethod { randcon, sliding_window, mtd, phase_sync };

inline std::string to_string(FcMethod m) {
  switch (m) {
    case FcMethod::randcon: return "randcon";
    case FcMethod::sliding_window: return "sliding-window";
    case FcMethod::mtd: return "mtd";
    case FcMethod::phase_sync: return "phase-sync";
  }
  return "randcon";
}

inline FcMethod fc_method_from_string(const std::string& s) {
  if (s == "randcon") return FcMethod::randcon;
  if (s == "sliding-window" || s == "sliding_window" || s == "sw") return FcMethod::sliding_window;
  if (s == "mtd") return FcMethod::mtd;
  if (s == "phase-sync" || s == "phase_sync") return FcMethod::phase_sync;
  throw ParameterError("unknown method '" + s + "' (expected randcon, sliding-window, mtd or phase-sync)");
}

// Correlation-type methods guarantee unit diagonal and [-1, 1] entries.
inline bool is_bounded(FcMethod m) noexcept { return m != FcMethod::mtd; }

struct FcParams {
  std::size_t width = 0;         // window / kernel width
  std::size_t stride = 1;
  std::size_t kernel_count = 0;  // randcon only
  Padding padding = Padding::valid;
  std::size_t avg_window = 0;    // mtd moving average; phase-sync smoothing (0 = none)
  std::uint64_t seed = 0;        // kernel bank seed

  friend bool operator==(const FcParams&, const FcParams&) = default;
};

// One N x N connectivity matrix.
class FcMatrix {
 public:
  FcMatrix(Matrix values, FcMethod method) : values_(std::move(values)), method_(method) {
    if (values_.rows() != values_.cols()) throw DimensionError("FC matrix must be square");
  }
  std::size_t n() const noexcept { return values_.rows(); }
  const Matrix& values() const noexcept { return values_; }
  double operator()(std::size_t m, std::size_t n) const noexcept { return values_(m, n); }
  FcMethod method() const noexcept { return method_; }

 private:
  Matrix values_;
  FcMethod method_;
};

// Time-ordered FC matrices stored contiguously, frame-major.
class FcSeries {
 public:
  FcSeries(std::size_t n, std::size_t frames, FcMethod method, FcParams params)
      : n_(n), frames_(frames), method_(method), params_(params), data_(n * n * frames, 0.0) {}
  FcSeries(std::size_t n, std::size_t frames, FcMethod method, FcParams params,
           std::vector<double> data, std::uint64_t degenerate_pairs)
      : n_(n), frames_(frames), method_(method), params_(params), data_(std::move(data)),
        degenerate_(degenerate_pairs) {
    if (data_.size() != n_ * n_ * frames_) throw DimensionError("FC payload size does not match N*N*T'");
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t frames() const noexcept { return frames_; }
  FcMethod method() const noexcept { return method_; }
  const FcParams& params() const noexcept { return params_; }
  std::uint64_t degenerate_pairs() const noexcept { return degenerate_; }
  void add_degenerate(std::uint64_t count) noexcept { degenerate_ += count; }

  std::span<double> frame(std::size_t t) noexcept { return {data_.data() + t * n_ * n_, n_ * n_}; }
  std::span<const double> frame(std::size_t t) const noexcept {
    return {data_.data() + t * n_ * n_, n_ * n_};
  }
  double at(std::size_t t, std::size_t m, std::size_t n) const noexcept {
    return data_[(t * n_ + m) * n_ + n];
  }
  FcMatrix matrix(std::size_t t) const {
    auto f = frame(t);
    return FcMatrix(Matrix(n_, n_, std::vector<double>(f.begin(), f.end())), method_);
  }
  const std::vector<double>& values() const noexcept { return data_; }

  // Original time index that frame t is centred on.
  std::size_t center(std::size_t t) const noexcept {
    const std::size_t start = t * params_.stride;
    switch (method_) {
      case FcMethod::randcon:
        return params_.padding == Padding::same ? start : start + (params_.width - 1) / 2;
      case FcMethod::sliding_window: return start + (params_.width - 1) / 2;
      case FcMethod::mtd: return start + 1 + (params_.avg_window - 1) / 2;
      case FcMethod::phase_sync:
        return params_.avg_window > 1 ? start + (params_.avg_window - 1) / 2 : start;
    }
    return start;
  }

  friend bool operator==(const FcSeries&, const FcSeries&) = default;

 private:
  std::size_t n_;
  std::size_t frames_;
  FcMethod method_;
  FcParams params_;
  std::vector<double> data_;
  std::uint64_t degenerate_ = 0;
};

namespace detail {

// Centres and normalizes each row of `rows` in place. Rows with no spread are
// zeroed and reported through `degenerate`.
inline void normalize_rows(Matrix& rows, std::vector<char>& degenerate) {
  degenerate.assign(rows.rows(), 0);
  const double len = static_cast<double>(rows.cols());
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    auto v = rows.row(r);
    double mean = 0.0, raw = 0.0;
    for (double x : v) {
      mean += x;
      raw += x * x;
    }
    mean /= len;
    double ss = 0.0;
    for (double& x : v) {
      x -= mean;
      ss += x * x;
    }
    if (ss == 0.0 || ss <= 1e-26 * raw) {
      degenerate[r] = 1;
      std::fill(v.begin(), v.end(), 0.0);
      continue;
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (double& x : v) x *= inv;
  }
}

// Pearson correlation between every pair of rows, written into an N x N frame.
// Returns the number of pairs zeroed because a row had no variance.
inline std::uint64_t correlation_frame(Matrix rows, std::span<double> out) {
  std::vector<char> degenerate;
  normalize_rows(rows, degenerate);
  const std::size_t n = rows.rows();
  std::uint64_t count = 0;
  for (std::size_t m = 0; m < n; ++m) {
    out[m * n + m] = 1.0;
    const auto a = rows.row(m);
    for (std::size_t k = 0; k < m; ++k) {
      double r = 0.0;
      if (degenerate[m] || degenerate[k]) {
        ++count;
      } else {
        const auto b = rows.row(k);
        for (std::size_t i = 0; i < a.size(); ++i) r += a[i] * b[i];
        r = std::clamp(r, -1.0, 1.0);
      }
      out[m * n + k] = r;
      out[k * n + m] = r;
    }
  }
  return count;
}

inline std::size_t window_count(std::size_t t, std::size_t width, std::size_t stride) {
  return (t - width) / stride + 1;
}

}  // namespace detail

// Pearson correlation across the K kernel features of every ROI pair, one
// matrix per output time point.
inline FcSeries randcon_fc(const FeatureTensor& features, std::size_t stride = 1,
                           std::uint64_t bank_seed = 0) {
  const std::size_t k = features.kernels();
  if (k < 2) throw ParameterError("randcon needs K >= 2 kernels (correlation over one feature is undefined)");
  if (stride < 1) throw ParameterError("stride must be >= 1");
  const std::size_t n = features.rois();
  const std::size_t frames = features.timepoints() == 0 ? 0 : (features.timepoints() - 1) / stride + 1;
  FcParams params{features.kernel_width(), stride, k, features.padding(), 0, bank_seed};
  FcSeries out(n, frames, FcMethod::randcon, params);
  std::vector<std::uint64_t> degenerate(frames, 0);
  parallel_for(frames, [&](std::size_t f) {
    degenerate[f] = detail::correlation_frame(features.slice(f * stride), out.frame(f));
  });
  for (auto d : degenerate) out.add_degenerate(d);
  return out;
}

inline FcSeries randcon_fc(const RoiTimeSeries& ts, const KernelBank& bank, Padding padding,
                           std::size_t stride = 1) {
  return randcon_fc(convolve(ts, bank, padding), stride, bank.seed());
}

// Pearson correlation over length-`width` segments starting at 0, stride, ...
inline FcSeries sliding_window_fc(const RoiTimeSeries& ts, std::size_t width, std::size_t stride = 1) {
  const std::size_t t = ts.n_timepoints();
  if (width < 2 || width > t)
    throw ParameterError("sliding window needs 2 <= width <= T (width=" + std::to_string(width) +
                         ", T=" + std::to_string(t) + ")");
  if (stride < 1) throw ParameterError("stride must be >= 1");
  const std::size_t n = ts.n_rois();
  const std::size_t frames = detail::window_count(t, width, stride);
  FcSeries out(n, frames, FcMethod::sliding_window, FcParams{width, stride, 0, Padding::valid, 0, 0});
  std::vector<std::uint64_t> degenerate(frames, 0);
  parallel_for(frames, [&](std::size_t f) {
    const std::size_t start = f * stride;
    Matrix segment(n, width);
    for (std::size_t r = 0; r < n; ++r) {
      const auto x = ts.roi(r);
      std::copy(x.begin() + static_cast<std::ptrdiff_t>(start),
                x.begin() + static_cast<std::ptrdiff_t>(start + width), segment.row(r).begin());
    }
    degenerate[f] = detail::correlation_frame(std::move(segment), out.frame(f));
  });
  for (auto d : degenerate) out.add_degenerate(d);
  return out;
}

// Multiplication of temporal derivatives. Derivatives dt_n(t) = x_n(t) -
// x_n(t-1) are scaled by their whole-series population standard deviation;
// the coupling dt_m*dt_n is then averaged over `avg_window` consecutive
// derivative samples, one output per window start (step `stride`).
inline FcSeries mtd_fc(const RoiTimeSeries& ts, std::size_t avg_window, std::size_t stride = 1) {
  const std::size_t t = ts.n_timepoints();
  if (t < 3) throw ParameterError("MTD needs T >= 3");
  if (avg_window < 1 || avg_window > t - 1)
    throw ParameterError("MTD averaging window must be in [1, T-1]");
  if (stride < 1) throw ParameterError("stride must be >= 1");
  const std::size_t n = ts.n_rois();
  const std::size_t len = t - 1;

  Matrix deriv(n, len);
  std::vector<char> constant(n, 0);
  std::uint64_t degenerate_rois = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto x = ts.roi(r);
    auto d = deriv.row(r);
    double mean = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      d[i] = x[i + 1] - x[i];
      mean += d[i];
    }
    mean /= static_cast<double>(len);
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(len));
    if (!(sd > 0.0)) {
      constant[r] = 1;
      ++degenerate_rois;
      std::fill(d.begin(), d.end(), 0.0);
      continue;
    }
    for (double& v : d) v /= sd;
  }

  const std::size_t frames = detail::window_count(len, avg_window, stride);
  FcSeries out(n, frames, FcMethod::mtd, FcParams{avg_window, stride, 0, Padding::valid, avg_window, 0});
  const double inv = 1.0 / static_cast<double>(avg_window);
  parallel_for(frames, [&](std::size_t f) {
    const std::size_t start = f * stride;
    auto frame = out.frame(f);
    for (std::size_t m = 0; m < n; ++m) {
      const auto a = deriv.row(m);
      for (std::size_t k = 0; k <= m; ++k) {
        const auto b = deriv.row(k);
        double acc = 0.0;
        for (std::size_t i = start; i < start + avg_window; ++i) acc += a[i] * b[i];
        frame[m * n + k] = frame[k * n + m] = acc * inv;
      }
    }
  });
  // Every pair touching a constant ROI, counted once per frame.
  if (degenerate_rois > 0) {
    std::uint64_t pairs = 0;
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t k = 0; k < m; ++k)
        if (constant[m] || constant[k]) ++pairs;
    out.add_degenerate(pairs * frames);
  }
  return out;
}

// Cosine of instantaneous phase differences from the analytic signal. With
// smooth_window > 1 the frames are additionally averaged over that many
// consecutive time points.
inline FcSeries phase_sync_fc(const RoiTimeSeries& ts, std::size_t smooth_window = 0) {
  const std::size_t t = ts.n_timepoints();
  if (t < 8) throw ParameterError("phase synchronization needs T >= 8");
  if (smooth_window > t) throw ParameterError("phase smoothing window exceeds T");
  const std::size_t n = ts.n_rois();
  Matrix phase(n, t);
  std::vector<char> silent(n, 0);
  parallel_for(n, [&](std::size_t r) {
    const auto x = ts.roi(r);
    if (std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; })) {
      silent[r] = 1;
      return;
    }
    const auto p = instantaneous_phase(x);
    std::copy(p.begin(), p.end(), phase.row(r).begin());
  });

  const std::size_t span = smooth_window > 1 ? smooth_window : 1;
  const std::size_t frames = t - span + 1;
  FcSeries out(n, frames, FcMethod::phase_sync,
               FcParams{0, 1, 0, Padding::valid, smooth_window > 1 ? smooth_window : 0, 0});
  std::uint64_t silent_pairs = 0;
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t k = 0; k < m; ++k)
      if (silent[m] || silent[k]) ++silent_pairs;
  out.add_degenerate(silent_pairs * frames);

  parallel_for(frames, [&](std::size_t f) {
    auto frame = out.frame(f);
    for (std::size_t m = 0; m < n; ++m) {
      frame[m * n + m] = 1.0;
      for (std::size_t k = 0; k < m; ++k) {
        double acc = 0.0;
        if (!silent[m] && !silent[k]) {
          for (std::size_t i = f; i < f + span; ++i) acc += std::cos(phase(m, i) - phase(k, i));
          acc /= static_cast<double>(span);
        }
        frame[m * n + k] = frame[k * n + m] = acc;
      }
    }
  });
  return out;
}

// Strictly-lower triangle of an FC matrix, row-major (m > n).
struct LowerTriVector {
  std::vector<double> values;
  std::size_t n = 0;
};

inline std::size_t lower_tri_length(std::size_t n) noexcept { return n * (n - 1) / 2; }

inline void vectorize_lower_into(std::span<const double> frame, std::size_t n, std::span<double> out) {
  std::size_t i = 0;
  for (std::size_t m = 1; m < n; ++m)
    for (std::size_t k = 0; k < m; ++k) out[i++] = frame[m * n + k];
}

inline LowerTriVector vectorize_lower(const FcMatrix& fc) {
  LowerTriVector v{std::vector<double>(lower_tri_length(fc.n())), fc.n()};
  vectorize_lower_into(fc.values().values(), fc.n(), v.values);
  return v;
}

inline std::size_t dimension_from_lower_length(std::size_t len) {
  const auto n = static_cast<std::size_t>(std::llround((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(len))) / 2.0));
  if (n * (n - 1) / 2 != len)
    throw DimensionError("length " + std::to_string(len) + " is not N(N-1)/2 for any integer N");
  return n;
}

inline Matrix devectorize_lower(std::span<const double> v) {
  const std::size_t n = dimension_from_lower_length(v.size());
  Matrix out(n, n);
  std::size_t i = 0;
  for (std::size_t m = 0; m < n; ++m) {
    out(m, m) = 1.0;
    for (std::size_t k = 0; k < m; ++k) out(m, k) = out(k, m) = v[i++];
  }
  return out;
}

inline FcMatrix devectorize_lower(const LowerTriVector& v, FcMethod method = FcMethod::randcon) {
  auto m = devectorize_lower(std::span<const double>(v.values));
  if (v.n != 0 && m.rows() != v.n) throw DimensionError("lower-triangle vector does not match its N");
  return FcMatrix(std::move(m), method);
}

// Frames x N(N-1)/2 sample matrix for clustering.
inline Matrix lower_tri_samples(const FcSeries& fcs) {
  Matrix out(fcs.frames(), lower_tri_length(fcs.n()));
  for (std::size_t t = 0; t < fcs.frames(); ++t) vectorize_lower_into(fcs.frame(t), fcs.n(), out.row(t));
  return out;
}

// Expected number of frames for a method on a length-T series.
inline std::size_t expected_frames(FcMethod method, const FcParams& p, std::size_t t) {
  if (p.stride < 1) throw ParameterError("stride must be >= 1");
  auto fits = [&](std::size_t len, std::size_t w) {
    if (w > len) throw ParameterError(to_string(method) + " window of " + std::to_string(w) + " exceeds the " +
                                      std::to_string(len) + " available time points");
  };
  switch (method) {
    case FcMethod::randcon:
      if (p.padding == Padding::valid) fits(t, p.width);
      break;
    case FcMethod::sliding_window: fits(t, p.width); break;
    case FcMethod::mtd: fits(t == 0 ? 0 : t - 1, p.avg_window); break;
    case FcMethod::phase_sync:
      if (p.avg_window > t) throw ParameterError("phase smoothing window exceeds T");
      break;
  }
  switch (method) {
    case FcMethod::randcon: {
      const std::size_t conv = convolved_length(t, p.width, p.padding);
      return (conv - 1) / p.stride + 1;
    }
    case FcMethod::sliding_window: return detail::window_count(t, p.width, p.stride);
    case FcMethod::mtd: return detail::window_count(t - 1, p.avg_window, p.stride);
    case FcMethod::phase_sync: return t - (p.avg_window > 1 ? p.avg_window : 1) + 1;
  }
  return 0;
}

// Dispatches to the estimator named by `method`. The kernel bank is used by
// randcon only.
inline FcSeries estimate_fc(const RoiTimeSeries& ts, FcMethod method, const FcParams& p,
                            const KernelBank* bank = nullptr) {
  switch (method) {
    case FcMethod::randcon:
      if (!bank) throw ParameterError("randcon needs a kernel bank");
      return randcon_fc(ts, *bank, p.padding, p.stride);
    case FcMethod::sliding_window: return sliding_window_fc(ts, p.width, p.stride);
    case FcMethod::mtd: return mtd_fc(ts, p.avg_window, p.stride);
    case FcMethod::phase_sync: return phase_sync_fc(ts, p.avg_window);
  }
  throw ParameterError("unknown method");
}

}  // namespace randcon
