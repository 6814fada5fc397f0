#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "randcon/errors.hpp"
#include "randcon/matrix.hpp"
#include "randcon/parallel.hpp"
#include "randcon/rng.hpp"
#include "randcon/timeseries.hpp"

namespace randcon {

enum class KernelKind { gaussian, one_hot, custom };
enum class Padding { same, valid };

inline std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::gaussian: return "gaussian";
    case KernelKind::one_hot: return "one-hot";
    case KernelKind::custom: return "custom";
  }
  return "custom";
}

inline KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "gaussian") return KernelKind::gaussian;
  if (s == "one-hot") return KernelKind::one_hot;
  if (s == "custom") return KernelKind::custom;
  throw ParameterError("unknown kernel kind '" + s + "'");
}

inline std::string to_string(Padding p) { return p == Padding::same ? "same" : "valid"; }

inline Padding padding_from_string(const std::string& s) {
  if (s == "same") return Padding::same;
  if (s == "valid") return Padding::valid;
  throw ParameterError("unknown padding '" + s + "' (expected same or valid)");
}

// K kernels of common width W, one per row.
class KernelBank {
 public:
  KernelBank(Matrix weights, KernelKind kind, std::uint64_t seed = 0)
      : weights_(std::move(weights)), kind_(kind), seed_(seed) {
    if (weights_.rows() < 1 || weights_.cols() < 1)
      throw ParameterError("kernel bank needs K >= 1 kernels of width W >= 1");
    for (double v : weights_.values())
      if (!std::isfinite(v)) throw ValidationError("kernel weights must be finite");
    if (kind_ == KernelKind::one_hot) {
      if (weights_.rows() != weights_.cols()) throw ValidationError("one-hot bank needs K == W");
      for (std::size_t k = 0; k < weights_.rows(); ++k)
        for (std::size_t w = 0; w < weights_.cols(); ++w)
          if (weights_(k, w) != (k == w ? 1.0 : 0.0))
            throw ValidationError("one-hot kernel " + std::to_string(k) + " is not a unit vector");
    }
  }

  std::size_t count() const noexcept { return weights_.rows(); }
  std::size_t width() const noexcept { return weights_.cols(); }
  KernelKind kind() const noexcept { return kind_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const Matrix& weights() const noexcept { return weights_; }
  std::span<const double> kernel(std::size_t k) const noexcept { return weights_.row(k); }

  friend bool operator==(const KernelBank&, const KernelBank&) = default;

 private:
  Matrix weights_;
  KernelKind kind_;
  std::uint64_t seed_;
};

// K x W i.i.d. standard normal weights; kernel k draws from its own stream
// keyed by seed XOR k, so banks do not depend on generation order.
inline KernelBank sample_gaussian_bank(std::size_t k_count, std::size_t width, std::uint64_t seed) {
  if (k_count < 1 || width < 1) throw ParameterError("gaussian bank needs K >= 1 and W >= 1");
  Matrix weights(k_count, width);
  for (std::size_t k = 0; k < k_count; ++k) {
    auto rng = make_rng(derive_seed(seed, k), Stream::kernels);
    for (double& w : weights.row(k)) w = standard_normal(rng);
  }
  return KernelBank(std::move(weights), KernelKind::gaussian, seed);
}

// W unit kernels; convolving with them reproduces the raw window samples,
// which is exactly what sliding-window correlation operates on.
inline KernelBank one_hot_bank(std::size_t width) {
  if (width < 1) throw ParameterError("one-hot bank needs W >= 1");
  Matrix weights(width, width);
  for (std::size_t w = 0; w < width; ++w) weights(w, w) = 1.0;
  return KernelBank(std::move(weights), KernelKind::one_hot, 0);
}

inline nlohmann::json to_json(const KernelBank& bank) {
  nlohmann::json j{{"kind", to_string(bank.kind())},
                   {"seed", bank.seed()},
                   {"k", bank.count()},
                   {"w", bank.width()}};
  if (bank.kind() == KernelKind::custom) j["weights"] = bank.weights().values();
  return j;
}

inline KernelBank kernel_bank_from_json(const nlohmann::json& j) {
  try {
    const auto kind = kernel_kind_from_string(j.at("kind").get<std::string>());
    const auto k = j.at("k").get<std::size_t>();
    const auto w = j.at("w").get<std::size_t>();
    switch (kind) {
      case KernelKind::gaussian: return sample_gaussian_bank(k, w, j.at("seed").get<std::uint64_t>());
      case KernelKind::one_hot:
        if (k != w) throw ValidationError("one-hot bank needs k == w");
        return one_hot_bank(w);
      case KernelKind::custom: {
        auto weights = j.at("weights").get<std::vector<double>>();
        if (weights.size() != k * w) throw ValidationError("custom bank weight count != k*w");
        return KernelBank(Matrix(k, w, std::move(weights)), KernelKind::custom,
                          j.value("seed", std::uint64_t{0}));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed kernel bank JSON: ") + e.what());
  }
  throw ParseError("malformed kernel bank JSON");
}

// Convolution output y_k(n, t), stored kernel-major: [k][n][t].
class FeatureTensor {
 public:
  FeatureTensor(std::size_t k, std::size_t n, std::size_t t_out, Padding padding,
                std::size_t source_t, std::size_t kernel_width)
      : k_(k), n_(n), t_(t_out), padding_(padding), source_t_(source_t), width_(kernel_width),
        values_(k * n * t_out, 0.0) {}

  std::size_t kernels() const noexcept { return k_; }
  std::size_t rois() const noexcept { return n_; }
  std::size_t timepoints() const noexcept { return t_; }
  std::size_t source_timepoints() const noexcept { return source_t_; }
  std::size_t kernel_width() const noexcept { return width_; }
  Padding padding() const noexcept { return padding_; }

  double& at(std::size_t k, std::size_t n, std::size_t t) noexcept { return values_[(k * n_ + n) * t_ + t]; }
  double at(std::size_t k, std::size_t n, std::size_t t) const noexcept {
    return values_[(k * n_ + n) * t_ + t];
  }
  const std::vector<double>& values() const noexcept { return values_; }

  // Time-resliced view: the N x K feature matrix at output index t.
  Matrix slice(std::size_t t) const {
    Matrix out(n_, k_);
    for (std::size_t n = 0; n < n_; ++n)
      for (std::size_t k = 0; k < k_; ++k) out(n, k) = at(k, n, t);
    return out;
  }

  // Original time index at the center of the receptive field of output t.
  std::size_t center(std::size_t t) const noexcept {
    return padding_ == Padding::same ? t : t + (width_ - 1) / 2;
  }

  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;

 private:
  std::size_t k_, n_, t_;
  Padding padding_;
  std::size_t source_t_;
  std::size_t width_;
  std::vector<double> values_;
};

inline std::size_t convolved_length(std::size_t t, std::size_t w, Padding padding) {
  if (padding == Padding::same) return t;
  if (t < w)
    throw DimensionError("valid convolution needs T >= W (T=" + std::to_string(t) +
                         ", W=" + std::to_string(w) + ")");
  return t - w + 1;
}

// y_k(n,t) = sum_w x_n(t + w - 1) C_k(w). Same padding zero-extends by
// floor((W-1)/2) on the left and ceil((W-1)/2) on the right.
inline FeatureTensor convolve(const RoiTimeSeries& ts, const KernelBank& bank, Padding padding) {
  const std::size_t n_rois = ts.n_rois();
  const std::size_t t_in = ts.n_timepoints();
  const std::size_t w = bank.width();
  const std::size_t t_out = convolved_length(t_in, w, padding);
  const std::ptrdiff_t left = padding == Padding::same ? static_cast<std::ptrdiff_t>((w - 1) / 2) : 0;

  FeatureTensor out(bank.count(), n_rois, t_out, padding, t_in, w);
  parallel_for(bank.count() * n_rois, [&](std::size_t job) {
    const std::size_t k = job / n_rois;
    const std::size_t n = job % n_rois;
    const auto kernel = bank.kernel(k);
    const auto x = ts.roi(n);
    for (std::size_t t = 0; t < t_out; ++t) {
      double acc = 0.0;
      for (std::size_t i = 0; i < w; ++i) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + i) - left;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_in)) continue;
        acc += x[static_cast<std::size_t>(src)] * kernel[i];
      }
      out.at(k, n, t) = acc;
    }
  });
  return out;
}

}  // namespace randcon
