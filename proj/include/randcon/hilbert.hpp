#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

#include "randcon/errors.hpp"

namespace randcon {

namespace detail {

// FFTW's planner is not re-entrant; execution of distinct plans is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n)
      : ptr(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
    if (!ptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* ptr;
};

struct FftwPlan {
  fftw_plan plan = nullptr;
  ~FftwPlan() {
    if (plan) {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
};

}  // namespace detail

// Analytic signal x + i*H(x) via the frequency-domain construction: zero the
// negative frequencies, double the positive ones, keep DC and Nyquist.
inline std::vector<std::complex<double>> analytic_signal(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) throw DimensionError("analytic signal of an empty series");
  detail::FftwBuffer buf(n);
  detail::FftwPlan forward, backward;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    forward.plan = fftw_plan_dft_1d(static_cast<int>(n), buf.ptr, buf.ptr, FFTW_FORWARD, FFTW_ESTIMATE);
    backward.plan = fftw_plan_dft_1d(static_cast<int>(n), buf.ptr, buf.ptr, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < n; ++i) {
    buf.ptr[i][0] = x[i];
    buf.ptr[i][1] = 0.0;
  }
  fftw_execute(forward.plan);
  const std::size_t half = n / 2;
  for (std::size_t i = 1; i < n; ++i) {
    double gain = 0.0;
    if (i < (n + 1) / 2) gain = 2.0;
    else if (n % 2 == 0 && i == half) gain = 1.0;
    buf.ptr[i][0] *= gain;
    buf.ptr[i][1] *= gain;
  }
  fftw_execute(backward.plan);
  std::vector<std::complex<double>> out(n);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {buf.ptr[i][0] * scale, buf.ptr[i][1] * scale};
  return out;
}

inline std::vector<double> instantaneous_phase(std::span<const double> x) {
  const auto z = analytic_signal(x);
  std::vector<double> phase(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) phase[i] = std::arg(z[i]);
  return phase;
}

}  // namespace randcon
