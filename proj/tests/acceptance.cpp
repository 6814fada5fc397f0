// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "randcon/harness.hpp"

using namespace randcon;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? NAN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

RoiTimeSeries random_series(std::size_t n, std::size_t t, Philox& rng) {
  Matrix m(n, t);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return RoiTimeSeries(std::move(m));
}

struct Verdict {
  bool pass;
  std::string detail;
};

// 1. The one-hot kernel bank reproduces sliding-window correlation.
Verdict sliding_window_equivalence() {
  const auto t0 = Clock::now();
  auto rng = make_rng(2024, Stream::patterns);
  double worst = 0.0;
  bool shapes = true;
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(uniform_int(rng, 2, 20));
    const auto t = static_cast<std::size_t>(uniform_int(rng, 10, 100));
    const auto w = static_cast<std::size_t>(uniform_int(rng, 2, 9));
    const auto ts = random_series(n, t, rng);
    const auto a = randcon_fc(ts, one_hot_bank(w), Padding::valid);
    const auto b = sliding_window_fc(ts, w, 1);
    if (a.frames() != b.frames()) {
      shapes = false;
      continue;
    }
    for (std::size_t i = 0; i < a.values().size(); ++i) worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  }
  const double secs = seconds_since(t0);
  return {shapes && worst < 1e-10 && secs < 10.0,
          "max |diff| " + fmt("%.3g", worst) + " over 100 trials (< 1e-10), " + fmt("%.2f", secs) + " s (< 10 s)" +
              (shapes ? "" : ", frame counts differed")};
}

// 2. Randcon beats sliding-window on ARI at desk scale.
Verdict method_ordering() {
  const auto t0 = Clock::now();
  const auto plan = preset_plan("desk-ordering");
  const auto r = run_plan(plan);
  const auto rc = r.values(0.6, 0.6, FcMethod::randcon, Metric::ari);
  const auto sw = r.values(0.6, 0.6, FcMethod::sliding_window, Metric::ari);
  if (rc.size() != 10 || sw.size() != 10 || !r.failures.empty())
    return {false, "expected 10 groups per method, got " + std::to_string(rc.size()) + "/" + std::to_string(sw.size()) +
                       " with " + std::to_string(r.failures.size()) + " failed cells"};
  const auto test = paired_group_compare(rc, sw, Alternative::greater);
  const double secs = seconds_since(t0);
  return {mean(rc) > mean(sw) && test.p_value < 0.05 && secs < 600.0,
          "mean ARI randcon " + fmt("%.4f", mean(rc)) + " vs sliding-window " + fmt("%.4f", mean(sw)) +
              ", one-sided signed-rank p " + fmt("%.4g", test.p_value) + " (< 0.05), " + fmt("%.1f", secs) + " s"};
}

// 3. More kernels help at high noise.
Verdict kernel_count_trend() {
  auto plan = preset_plan("desk-kernel-count");
  plan.noise_levels = {1.6};
  plan.metrics = {Metric::ari};
  const auto r = run_plan(plan);
  std::vector<double> means;
  std::string detail = "sigma 1.6 mean ARI:";
  for (double k : plan.sweep_values) {
    means.push_back(mean(r.values(k, 1.6, FcMethod::randcon, Metric::ari)));
    detail += " K=" + fmt("%.0f", k) + " " + fmt("%.4f", means.back());
  }
  std::size_t inversions = 0;
  bool small = true;
  for (std::size_t i = 1; i < means.size(); ++i)
    if (means[i] < means[i - 1]) {
      ++inversions;
      small = small && means[i - 1] - means[i] <= 0.01;
    }
  const bool pass = r.failures.empty() && means.back() >= means.front() && inversions <= 1 && small;
  return {pass, detail + "; " + std::to_string(inversions) + " inversion(s)"};
}

// 4. Dwell-time moments and noiseless within-subnetwork coherence.
Verdict simulator_statistics() {
  const auto d = sample_dwell_times(10.0, 5.0, 10000, 99);
  double m = 0.0;
  for (auto v : d) m += static_cast<double>(v);
  m /= static_cast<double>(d.size());

  SimulationSpec spec;
  spec.n_rois = 30;
  spec.n_timepoints = 400;
  spec.noise_sigma = 0.0;
  spec.n_groups = 1;
  spec.subjects_per_group = 5;
  const auto pats = generate_state_patterns(spec, spec.seed);
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t s = 0; s < spec.n_subjects(); ++s) {
    const auto subj = generate_subject(spec, pats, s);
    const auto& labels = subj.sequence.labels;
    for (std::size_t start = 0; start < labels.size();) {
      std::size_t end = start;
      while (end < labels.size() && labels[end] == labels[start]) ++end;
      if (end - start >= 3) {
        for (std::size_t m1 = 0; m1 < spec.n_rois; ++m1)
          for (std::size_t m2 = 0; m2 < m1; ++m2) {
            if (m1 / 10 != m2 / 10) continue;
            const auto a = subj.series.roi(m1).subspan(start, end - start);
            const auto b = subj.series.roi(m2).subspan(start, end - start);
            long double ma = 0, mb = 0;
            for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
            ma /= a.size();
            mb /= b.size();
            long double sab = 0, saa = 0, sbb = 0;
            for (std::size_t i = 0; i < a.size(); ++i) {
              sab += (a[i] - ma) * (b[i] - mb);
              saa += (a[i] - ma) * (a[i] - ma);
              sbb += (b[i] - mb) * (b[i] - mb);
            }
            worst = std::max(worst, std::abs(1.0 - static_cast<double>(sab / std::sqrt(saa * sbb))));
            ++checked;
          }
      }
      start = end;
    }
  }
  return {std::abs(m - 50.0) <= 2.0 && worst < 1e-9 && checked > 0,
          "Gamma(10,5) mean " + fmt("%.3f", m) + " over 1e4 draws (50 +- 2); within-subnetwork |r - 1| max " +
              fmt("%.2g", worst) + " over " + std::to_string(checked) + " segment pairs (< 1e-9)"};
}

double ari_pairs(const std::vector<int>& a, const std::vector<int>& b) {
  long double both = 0, sa = 0, sb = 0, pairs = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool x = a[i] == a[j], y = b[i] == b[j];
      both += x && y;
      sa += x;
      sb += y;
      ++pairs;
    }
  const long double expected = sa * sb / pairs, top = (sa + sb) / 2;
  return top == expected ? 1.0 : static_cast<double>((both - expected) / (top - expected));
}

// 5. Metric oracles.
Verdict metric_oracles() {
  auto rng = make_rng(5150, Stream::patterns);
  double ari_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(uniform_int(rng, 2, 150));
    const int ka = static_cast<int>(uniform_int(rng, 1, 6)), kb = static_cast<int>(uniform_int(rng, 1, 6));
    std::vector<int> a(n), b(n);
    for (auto& v : a) v = static_cast<int>(uniform_int(rng, 0, ka - 1));
    for (auto& v : b) v = static_cast<int>(uniform_int(rng, 0, kb - 1));
    ari_err = std::max(ari_err, std::abs(ari(a, b) - ari_pairs(a, b)));
  }
  const double half = ari(std::vector<int>{1, 1, 2, 2}, std::vector<int>{1, 2, 1, 2});

  std::size_t match_bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = static_cast<std::size_t>(2 + trial % 6);
    Matrix e(m, 5), t(m, 5);
    for (std::size_t i = 0; i < e.size(); ++i) e.data()[i] = standard_normal(rng), t.data()[i] = standard_normal(rng);
    std::vector<int> perm(m), best;
    std::iota(perm.begin(), perm.end(), 0);
    double best_cost = INFINITY;
    do {
      double c = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t d = 0; d < 5; ++d) s += (e(i, d) - t(perm[i], d)) * (e(i, d) - t(perm[i], d));
        c += std::sqrt(s);
      }
      if (c < best_cost) best_cost = c, best = perm;
    } while (std::next_permutation(perm.begin(), perm.end()));
    if (match_states(e, t).permutation != best) ++match_bad;
  }

  std::vector<int> seq(300);
  for (auto& v : seq) v = static_cast<int>(uniform_int(rng, 0, 3));
  const double kl_self = sojourn_kl(seq, seq, 4).value;
  const bool trivial = state_mse(std::vector<StatePair>{{{1, 2, 3}, {1, 2, 3}}}) == 0.0 &&
                       state_mse(std::vector<StatePair>{{{1, 1}, {0, 0}}}) == 1.0 &&
                       state_cosine(std::vector<StatePair>{{{1, 2, 3}, {1, 2, 3}}}) == 1.0 &&
                       state_cosine(std::vector<StatePair>{{{1, 2}, {-1, -2}}}) == -1.0 &&
                       state_cosine(std::vector<StatePair>{{{1, 0}, {0, 1}}}) == 0.0;
  return {ari_err < 1e-12 && half == -0.5 && match_bad == 0 && kl_self == 0.0 && trivial,
          "ARI vs pair-counting max err " + fmt("%.2g", ari_err) + "; [1,1,2,2] vs [1,2,1,2] = " + fmt("%g", half) +
              "; match_states vs brute force " + std::to_string(100 - match_bad) + "/100; KL(x,x) = " +
              fmt("%g", kl_self) + "; MSE/cosine trivial cases " + (trivial ? "exact" : "WRONG")};
}

// 6. Phase-difference FC of sin against cos. The gate is a whole number of
// cycles; a non-periodic record is reported alongside because the circular
// FFT leaks at its ends.
double phase_worst(double cycles) {
  constexpr std::size_t T = 512;
  Matrix m(2, T);
  const double omega = 2.0 * std::numbers::pi * cycles / T;
  for (std::size_t t = 0; t < T; ++t) m(0, t) = std::sin(omega * t), m(1, t) = std::cos(omega * t);
  const auto fc = phase_sync_fc(RoiTimeSeries(m));
  double worst = 0.0;
  for (std::size_t t = T / 10; t < T - T / 10; ++t) worst = std::max(worst, std::abs(fc.at(t, 0, 1)));
  return worst;
}

Verdict phase_correctness() {
  const double periodic = phase_worst(10.0), other = phase_worst(17.3);
  return {periodic < 0.02, "max |FC(sin, cos)| over the central 80% " + fmt("%.3g", periodic) +
                               " (< 0.02) for 10 cycles in 512 samples; non-periodic 17.3 cycles gives " +
                               fmt("%.3g", other) + " (not gated)"};
}

// 7. Noiseless recovery.
Verdict clustering_recovery() {
  auto plan = preset_plan("desk-ordering");
  plan.sweep_values = {0.0};
  plan.metrics = {Metric::ari, Metric::cosine};
  const auto r = run_plan(plan);
  bool pass = r.failures.empty();
  std::string detail = "noiseless M=4 N=30 T=400, 10 groups x 5:";
  for (auto method : plan.methods) {
    const auto a = r.values(0.0, 0.0, method, Metric::ari);
    const auto c = r.values(0.0, 0.0, method, Metric::cosine);
    pass = pass && mean(a) > 0.95 && mean(c) > 0.99;
    detail += " " + to_string(method) + " ARI " + fmt("%.3f", mean(a)) + " (min " +
              fmt("%.3f", *std::min_element(a.begin(), a.end())) + "), cosine " + fmt("%.4f", mean(c)) + ";";
  }
  return {pass, detail + " targets ARI > 0.95, cosine > 0.99"};
}

// 8. Byte-identical reruns; numeric outputs independent of the thread count.
Verdict determinism() {
  const auto root = fs::temp_directory_path() / "randcon_acceptance_determinism";
  fs::remove_all(root);
  std::vector<std::string> problems;
  const unsigned many = std::max(4u, std::thread::hardware_concurrency());
  auto tree = [](const fs::path& dir) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), dir).generic_string(), sha256_file(e.path()));
    std::sort(out.begin(), out.end());
    return out;
  };
  for (const char* name : {"desk-smoke", "desk-kernel-size"}) {
    auto plan = preset_plan(name);
    if (std::string(name) == "desk-kernel-size") {
      plan.base = preset_plan("desk-smoke").base;
      plan.sweep_values = {4, 7};
      plan.restarts = 5;
    }
    auto run = [&](const std::string& tag, int threads) {
      set_thread_count(threads);
      RunOptions opt;
      opt.output_dir = root / name / tag;
      opt.overrides = {{"threads", threads}};
      run_plan(plan, opt);
      set_thread_count(0);
      return tree(opt.output_dir);
    };
    const auto a = run("a", 1), b = run("b", 1), c = run("c", static_cast<int>(many));
    if (a != b) problems.push_back(std::string(name) + ": same-thread reruns differ");
    for (std::size_t i = 0; i < a.size() && i < c.size(); ++i)
      if (a[i].first != "manifest.json" && a[i] != c[i])
        problems.push_back(std::string(name) + ": " + a[i].first + " differs between 1 and " + std::to_string(many) +
                           " threads");
    if (a.size() != c.size()) problems.push_back(std::string(name) + ": file sets differ across thread counts");
  }
  std::string detail = "desk-smoke and desk-kernel-size, twice at 1 thread and once at " + std::to_string(many) +
                       " threads: ";
  if (problems.empty()) detail += "identical trees; numeric files identical across thread counts";
  for (const auto& p : problems) detail += p + "; ";
  return {problems.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"sliding-window equivalence", sliding_window_equivalence},
      {"desk-scale method ordering", method_ordering},
      {"kernel-count trend", kernel_count_trend},
      {"simulator statistics", simulator_statistics},
      {"metric oracles", metric_oracles},
      {"phase correctness", phase_correctness},
      {"clustering recovery", clustering_recovery},
      {"determinism", determinism}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v{false, ""};
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("criterion %zu (%s): %s: %s\n", i + 1, criteria[i].first, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
