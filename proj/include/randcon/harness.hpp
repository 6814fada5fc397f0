#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "randcon/clustering.hpp"
#include "randcon/connectivity.hpp"
#include "randcon/errors.hpp"
#include "randcon/fc_io.hpp"
#include "randcon/hashing.hpp"
#include "randcon/metrics.hpp"
#include "randcon/parallel.hpp"
#include "randcon/simulator.hpp"
#include "randcon/stats.hpp"

#ifndef RANDCON_VERSION
#define RANDCON_VERSION "0.0.0"
#endif

namespace randcon {

enum class SweepParam { noise_sigma, n_rois, n_timepoints, n_states, gamma_scale, kernel_count, kernel_width };
enum class Study { sweep, kernel_size };
enum class Metric { ari, overlap_ratio, mse, cosine, sojourn_kl };
enum class Pooling { group, all };

inline const std::vector<SweepParam>& all_sweep_params() {
  static const std::vector<SweepParam> v{SweepParam::noise_sigma, SweepParam::n_rois,       SweepParam::n_timepoints,
                                         SweepParam::n_states,    SweepParam::gamma_scale,  SweepParam::kernel_count,
                                         SweepParam::kernel_width};
  return v;
}

inline std::string to_string(SweepParam p) {
  switch (p) {
    case SweepParam::noise_sigma: return "noise_sigma";
    case SweepParam::n_rois: return "n_rois";
    case SweepParam::n_timepoints: return "n_timepoints";
    case SweepParam::n_states: return "n_states";
    case SweepParam::gamma_scale: return "gamma_scale";
    case SweepParam::kernel_count: return "kernel_count";
    case SweepParam::kernel_width: return "kernel_width";
  }
  return "?";
}

inline SweepParam sweep_param_from_string(const std::string& s) {
  for (auto p : all_sweep_params())
    if (to_string(p) == s) return p;
  throw ValidationError("unknown sweep parameter '" + s + "'");
}

// Data parameters change the simulated dataset; the others change only the estimator.
inline bool is_data_param(SweepParam p) noexcept {
  return p != SweepParam::kernel_count && p != SweepParam::kernel_width;
}

inline std::string to_string(Study s) { return s == Study::sweep ? "sweep" : "kernel-size"; }

inline Study study_from_string(const std::string& s) {
  if (s == "sweep") return Study::sweep;
  if (s == "kernel-size") return Study::kernel_size;
  throw ValidationError("unknown study '" + s + "' (expected sweep or kernel-size)");
}

inline const std::vector<Metric>& all_metrics() {
  static const std::vector<Metric> v{Metric::ari, Metric::overlap_ratio, Metric::mse, Metric::cosine,
                                     Metric::sojourn_kl};
  return v;
}

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::ari: return "ari";
    case Metric::overlap_ratio: return "overlap_ratio";
    case Metric::mse: return "mse";
    case Metric::cosine: return "cosine";
    case Metric::sojourn_kl: return "sojourn_kl";
  }
  return "?";
}

inline Metric metric_from_string(const std::string& s) {
  for (auto m : all_metrics())
    if (to_string(m) == s) return m;
  throw ValidationError("unknown metric '" + s + "'");
}

inline std::string to_string(Pooling p) { return p == Pooling::group ? "group" : "all"; }

inline Pooling pooling_from_string(const std::string& s) {
  if (s == "group") return Pooling::group;
  if (s == "all") return Pooling::all;
  throw ValidationError("unknown pooling mode '" + s + "' (expected group or all)");
}

inline std::string to_string(KlDirection d) {
  return d == KlDirection::estimated_to_true ? "estimated-to-true" : "true-to-estimated";
}

inline KlDirection kl_direction_from_string(const std::string& s) {
  if (s == "estimated-to-true") return KlDirection::estimated_to_true;
  if (s == "true-to-estimated") return KlDirection::true_to_estimated;
  throw ValidationError("unknown KL direction '" + s + "'");
}

struct EstimatorSettings {
  std::size_t width = 3;
  std::size_t kernel_count = 40;
  std::size_t stride = 1;
  Padding padding = Padding::same;
  std::size_t phase_smoothing = 0;

  friend bool operator==(const EstimatorSettings&, const EstimatorSettings&) = default;
};

struct ExperimentPlan {
  std::string name = "custom";
  Study study = Study::sweep;
  SimulationSpec base;
  SweepParam sweep_param = SweepParam::noise_sigma;
  std::vector<double> sweep_values;
  // Estimator sweeps only: each sweep value is run at every noise level.
  std::vector<double> noise_levels;
  std::vector<FcMethod> methods;
  EstimatorSettings estimator;
  std::vector<Metric> metrics;
  std::size_t restarts = 100;
  std::size_t max_iters = 20;
  Pooling pooling = Pooling::group;
  bool zscore = false;
  bool match_before_kl = true;
  KlDirection kl_direction = KlDirection::estimated_to_true;

  std::vector<double> effective_noise_levels() const {
    return noise_levels.empty() ? std::vector<double>{base.noise_sigma} : noise_levels;
  }

  // Simulation spec for one cell.
  SimulationSpec spec_for(double value, double noise) const {
    SimulationSpec s = base;
    s.noise_sigma = noise;
    switch (sweep_param) {
      case SweepParam::noise_sigma: s.noise_sigma = value; break;
      case SweepParam::n_rois: s.n_rois = static_cast<std::size_t>(value); break;
      case SweepParam::n_timepoints: s.n_timepoints = static_cast<std::size_t>(value); break;
      case SweepParam::n_states: s.n_states = static_cast<std::size_t>(value); break;
      case SweepParam::gamma_scale: s.gamma_scale = value; break;
      default: break;
    }
    return s;
  }

  // Noise level actually simulated in a cell (a noise sweep overrides the level).
  double cell_noise(double value, double noise) const { return spec_for(value, noise).noise_sigma; }

  EstimatorSettings estimator_for(double value) const {
    EstimatorSettings e = estimator;
    if (sweep_param == SweepParam::kernel_count) e.kernel_count = static_cast<std::size_t>(value);
    if (sweep_param == SweepParam::kernel_width) e.width = static_cast<std::size_t>(value);
    return e;
  }

  void validate() const;
};

namespace detail {

inline bool is_integer_param(SweepParam p) {
  return p == SweepParam::n_rois || p == SweepParam::n_timepoints || p == SweepParam::n_states ||
         p == SweepParam::kernel_count || p == SweepParam::kernel_width;
}

}  // namespace detail

inline void ExperimentPlan::validate() const {
  if (methods.empty()) throw ValidationError("plan '" + name + "' lists no methods");
  std::set<FcMethod> seen_methods(methods.begin(), methods.end());
  if (seen_methods.size() != methods.size()) throw ValidationError("plan lists a method twice");
  if (metrics.empty()) throw ValidationError("plan '" + name + "' lists no metrics");
  std::set<Metric> seen_metrics(metrics.begin(), metrics.end());
  if (seen_metrics.size() != metrics.size()) throw ValidationError("plan lists a metric twice");
  if (sweep_values.empty()) throw ValidationError("plan '" + name + "' has no sweep values");
  if (!noise_levels.empty() && is_data_param(sweep_param))
    throw ValidationError("noise_levels is only valid when sweeping an estimator parameter; sweep " +
                          to_string(sweep_param) + " directly instead");
  for (double n : noise_levels)
    if (!(n >= 0.0) || !std::isfinite(n)) throw ValidationError("noise levels must be finite and >= 0");
  for (double v : sweep_values) {
    if (!std::isfinite(v)) throw ValidationError("sweep values must be finite");
    if (detail::is_integer_param(sweep_param) && (v != std::floor(v) || v < 1.0))
      throw ValidationError(to_string(sweep_param) + " values must be positive integers, got " + detail::format_double(v));
  }
  if (restarts < 1 || max_iters < 1) throw ValidationError("clustering needs >= 1 restart and >= 1 iteration");
  if (estimator.stride < 1) throw ValidationError("stride must be >= 1");
  const bool has_randcon = seen_methods.count(FcMethod::randcon) > 0;
  const bool has_phase = seen_methods.count(FcMethod::phase_sync) > 0;
  if (has_phase && estimator.stride != 1) throw ValidationError("phase-sync runs on every time point; stride must be 1");

  if (study == Study::kernel_size) {
    for (auto m : methods)
      if (m != FcMethod::randcon && m != FcMethod::sliding_window)
        throw ValidationError("the kernel-size study compares randcon and sliding-window only, not " + to_string(m));
    if (sweep_param != SweepParam::kernel_width) throw ValidationError("the kernel-size study sweeps kernel_width");
    if (estimator.padding != Padding::valid)
      throw ValidationError("the kernel-size study uses valid padding (same padding is excluded)");
    for (auto m : metrics)
      if (m != Metric::sojourn_kl && m != Metric::cosine && m != Metric::mse)
        throw ValidationError("the kernel-size study reports sojourn_kl, cosine and mse; " + to_string(m) +
                              " compares time axes that differ across widths");
  }

  for (double v : sweep_values)
    for (double n : effective_noise_levels()) {
      const auto spec = spec_for(v, n);
      spec.validate();
      if (spec.n_subnetworks() < 2) throw ValidationError("simulation needs at least 20 ROIs (two subnetworks)");
      const auto est = estimator_for(v);
      if (has_randcon && est.kernel_count < 2) throw ValidationError("randcon needs at least 2 kernels");
      if (est.width < 2 && (seen_methods.count(FcMethod::sliding_window) || seen_methods.count(FcMethod::mtd)))
        throw ValidationError("window width must be >= 2");
      if (est.width < 1) throw ValidationError("kernel width must be >= 1");
      if (est.width + 1 > spec.n_timepoints) throw ValidationError("window width must be smaller than T");
      const std::size_t groups = pooling == Pooling::all ? 1 : spec.n_groups;
      const std::size_t per = pooling == Pooling::all ? spec.n_subjects() : spec.subjects_per_group;
      (void)groups;
      if (per * (spec.n_timepoints - est.width) < spec.n_states)
        throw ValidationError("too few FC frames per clustering pool for " + std::to_string(spec.n_states) + " states");
    }
}

// ---------------------------------------------------------------------------
// Plan serialization (JSON; TOML files are converted to the same tree).

inline nlohmann::json to_json(const ExperimentPlan& p) {
  nlohmann::json methods = nlohmann::json::array(), metrics = nlohmann::json::array();
  for (auto m : p.methods) methods.push_back(to_string(m));
  for (auto m : p.metrics) metrics.push_back(to_string(m));
  return {{"name", p.name},
          {"study", to_string(p.study)},
          {"seed", p.base.seed},
          {"simulation", to_json(p.base)},
          {"sweep", {{"param", to_string(p.sweep_param)}, {"values", p.sweep_values}, {"noise_levels", p.noise_levels}}},
          {"methods", std::move(methods)},
          {"metrics", std::move(metrics)},
          {"estimator",
           {{"width", p.estimator.width},
            {"kernel_count", p.estimator.kernel_count},
            {"stride", p.estimator.stride},
            {"padding", to_string(p.estimator.padding)},
            {"phase_smoothing", p.estimator.phase_smoothing}}},
          {"clustering", {{"restarts", p.restarts}, {"max_iters", p.max_iters}, {"pooling", to_string(p.pooling)}}},
          {"evaluation",
           {{"zscore", p.zscore},
            {"match_before_kl", p.match_before_kl},
            {"kl_direction", to_string(p.kl_direction)}}}};
}

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ValidationError("'" + where + "' must be a table/object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_as(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("key '" + key + "' has the wrong type");
  }
}

inline std::size_t get_count(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0)
    throw ValidationError("key '" + key + "' must be a non-negative integer");
  return j.get<std::size_t>();
}

}  // namespace detail

ExperimentPlan preset_plan(const std::string& name);

// Reads a plan tree. A "preset" key starts from that preset; every other key
// overrides it.
inline ExperimentPlan plan_from_json(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::get_as;
  using detail::get_count;
  // A run manifest embeds its resolved plan; accept it for replay.
  if (j.is_object() && j.contains("plan") && j.value("format", "") == "randcon-run") return plan_from_json(j.at("plan"));
  check_keys(j, "plan", {"name", "study", "preset", "seed", "simulation", "sweep", "methods", "metrics", "estimator",
                         "clustering", "evaluation"});
  ExperimentPlan p;
  if (j.contains("preset")) p = preset_plan(get_as<std::string>(j.at("preset"), "preset"));
  if (j.contains("name")) p.name = get_as<std::string>(j.at("name"), "name");
  if (j.contains("study")) p.study = study_from_string(get_as<std::string>(j.at("study"), "study"));
  if (j.contains("simulation")) {
    const auto& s = j.at("simulation");
    check_keys(s, "simulation", {"n_states", "n_rois", "n_timepoints", "gamma_shape", "gamma_scale", "noise_sigma",
                                 "n_groups", "subjects_per_group", "seed"});
    try {
      p.base = simulation_spec_from_json(s, p.base);
    } catch (const nlohmann::json::exception&) {
      throw ValidationError("simulation settings have the wrong type");
    }
  }
  if (j.contains("seed")) p.base.seed = get_as<std::uint64_t>(j.at("seed"), "seed");
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, "sweep", {"param", "values", "noise_levels"});
    if (s.contains("param")) p.sweep_param = sweep_param_from_string(get_as<std::string>(s.at("param"), "sweep.param"));
    if (s.contains("values")) p.sweep_values = get_as<std::vector<double>>(s.at("values"), "sweep.values");
    if (s.contains("noise_levels"))
      p.noise_levels = get_as<std::vector<double>>(s.at("noise_levels"), "sweep.noise_levels");
  }
  if (j.contains("methods")) {
    p.methods.clear();
    for (const auto& m : j.at("methods")) {
      const auto name = get_as<std::string>(m, "methods");
      try {
        p.methods.push_back(fc_method_from_string(name));
      } catch (const Error&) {
        throw ValidationError("unknown method '" + name + "' (expected randcon, sliding-window, mtd or phase-sync)");
      }
    }
  }
  if (j.contains("metrics")) {
    p.metrics.clear();
    for (const auto& m : j.at("metrics")) p.metrics.push_back(metric_from_string(get_as<std::string>(m, "metrics")));
  }
  if (j.contains("estimator")) {
    const auto& e = j.at("estimator");
    check_keys(e, "estimator", {"width", "kernel_count", "stride", "padding", "phase_smoothing"});
    if (e.contains("width")) p.estimator.width = get_count(e.at("width"), "estimator.width");
    if (e.contains("kernel_count")) p.estimator.kernel_count = get_count(e.at("kernel_count"), "estimator.kernel_count");
    if (e.contains("stride")) p.estimator.stride = get_count(e.at("stride"), "estimator.stride");
    if (e.contains("padding")) {
      const auto pad = get_as<std::string>(e.at("padding"), "estimator.padding");
      if (pad != "same" && pad != "valid") throw ValidationError("padding must be same or valid, got '" + pad + "'");
      p.estimator.padding = padding_from_string(pad);
    }
    if (e.contains("phase_smoothing"))
      p.estimator.phase_smoothing = get_count(e.at("phase_smoothing"), "estimator.phase_smoothing");
  }
  if (j.contains("clustering")) {
    const auto& c = j.at("clustering");
    check_keys(c, "clustering", {"restarts", "max_iters", "pooling"});
    if (c.contains("restarts")) p.restarts = get_count(c.at("restarts"), "clustering.restarts");
    if (c.contains("max_iters")) p.max_iters = get_count(c.at("max_iters"), "clustering.max_iters");
    if (c.contains("pooling")) p.pooling = pooling_from_string(get_as<std::string>(c.at("pooling"), "clustering.pooling"));
  }
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    check_keys(e, "evaluation", {"zscore", "match_before_kl", "kl_direction"});
    if (e.contains("zscore")) p.zscore = get_as<bool>(e.at("zscore"), "evaluation.zscore");
    if (e.contains("match_before_kl")) p.match_before_kl = get_as<bool>(e.at("match_before_kl"), "evaluation.match_before_kl");
    if (e.contains("kl_direction"))
      p.kl_direction = kl_direction_from_string(get_as<std::string>(e.at("kl_direction"), "evaluation.kl_direction"));
  }
  return p;
}

namespace detail {

inline nlohmann::json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    nlohmann::json j = nlohmann::json::object();
    for (auto&& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
    return j;
  }
  if (const auto* a = node.as_array()) {
    nlohmann::json j = nlohmann::json::array();
    for (auto&& v : *a) j.push_back(toml_to_json(v));
    return j;
  }
  if (const auto* v = node.as_string()) return v->get();
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  throw ParseError("unsupported TOML value type (dates and times are not accepted)");
}

}  // namespace detail

inline nlohmann::json parse_plan_text(std::string_view text, bool toml_syntax, const std::string& origin) {
  if (toml_syntax) {
    try {
      return detail::toml_to_json(toml::parse(text, origin));
    } catch (const toml::parse_error& e) {
      throw ParseError(origin + ": " + std::string(e.description()) + " (line " +
                       std::to_string(e.source().begin.line) + ")");
    }
  }
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
}

inline ExperimentPlan load_plan(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("plan file '" + path.string() + "' does not exist");
  const auto text = read_text_file(path);
  return plan_from_json(parse_plan_text(text, path.extension() == ".toml", path.string()));
}

// ---------------------------------------------------------------------------
// Presets. The "paper-*" presets run the full-size published grids; "desk-*"
// presets keep the grid shape at a scale that runs on one machine.

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{
      "paper-noise",     "paper-roi",         "paper-tr",          "paper-states",      "paper-scale-param",
      "paper-kernel-count", "paper-kernel-size", "desk-noise",     "desk-roi",          "desk-tr",
      "desk-states",     "desk-scale-param",  "desk-kernel-count", "desk-kernel-size",  "desk-ordering",
      "desk-smoke"};
  return names;
}

inline ExperimentPlan preset_plan(const std::string& name) {
  const std::vector<FcMethod> four{FcMethod::randcon, FcMethod::sliding_window, FcMethod::mtd, FcMethod::phase_sync};
  const std::vector<Metric> four_metrics{Metric::ari, Metric::overlap_ratio, Metric::mse, Metric::cosine};
  ExperimentPlan p;
  p.name = name;
  p.methods = four;
  p.metrics = four_metrics;
  p.base = SimulationSpec{};
  const bool desk = name.rfind("desk-", 0) == 0;
  if (desk) {
    p.base.n_rois = 30;
    p.base.n_timepoints = 400;
    p.base.n_groups = 10;
    p.base.subjects_per_group = 5;
  }
  const std::string grid = name.substr(name.find('-') + 1);
  if (grid == "noise") {
    p.sweep_param = SweepParam::noise_sigma;
    p.sweep_values = {0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  } else if (grid == "roi") {
    p.sweep_param = SweepParam::n_rois;
    p.sweep_values = desk ? std::vector<double>{30, 60, 90} : std::vector<double>{30, 60, 90, 120};
    p.metrics = {Metric::ari, Metric::cosine};
  } else if (grid == "tr") {
    p.sweep_param = SweepParam::n_timepoints;
    p.sweep_values = desk ? std::vector<double>{200, 300, 400} : std::vector<double>{400, 600, 800, 1000, 1200};
    p.metrics = {Metric::ari, Metric::cosine};
  } else if (grid == "states") {
    p.sweep_param = SweepParam::n_states;
    p.sweep_values = desk ? std::vector<double>{4, 6} : std::vector<double>{4, 6, 8};
    p.metrics = {Metric::ari, Metric::cosine};
  } else if (grid == "scale-param") {
    p.sweep_param = SweepParam::gamma_scale;
    p.sweep_values = {1, 3, 5, 7};
    p.metrics = {Metric::ari, Metric::cosine};
  } else if (grid == "kernel-count") {
    p.sweep_param = SweepParam::kernel_count;
    p.sweep_values = desk ? std::vector<double>{5, 20, 80} : std::vector<double>{5, 10, 20, 40, 80, 160};
    p.noise_levels = desk ? std::vector<double>{0.6, 1.6} : std::vector<double>{0.6, 1.1, 1.6, 2.6};
    p.methods = {FcMethod::randcon};
    p.metrics = {Metric::ari, Metric::cosine};
  } else if (grid == "kernel-size") {
    p.study = Study::kernel_size;
    p.sweep_param = SweepParam::kernel_width;
    p.sweep_values = {4, 5, 6, 7, 8, 9};
    p.methods = {FcMethod::randcon, FcMethod::sliding_window};
    p.metrics = {Metric::sojourn_kl, Metric::cosine, Metric::mse};
    p.estimator.padding = Padding::valid;
  } else if (name == "desk-ordering") {
    p.sweep_param = SweepParam::noise_sigma;
    p.sweep_values = {0.6};
    p.methods = {FcMethod::randcon, FcMethod::sliding_window};
    p.metrics = {Metric::ari, Metric::cosine};
  } else if (name == "desk-smoke") {
    p.base.n_states = 3;
    p.base.n_rois = 20;
    p.base.n_timepoints = 120;
    p.base.gamma_scale = 2.0;
    p.base.n_groups = 6;
    p.base.subjects_per_group = 2;
    p.sweep_param = SweepParam::noise_sigma;
    p.sweep_values = {0.5, 1.0};
    p.metrics = all_metrics();
    p.restarts = 5;
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ValidationError("unknown preset '" + name + "' (known: " + known + ")");
  }
  if (name.rfind("paper-", 0) != 0 && !desk) throw ValidationError("unknown preset '" + name + "'");
  return p;
}

// ---------------------------------------------------------------------------
// Running a plan.

inline constexpr std::uint64_t kBankSeedTag = 0x62616e6b;    // "bank"
inline constexpr std::uint64_t kKmeansSeedTag = 0x6b6d6e73;  // "kmns"

inline std::uint64_t bank_seed(std::uint64_t master) { return combine_seed(master, kBankSeedTag); }
inline std::uint64_t kmeans_seed(std::uint64_t master, std::size_t pool) {
  return combine_seed(master ^ kKmeansSeedTag, pool);
}

struct ResultRow {
  double sweep_value = 0.0;
  double noise_sigma = 0.0;
  std::string group;
  std::string subject;
  FcMethod method = FcMethod::randcon;
  Metric metric = Metric::ari;
  double value = 0.0;
};

struct CellFailure {
  double sweep_value = 0.0;
  double noise_sigma = 0.0;
  std::string group;
  FcMethod method = FcMethod::randcon;
  std::string stage;
  std::string message;
};

struct RunOptions {
  std::filesystem::path output_dir;
  nlohmann::json overrides = nlohmann::json::object();
  bool record_timings = false;
  std::function<void(const std::string&)> log;
};

struct RunResult {
  std::vector<ResultRow> rows;
  std::vector<CellFailure> failures;
  std::map<std::string, std::uint64_t> degenerate_pairs;  // per method
  nlohmann::json manifest;
  std::filesystem::path manifest_path;

  // Rows for one (value, noise, method, metric), in group order.
  std::vector<double> values(double sweep_value, double noise, FcMethod method, Metric metric) const {
    std::vector<double> out;
    for (const auto& r : rows)
      if (r.sweep_value == sweep_value && r.noise_sigma == noise && r.method == method && r.metric == metric)
        out.push_back(r.value);
    return out;
  }
};

namespace detail {

struct PoolSpec {
  std::string id;
  std::vector<std::size_t> subjects;
};

inline std::vector<PoolSpec> clustering_pools(const SimulationSpec& spec, Pooling pooling) {
  std::vector<PoolSpec> pools;
  if (pooling == Pooling::all) {
    PoolSpec all{"all", {}};
    for (std::size_t i = 0; i < spec.n_subjects(); ++i) all.subjects.push_back(i);
    pools.push_back(std::move(all));
    return pools;
  }
  for (std::size_t g = 0; g < spec.n_groups; ++g) {
    PoolSpec ps{group_id(g), {}};
    for (std::size_t i = 0; i < spec.subjects_per_group; ++i) ps.subjects.push_back(g * spec.subjects_per_group + i);
    pools.push_back(std::move(ps));
  }
  return pools;
}

inline FcParams fc_params_for(FcMethod method, const EstimatorSettings& e, std::uint64_t bank) {
  FcParams p{e.width, e.stride, e.kernel_count, e.padding, 0, bank};
  if (method == FcMethod::mtd) p.avg_window = e.width;  // averaging window tied to the window width
  if (method == FcMethod::phase_sync) p.avg_window = e.phase_smoothing;
  return p;
}

struct PoolOutcome {
  std::vector<ResultRow> rows;
  std::vector<CellFailure> failures;
  std::map<std::string, std::uint64_t> degenerate;
};

// Everything one method produces on one clustering pool.
inline std::vector<std::pair<Metric, double>> evaluate_pool(const ExperimentPlan& plan, const SimulationSpec& spec,
                                                            const std::vector<StatePattern>& patterns,
                                                            const std::vector<SimulatedSubject>& subjects,
                                                            FcMethod method, const EstimatorSettings& est,
                                                            const KernelBank* bank, std::uint64_t km_seed,
                                                            std::string& stage, std::uint64_t& degenerate) {
  stage = "estimate";
  const auto params = fc_params_for(method, est, bank ? bank->seed() : 0);
  const std::size_t frames = expected_frames(method, params, spec.n_timepoints);
  const std::size_t dim = lower_tri_length(spec.n_rois);
  Matrix pooled(frames * subjects.size(), dim);
  std::vector<int> truth;
  std::vector<std::vector<int>> truth_segments;
  truth.reserve(pooled.rows());
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto ts = plan.zscore ? zscore_rows(subjects[i].series).series : subjects[i].series;
    const auto fc = estimate_fc(ts, method, params, bank);
    if (fc.frames() != frames)
      throw DimensionError(to_string(method) + " produced " + std::to_string(fc.frames()) + " frames, shape law says " +
                           std::to_string(frames));
    degenerate += fc.degenerate_pairs();
    std::vector<int> seg(frames);
    for (std::size_t f = 0; f < frames; ++f) {
      vectorize_lower_into(fc.frame(f), spec.n_rois, pooled.row(i * frames + f));
      seg[f] = subjects[i].sequence.labels[fc.center(f)];
      truth.push_back(seg[f]);
    }
    truth_segments.push_back(std::move(seg));
  }

  stage = "cluster";
  const auto clusters = kmeans(pooled, spec.n_states, KMeansOptions{plan.restarts, plan.max_iters, km_seed});

  stage = "evaluate";
  Matrix truth_centroids(spec.n_states, dim);
  for (std::size_t m = 0; m < spec.n_states; ++m) {
    const auto v = patterns[m].implied_lower();
    std::copy(v.begin(), v.end(), truth_centroids.row(m).begin());
  }
  const auto matching = match_states(clusters.centroids, truth_centroids);
  std::vector<std::pair<Metric, double>> out;
  for (auto metric : plan.metrics) {
    switch (metric) {
      case Metric::ari: out.emplace_back(metric, ari(clusters.labels, truth)); break;
      case Metric::overlap_ratio: out.emplace_back(metric, overlap_ratio(clusters.labels, truth, matching)); break;
      case Metric::mse:
        out.emplace_back(metric, state_mse(matched_pairs(clusters.centroids, truth_centroids, matching)));
        break;
      case Metric::cosine:
        out.emplace_back(metric, state_cosine(matched_pairs(clusters.centroids, truth_centroids, matching)));
        break;
      case Metric::sojourn_kl: {
        const auto mapped = plan.match_before_kl ? apply_matching(clusters.labels, matching) : clusters.labels;
        std::vector<std::vector<int>> est_segments;
        for (std::size_t i = 0; i < subjects.size(); ++i)
          est_segments.emplace_back(mapped.begin() + static_cast<std::ptrdiff_t>(i * frames),
                                    mapped.begin() + static_cast<std::ptrdiff_t>((i + 1) * frames));
        out.emplace_back(metric, sojourn_kl(est_segments, truth_segments, spec.n_states, 1.0, plan.kl_direction).value);
        break;
      }
    }
  }
  return out;
}

inline std::string results_csv(const SweepParam param, const std::vector<ResultRow>& rows) {
  std::string out = "sweep_param,sweep_value,noise_sigma,group,subject,method,metric,value\n";
  for (const auto& r : rows)
    out += to_string(param) + "," + detail::format_double(r.sweep_value) + "," + detail::format_double(r.noise_sigma) + "," + r.group +
           "," + r.subject + "," + to_string(r.method) + "," + to_string(r.metric) + "," + detail::format_double(r.value) + "\n";
  return out;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1); 0 for fewer than two values.
inline double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline nlohmann::json file_entry(const std::filesystem::path& root, const std::filesystem::path& rel) {
  const auto bytes = read_bytes(root / rel);
  return {{"path", rel.generic_string()}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}};
}

}  // namespace detail

inline nlohmann::json summarize(const ExperimentPlan& plan, const RunResult& result) {
  nlohmann::json cells = nlohmann::json::array(), comparisons = nlohmann::json::array();
  for (double v : plan.sweep_values)
    for (double level : plan.effective_noise_levels())
      for (auto metric : plan.metrics) {
        const double n = plan.cell_noise(v, level);
        for (auto method : plan.methods) {
          const auto vals = result.values(v, n, method, metric);
          cells.push_back({{"sweep_value", v},
                           {"noise_sigma", n},
                           {"method", to_string(method)},
                           {"metric", to_string(metric)},
                           {"n", vals.size()},
                           {"mean", detail::mean_of(vals)},
                           {"sd", detail::sd_of(vals)}});
        }
        if (std::find(plan.methods.begin(), plan.methods.end(), FcMethod::randcon) == plan.methods.end()) continue;
        const auto ref = result.values(v, n, FcMethod::randcon, metric);
        for (auto method : plan.methods) {
          if (method == FcMethod::randcon) continue;
          const auto other = result.values(v, n, method, metric);
          if (other.size() != ref.size() || ref.size() < 6) continue;
          const auto t = paired_group_compare(ref, other);
          comparisons.push_back({{"sweep_value", v},
                                 {"noise_sigma", n},
                                 {"metric", to_string(metric)},
                                 {"method", to_string(method)},
                                 {"reference", "randcon"},
                                 {"test", "wilcoxon-signed-rank"},
                                 {"statistic", t.statistic},
                                 {"p_value", t.p_value},
                                 {"stars", significance_stars(t.p_value)},
                                 {"n", ref.size()}});
        }
      }
  return {{"plan", plan.name}, {"sweep_param", to_string(plan.sweep_param)}, {"cells", std::move(cells)},
          {"comparisons", std::move(comparisons)}};
}

// Runs every (sweep value x noise level x pool x method) cell and writes
// results.csv, summary.json and manifest.json into opt.output_dir.
inline RunResult run_plan(const ExperimentPlan& plan, const RunOptions& opt = {}) {
  plan.validate();
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();
  const auto master = plan.base.seed;
  const auto bseed = bank_seed(master);
  auto log = [&](const std::string& msg) {
    if (opt.log) opt.log(msg);
  };

  RunResult result;
  nlohmann::json timings = nlohmann::json::array();
  for (std::size_t vi = 0; vi < plan.sweep_values.size(); ++vi) {
    const auto noises = plan.effective_noise_levels();
    for (std::size_t ni = 0; ni < noises.size(); ++ni) {
      const double value = plan.sweep_values[vi];
      const auto cell_start = clock::now();
      const auto spec = plan.spec_for(value, noises[ni]);
      const double noise = spec.noise_sigma;
      const auto est = plan.estimator_for(value);
      {
        std::ostringstream msg;
        msg << "sweep " << to_string(plan.sweep_param) << '=' << value << " noise=" << noise;
        log(msg.str());
      }
      std::optional<KernelBank> bank;
      if (std::find(plan.methods.begin(), plan.methods.end(), FcMethod::randcon) != plan.methods.end())
        bank = sample_gaussian_bank(est.kernel_count, est.width, bseed);
      std::vector<StatePattern> patterns;
      try {
        patterns = generate_state_patterns(spec, spec.seed);
      } catch (const Error& e) {
        for (auto method : plan.methods)
          result.failures.push_back({value, noise, "*", method, "simulate", e.what()});
        continue;
      }
      const auto pools = detail::clustering_pools(spec, plan.pooling);
      std::vector<detail::PoolOutcome> outcomes(pools.size());
      parallel_for(pools.size(), [&](std::size_t pi) {
        const auto& pool = pools[pi];
        auto& outcome = outcomes[pi];
        std::vector<SimulatedSubject> subjects;
        try {
          for (auto s : pool.subjects) subjects.push_back(generate_subject(spec, patterns, s));
        } catch (const std::exception& e) {
          for (auto method : plan.methods) outcome.failures.push_back({value, noise, pool.id, method, "simulate", e.what()});
          return;
        }
        for (auto method : plan.methods) {
          std::string stage;
          std::uint64_t degenerate = 0;
          try {
            const auto metrics = detail::evaluate_pool(plan, spec, patterns, subjects, method, est,
                                                       bank ? &*bank : nullptr, kmeans_seed(master, pi), stage,
                                                       degenerate);
            for (const auto& [metric, v] : metrics)
              outcome.rows.push_back({value, noise, pool.id, "all", method, metric, v});
          } catch (const std::exception& e) {
            outcome.failures.push_back({value, noise, pool.id, method, stage, e.what()});
          }
          outcome.degenerate[to_string(method)] += degenerate;
        }
      });
      for (auto& o : outcomes) {
        for (auto& r : o.rows) result.rows.push_back(std::move(r));
        for (auto& f : o.failures) result.failures.push_back(std::move(f));
        for (const auto& [k, v] : o.degenerate) result.degenerate_pairs[k] += v;
      }
      if (opt.record_timings)
        timings.push_back({{"sweep_value", value},
                           {"noise_sigma", noise},
                           {"seconds", std::chrono::duration<double>(clock::now() - cell_start).count()}});
    }
  }

  // Manifest.
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : result.failures)
    failures.push_back({{"sweep_value", f.sweep_value},
                        {"noise_sigma", f.noise_sigma},
                        {"group", f.group},
                        {"method", to_string(f.method)},
                        {"stage", f.stage},
                        {"message", f.message}});
  nlohmann::json degenerate = nlohmann::json::object();
  for (const auto& [k, v] : result.degenerate_pairs) degenerate[k] = v;
  const auto pools = detail::clustering_pools(plan.spec_for(plan.sweep_values.front(), plan.effective_noise_levels().front()),
                                              plan.pooling);
  nlohmann::json km = nlohmann::json::array();
  for (std::size_t pi = 0; pi < pools.size(); ++pi) km.push_back({{"pool", pools[pi].id}, {"seed", kmeans_seed(master, pi)}});
  nlohmann::json manifest{
      {"format", "randcon-run"},
      {"software", {{"name", "randcon"}, {"version", RANDCON_VERSION}}},
      {"command", to_string(plan.study)},
      {"plan", to_json(plan)},
      {"overrides", opt.overrides},
      {"seeds",
       {{"master", master},
        {"dataset", master},
        {"subject", "dataset seed XOR subject index"},
        {"kernel_bank", bseed},
        {"kmeans_restart", "pool seed XOR restart index"},
        {"kmeans_pools", std::move(km)}}},
      {"metric_notes",
       {{"overlap_ratio", "surrogate: fraction of frames whose matched estimated state equals the true state"},
        {"sojourn_kl",
         {{"direction", to_string(plan.kl_direction)}, {"alpha", 1.0}, {"matched_before_kl", plan.match_before_kl}}},
        {"truth_alignment", "each FC frame takes the true label at its window or receptive-field center"}}},
      {"counters",
       {{"rows", result.rows.size()}, {"failed_cells", result.failures.size()}, {"degenerate_pairs", std::move(degenerate)}}},
      {"failures", std::move(failures)}};
  if (opt.record_timings) {
    manifest["timings"] = {
        {"cells", std::move(timings)},
        {"total_seconds", std::chrono::duration<double>(clock::now() - t_start).count()}};
  }

  if (!opt.output_dir.empty()) {
    const auto& dir = opt.output_dir;
    std::filesystem::create_directories(dir);
    write_bytes(dir / "results.csv", detail::results_csv(plan.sweep_param, result.rows));
    write_bytes(dir / "summary.json", summarize(plan, result).dump(2) + "\n");
    manifest["files"] = nlohmann::json::array({detail::file_entry(dir, "results.csv"), detail::file_entry(dir, "summary.json")});
    result.manifest_path = dir / "manifest.json";
    write_bytes(result.manifest_path, manifest.dump(2) + "\n");
  }
  result.manifest = std::move(manifest);
  return result;
}

// Kernel-size study: valid padding, randcon against sliding-window at equal
// width, time-axis-free metrics only.
inline RunResult kernel_size_study(const ExperimentPlan& plan, const RunOptions& opt = {}) {
  if (plan.study != Study::kernel_size)
    throw ValidationError("plan '" + plan.name + "' is not a kernel-size study");
  return run_plan(plan, opt);
}

}  // namespace randcon
