#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "randcon/harness.hpp"
#include "randcon/realdata.hpp"
#include "randcon/report.hpp"

namespace randcon::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

struct Common {
  fs::path out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

inline void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  auto* o = cmd->add_option("-o,--out", c.out, "Output directory");
  if (out_required) o->required();
  cmd->add_option("--seed", c.seed, "Master seed");
  cmd->add_option("--threads", c.threads, "Worker threads (0 = all cores)")
      ->envname("RANDCON_THREADS")
      ->check(CLI::NonNegativeNumber);
}

inline nlohmann::json common_overrides(const Common& c) {
  nlohmann::json o = nlohmann::json::object();
  if (c.seed) o["seed"] = *c.seed;
  if (c.threads) o["threads"] = *c.threads;
  return o;
}

inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> v{"randcon", "sliding-window", "mtd", "phase-sync"};
  return v;
}

inline CsvLayout layout_from(const std::string& s) {
  return s == "time" ? CsvLayout::rows_are_time : CsvLayout::rows_are_rois;
}

inline std::pair<std::size_t, std::size_t> parse_k_range(const std::string& s) {
  const auto colon = s.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument("no colon");
    return {std::stoul(s.substr(0, colon)), std::stoul(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw ValidationError("--k-range expects MIN:MAX, got '" + s + "'");
  }
}

inline nlohmann::json inventory(const fs::path& root, const std::vector<fs::path>& rel) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& r : rel) files.push_back(detail::file_entry(root, r));
  return files;
}

inline nlohmann::json base_manifest(const std::string& command, const nlohmann::json& overrides) {
  return {{"format", "randcon-run"},
          {"software", {{"name", "randcon"}, {"version", RANDCON_VERSION}}},
          {"command", command},
          {"overrides", overrides}};
}

inline fs::path finish_manifest(const fs::path& dir, nlohmann::json manifest, std::ostream& out) {
  const auto path = dir / "manifest.json";
  write_bytes(path, manifest.dump(2) + "\n");
  out << "manifest: " << path.string() << "\n";
  return path;
}

// (estimated time index, 0-based state) pairs from a "t,state" file.
inline std::vector<std::pair<std::size_t, int>> read_indexed_labels(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("label file '" + path.string() + "' does not exist");
  const auto text = read_text_file(path);
  std::vector<std::pair<std::size_t, int>> out;
  std::size_t line = 0, pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const auto row = detail::trim(std::string_view(text).substr(pos, nl - pos));
    pos = nl + 1;
    ++line;
    if (row.empty()) continue;
    const auto cells = detail::split_csv_line(row);
    if (cells.size() < 2) throw ParseError(path.string() + ": row " + std::to_string(line) + " needs t,state");
    const auto t = detail::parse_number(cells.front());
    const auto s = detail::parse_number(cells.back());
    if (!t || !s) {
      if (line == 1) continue;
      throw ParseError(path.string() + ": non-numeric value at row " + std::to_string(line));
    }
    if (*t < 0 || *t != std::floor(*t) || *s < 1 || *s != std::floor(*s))
      throw ParseError(path.string() + ": row " + std::to_string(line) + " needs t >= 0 and state >= 1 integers");
    out.emplace_back(static_cast<std::size_t>(*t), static_cast<int>(*s) - 1);
  }
  if (out.empty()) throw ValidationError("label file '" + path.string() + "' has no rows");
  return out;
}

struct PlanSource {
  std::string preset;
  fs::path plan;
};

inline ExperimentPlan resolve_plan(const PlanSource& src, const std::string& fallback_preset) {
  if (!src.preset.empty() && !src.plan.empty()) throw ValidationError("give either --preset or --plan, not both");
  if (!src.plan.empty()) return load_plan(src.plan);
  if (!src.preset.empty()) return preset_plan(src.preset);
  if (!fallback_preset.empty()) return preset_plan(fallback_preset);
  throw ValidationError("a --preset or --plan is required");
}

struct EstimatorFlags {
  std::optional<std::vector<std::string>> methods;
  std::optional<std::size_t> kernels, width, stride, smooth;
  std::optional<std::string> padding;
};

inline void add_estimator_flags(CLI::App* cmd, EstimatorFlags& f, bool multi_method) {
  if (multi_method)
    cmd->add_option("--method", f.methods, "Methods, comma separated")->delimiter(',')->check(CLI::IsMember(method_names()));
  else
    cmd->add_option("--method", f.methods, "FC method")->expected(1)->check(CLI::IsMember(method_names()));
  cmd->add_option("--kernels", f.kernels, "Random kernel count K")->check(CLI::PositiveNumber);
  cmd->add_option("--width", f.width, "Kernel or window width W")->check(CLI::PositiveNumber);
  cmd->add_option("--stride", f.stride, "Output stride")->check(CLI::PositiveNumber);
  cmd->add_option("--padding", f.padding, "Convolution padding")->check(CLI::IsMember({"same", "valid"}));
  cmd->add_option("--smooth", f.smooth, "Phase-sync smoothing window (0 = none)");
}

inline void apply_estimator_flags(const EstimatorFlags& f, EstimatorSettings& e, nlohmann::json& overrides) {
  if (f.kernels) e.kernel_count = *f.kernels, overrides["kernel_count"] = *f.kernels;
  if (f.width) e.width = *f.width, overrides["width"] = *f.width;
  if (f.stride) e.stride = *f.stride, overrides["stride"] = *f.stride;
  if (f.padding) e.padding = padding_from_string(*f.padding), overrides["padding"] = *f.padding;
  if (f.smooth) e.phase_smoothing = *f.smooth, overrides["phase_smoothing"] = *f.smooth;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic functional connectivity with random convolution kernels", "randcon"};
  app.set_version_flag("--version", std::string(RANDCON_VERSION));
  app.require_subcommand(0, 1);

  // simulate
  Common sim_c;
  PlanSource sim_src;
  std::optional<std::size_t> sim_states, sim_rois, sim_tp, sim_groups, sim_subjects;
  std::optional<double> sim_noise, sim_shape, sim_scale;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic multi-state dataset");
  add_common(sim, sim_c);
  sim->add_option("--preset", sim_src.preset, "Take the simulation settings of a preset");
  sim->add_option("-p,--plan", sim_src.plan, "Take the simulation settings of a plan file");
  sim->add_option("--states", sim_states, "Number of states M");
  sim->add_option("--rois", sim_rois, "Number of ROIs N (multiple of 10)");
  sim->add_option("--timepoints", sim_tp, "Time points T");
  sim->add_option("--noise", sim_noise, "Gaussian noise sigma");
  sim->add_option("--shape", sim_shape, "Gamma dwell-time shape");
  sim->add_option("--scale", sim_scale, "Gamma dwell-time scale");
  sim->add_option("--groups", sim_groups, "Number of groups");
  sim->add_option("--subjects", sim_subjects, "Subjects per group");

  // estimate
  Common est_c;
  EstimatorFlags est_f;
  std::vector<fs::path> est_inputs;
  std::string est_layout = "rois";
  bool est_zscore = false;
  auto* est = app.add_subcommand("estimate", "Estimate dynamic FC from ROI time-series CSV files");
  add_common(est, est_c);
  add_estimator_flags(est, est_f, false);
  est->add_option("--layout", est_layout, "CSV orientation: rois (rows are ROIs) or time")
      ->check(CLI::IsMember({"rois", "time"}));
  est->add_flag("--zscore", est_zscore, "Z-score each ROI before estimation");
  est->add_option("inputs", est_inputs, "Input CSV files")->required();

  // cluster
  Common clu_c;
  std::vector<fs::path> clu_inputs;
  std::optional<std::size_t> clu_states;
  std::string clu_range = "2:8";
  std::size_t clu_pca = 0, clu_restarts = 100, clu_iters = 20;
  auto* clu = app.add_subcommand("cluster", "Cluster pooled FC frames into states");
  add_common(clu, clu_c);
  clu->add_option("--states", clu_states, "Number of states (skips the elbow search)");
  clu->add_option("--k-range", clu_range, "Elbow search range MIN:MAX");
  clu->add_option("--pca", clu_pca, "Project onto this many principal components first (0 = off)");
  clu->add_option("--restarts", clu_restarts, "k-means restarts")->check(CLI::PositiveNumber);
  clu->add_option("--iters", clu_iters, "Lloyd iterations per restart")->check(CLI::PositiveNumber);
  clu->add_option("inputs", clu_inputs, "FC container files (.rcfc)")->required();

  // evaluate
  Common ev_c;
  fs::path ev_est, ev_truth;
  std::optional<std::size_t> ev_states;
  auto* ev = app.add_subcommand("evaluate", "Score estimated state labels against true labels");
  add_common(ev, ev_c);
  ev->add_option("--estimated", ev_est, "Estimated labels (t,state)")->required();
  ev->add_option("--truth", ev_truth, "True labels (t,state)")->required();
  ev->add_option("--states", ev_states, "Number of states (default: largest label seen)");

  // sweep and kernel-study share flags
  struct RunFlags {
    Common c;
    PlanSource src;
    EstimatorFlags f;
    std::optional<std::size_t> restarts;
    bool timings = false;
  } sw_f, ks_f;
  auto add_run = [&](CLI::App* cmd, RunFlags& r) {
    add_common(cmd, r.c);
    cmd->add_option("--preset", r.src.preset, "Named experiment preset");
    cmd->add_option("-p,--plan", r.src.plan, "Plan file (.toml or .json, or a run manifest to replay)");
    add_estimator_flags(cmd, r.f, true);
    cmd->add_option("--restarts", r.restarts, "k-means restarts")->check(CLI::PositiveNumber);
    cmd->add_flag("--timings", r.timings, "Record wall-clock timings in the manifest");
  };
  auto* sw = app.add_subcommand("sweep", "Run a simulation sweep");
  add_run(sw, sw_f);
  auto* ks = app.add_subcommand("kernel-study", "Run the kernel-size study (default preset desk-kernel-size)");
  add_run(ks, ks_f);

  // realdata
  Common rd_c;
  EstimatorFlags rd_f;
  std::vector<fs::path> rd_inputs;
  fs::path rd_cov;
  std::optional<std::size_t> rd_states;
  std::string rd_range = "2:8", rd_layout = "rois";
  std::size_t rd_pca = 0, rd_restarts = 100, rd_iters = 20;
  bool rd_zscore = false;
  auto* rd = app.add_subcommand("realdata", "State analysis of empirical ROI time series");
  add_common(rd, rd_c);
  add_estimator_flags(rd, rd_f, false);
  rd->add_option("--covariates", rd_cov, "CSV with subject,group[,pair] columns");
  rd->add_option("--states", rd_states, "Number of states (skips the elbow search)");
  rd->add_option("--k-range", rd_range, "Elbow search range MIN:MAX");
  rd->add_option("--pca", rd_pca, "Project onto this many principal components first (0 = off)");
  rd->add_option("--restarts", rd_restarts, "k-means restarts")->check(CLI::PositiveNumber);
  rd->add_option("--iters", rd_iters, "Lloyd iterations per restart")->check(CLI::PositiveNumber);
  rd->add_option("--layout", rd_layout, "CSV orientation: rois or time")->check(CLI::IsMember({"rois", "time"}));
  rd->add_flag("--zscore", rd_zscore, "Z-score each ROI before estimation");
  rd->add_option("inputs", rd_inputs, "Subject CSV files (subject id = file stem)")->required();

  // report
  fs::path rep_in, rep_out;
  bool rep_svg = false;
  auto* rep = app.add_subcommand("report", "Summarize a results.csv into figure tables");
  rep->add_option("results", rep_in, "results.csv from a sweep")->required();
  rep->add_option("-o,--out", rep_out, "Output directory")->required();
  rep->add_flag("--svg", rep_svg, "Also draw SVG charts");

  if (argc <= 1) {
    out << app.help();
    return kExitValidation;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << RANDCON_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    // Name unrecognized tokens first; CLI11 would otherwise report a missing
    // required option ahead of them.
    std::vector<std::string> extras = app.remaining();
    for (const auto* sub : app.get_subcommands())
      for (const auto& r : sub->remaining()) extras.push_back(r);
    std::string unknown;
    for (const auto& x : extras)
      if (x.rfind("-", 0) == 0) unknown += (unknown.empty() ? "" : ", ") + x;
    if (!unknown.empty())
      err << "error: unknown option " << unknown << "\n";
    else
      err << "error: " << e.what() << "\n";
    err << "run 'randcon --help' for usage\n";
    return kExitValidation;
  }
  if (app.get_subcommands().empty()) {
    out << app.help();
    return kExitValidation;
  }

  auto apply_threads = [](const Common& c) {
    if (c.threads) set_thread_count(*c.threads);
  };

  try {
    if (*sim) {
      apply_threads(sim_c);
      SimulationSpec spec;
      if (!sim_src.preset.empty() || !sim_src.plan.empty()) spec = resolve_plan(sim_src, "").base;
      auto ov = common_overrides(sim_c);
      if (sim_c.seed) spec.seed = *sim_c.seed;
      if (sim_states) spec.n_states = *sim_states, ov["n_states"] = *sim_states;
      if (sim_rois) spec.n_rois = *sim_rois, ov["n_rois"] = *sim_rois;
      if (sim_tp) spec.n_timepoints = *sim_tp, ov["n_timepoints"] = *sim_tp;
      if (sim_noise) spec.noise_sigma = *sim_noise, ov["noise_sigma"] = *sim_noise;
      if (sim_shape) spec.gamma_shape = *sim_shape, ov["gamma_shape"] = *sim_shape;
      if (sim_scale) spec.gamma_scale = *sim_scale, ov["gamma_scale"] = *sim_scale;
      if (sim_groups) spec.n_groups = *sim_groups, ov["n_groups"] = *sim_groups;
      if (sim_subjects) spec.subjects_per_group = *sim_subjects, ov["subjects_per_group"] = *sim_subjects;
      spec.validate();
      const auto files = write_dataset(sim_c.out, generate_dataset(spec));
      auto m = base_manifest("simulate", ov);
      m["spec"] = to_json(spec);
      m["seeds"] = {{"master", spec.seed}, {"subject", "master XOR subject index"}};
      m["files"] = inventory(sim_c.out, files);
      finish_manifest(sim_c.out, std::move(m), out);
      return kExitOk;
    }

    if (*est) {
      apply_threads(est_c);
      auto ov = common_overrides(est_c);
      EstimatorSettings e;
      apply_estimator_flags(est_f, e, ov);
      const auto method = fc_method_from_string(est_f.methods ? est_f.methods->front() : "randcon");
      const std::uint64_t seed = est_c.seed.value_or(0);
      const auto bseed = bank_seed(seed);
      std::vector<RoiTimeSeries> inputs;
      for (const auto& p : est_inputs) inputs.push_back(load_csv(p, layout_from(est_layout)));
      std::optional<KernelBank> bank;
      if (method == FcMethod::randcon) bank = sample_gaussian_bank(e.kernel_count, e.width, bseed);
      const auto params = detail::fc_params_for(method, e, bseed);
      fs::create_directories(est_c.out);
      std::vector<fs::path> written;
      nlohmann::json items = nlohmann::json::array();
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto ts = est_zscore ? zscore_rows(inputs[i]).series : inputs[i];
        const auto fc = estimate_fc(ts, method, params, bank ? &*bank : nullptr);
        const fs::path name = est_inputs[i].stem().string() + ".rcfc";
        if (std::find(written.begin(), written.end(), name) != written.end())
          throw ValidationError("two inputs share the file stem '" + est_inputs[i].stem().string() + "'");
        save_fc_series(est_c.out / name, fc);
        written.push_back(name);
        items.push_back({{"input", est_inputs[i].string()},
                         {"input_sha256", sha256_file(est_inputs[i])},
                         {"output", name.string()},
                         {"frames", fc.frames()},
                         {"degenerate_pairs", fc.degenerate_pairs()}});
      }
      if (bank) {
        write_bytes(est_c.out / "kernel_bank.json", to_json(*bank).dump(2) + "\n");
        written.emplace_back("kernel_bank.json");
      }
      auto m = base_manifest("estimate", ov);
      m["settings"] = {{"method", to_string(method)}, {"params", to_json(params)}, {"zscore", est_zscore},
                       {"layout", est_layout}};
      m["seeds"] = {{"master", seed}, {"kernel_bank", bseed}};
      m["inputs"] = std::move(items);
      m["files"] = inventory(est_c.out, written);
      finish_manifest(est_c.out, std::move(m), out);
      return kExitOk;
    }

    if (*clu) {
      apply_threads(clu_c);
      auto ov = common_overrides(clu_c);
      const std::uint64_t seed = clu_c.seed.value_or(0);
      std::vector<FcSeries> series;
      for (const auto& p : clu_inputs) {
        if (!fs::exists(p)) throw ValidationError("FC file '" + p.string() + "' does not exist");
        series.push_back(load_fc_series(p));
        if (series.back().n() != series.front().n())
          throw ValidationError("'" + p.string() + "' has " + std::to_string(series.back().n()) + " ROIs, expected " +
                                std::to_string(series.front().n()));
      }
      const std::size_t n = series.front().n(), dim = lower_tri_length(n);
      std::size_t total = 0;
      for (const auto& s : series) total += s.frames();
      Matrix pooled(total, dim);
      std::size_t row = 0;
      for (const auto& s : series)
        for (std::size_t f = 0; f < s.frames(); ++f) vectorize_lower_into(s.frame(f), n, pooled.row(row++));
      Matrix features = clu_pca > 0 ? project_principal_components(pooled, clu_pca, combine_seed(seed, 0x706361)).scores
                                    : pooled;
      const KMeansOptions km{clu_restarts, clu_iters, kmeans_seed(seed, 0)};
      std::optional<ElbowResult> elbow;
      std::size_t k = 0;
      if (clu_states) {
        k = *clu_states;
      } else {
        const auto [lo, hi] = parse_k_range(clu_range);
        elbow = elbow_k(features, lo, hi, km);
        k = elbow->k;
      }
      const auto res = kmeans(features, k, km);
      fs::create_directories(clu_c.out / "labels");
      std::vector<fs::path> written;
      // Per-state mean FC on the original scale.
      std::string cent = "state,row,col,value\n";
      {
        Matrix mean(k, dim);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t r = 0; r < total; ++r) {
          const auto s = static_cast<std::size_t>(res.labels[r]);
          ++counts[s];
          for (std::size_t d = 0; d < dim; ++d) mean(s, d) += pooled(r, d);
        }
        for (std::size_t s = 0; s < k; ++s) {
          std::size_t idx = 0;
          for (std::size_t r = 1; r < n; ++r)
            for (std::size_t c = 0; c < r; ++c, ++idx)
              cent += std::to_string(s + 1) + "," + std::to_string(r) + "," + std::to_string(c) + "," +
                      detail::format_double(mean(s, idx) / static_cast<double>(counts[s])) + "\n";
        }
      }
      write_bytes(clu_c.out / "centroids.csv", cent);
      written.emplace_back("centroids.csv");
      row = 0;
      for (std::size_t i = 0; i < series.size(); ++i) {
        std::string text = "t,state\n";
        for (std::size_t f = 0; f < series[i].frames(); ++f)
          text += std::to_string(series[i].center(f)) + "," + std::to_string(res.labels[row++] + 1) + "\n";
        const fs::path name = fs::path("labels") / (clu_inputs[i].stem().string() + ".csv");
        if (std::find(written.begin(), written.end(), name) != written.end())
          throw ValidationError("two inputs share the file stem '" + clu_inputs[i].stem().string() + "'");
        write_bytes(clu_c.out / name, text);
        written.push_back(name);
      }
      nlohmann::json summary{{"n_states", k},
                             {"db_index", res.db_index},
                             {"inertia", res.inertia},
                             {"winning_restart", res.winning_run},
                             {"restarts", res.n_runs}};
      if (elbow) summary["elbow"] = {{"ks", elbow->ks}, {"inertias", elbow->inertias}, {"monotone", elbow->monotone}};
      write_bytes(clu_c.out / "clusters.json", summary.dump(2) + "\n");
      written.emplace_back("clusters.json");
      auto m = base_manifest("cluster", ov);
      m["settings"] = {{"restarts", clu_restarts}, {"max_iters", clu_iters}, {"pca_dims", clu_pca},
                       {"k_range", clu_range}, {"n_states", clu_states ? nlohmann::json(*clu_states) : nlohmann::json(nullptr)}};
      m["seeds"] = {{"master", seed}, {"kmeans", km.seed}};
      nlohmann::json in = nlohmann::json::array();
      for (const auto& p : clu_inputs) in.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
      m["inputs"] = std::move(in);
      m["files"] = inventory(clu_c.out, written);
      finish_manifest(clu_c.out, std::move(m), out);
      return kExitOk;
    }

    if (*ev) {
      apply_threads(ev_c);
      const auto estimated = read_indexed_labels(ev_est);
      const auto truth_all = read_indexed_labels(ev_truth);
      std::vector<int> truth_by_t;
      for (const auto& [t, s] : truth_all) {
        if (t >= truth_by_t.size()) truth_by_t.resize(t + 1, -1);
        truth_by_t[t] = s;
      }
      std::vector<int> est_labels, truth;
      for (const auto& [t, s] : estimated) {
        if (t >= truth_by_t.size() || truth_by_t[t] < 0)
          throw ValidationError("estimated time index " + std::to_string(t) + " has no true label");
        est_labels.push_back(s);
        truth.push_back(truth_by_t[t]);
      }
      int top = 0;
      for (int v : est_labels) top = std::max(top, v);
      for (int v : truth) top = std::max(top, v);
      const std::size_t m_states = ev_states.value_or(static_cast<std::size_t>(top) + 1);
      if (static_cast<std::size_t>(top) >= m_states)
        throw ValidationError("labels exceed --states " + std::to_string(m_states));
      // Match estimated to true states by maximum co-occurrence.
      Matrix cost(m_states, m_states);
      for (std::size_t i = 0; i < est_labels.size(); ++i)
        cost(static_cast<std::size_t>(est_labels[i]), static_cast<std::size_t>(truth[i])) -= 1.0;
      const auto perm = lexicographic_min_assignment(cost);
      const StateMatching matching{perm, assignment_cost(cost, perm)};
      const auto mapped = apply_matching(est_labels, matching);
      const auto kl = sojourn_kl(mapped, truth, m_states);
      nlohmann::json metrics{{"ari", ari(est_labels, truth)},
                             {"overlap_ratio", overlap_ratio(est_labels, truth, matching)},
                             {"sojourn_kl", kl.value},
                             {"sojourn_kl_excluded_states", kl.excluded},
                             {"n_states", m_states},
                             {"n_frames", est_labels.size()},
                             {"matching", perm}};
      fs::create_directories(ev_c.out);
      write_bytes(ev_c.out / "metrics.json", metrics.dump(2) + "\n");
      auto m = base_manifest("evaluate", common_overrides(ev_c));
      m["inputs"] = {{{"path", ev_est.string()}, {"sha256", sha256_file(ev_est)}},
                     {{"path", ev_truth.string()}, {"sha256", sha256_file(ev_truth)}}};
      m["metric_notes"] = {{"matching", "estimated states matched to true states by maximum co-occurrence"},
                           {"sojourn_kl", {{"direction", "estimated-to-true"}, {"alpha", 1.0}}}};
      m["files"] = inventory(ev_c.out, {"metrics.json"});
      finish_manifest(ev_c.out, std::move(m), out);
      return kExitOk;
    }

    for (auto [cmd, flags, fallback] : {std::tuple{sw, &sw_f, ""}, std::tuple{ks, &ks_f, "desk-kernel-size"}}) {
      if (!*cmd) continue;
      apply_threads(flags->c);
      auto plan = resolve_plan(flags->src, fallback);
      auto ov = common_overrides(flags->c);
      if (!flags->src.preset.empty()) ov["preset"] = flags->src.preset;
      if (!flags->src.plan.empty()) ov["plan_file"] = flags->src.plan.string();
      if (flags->c.seed) plan.base.seed = *flags->c.seed;
      if (flags->f.methods) {
        plan.methods.clear();
        for (const auto& name : *flags->f.methods) plan.methods.push_back(fc_method_from_string(name));
        ov["methods"] = *flags->f.methods;
      }
      apply_estimator_flags(flags->f, plan.estimator, ov);
      if (flags->restarts) plan.restarts = *flags->restarts, ov["restarts"] = *flags->restarts;
      RunOptions opt;
      opt.output_dir = flags->c.out;
      opt.overrides = ov;
      opt.record_timings = flags->timings;
      opt.log = [&err](const std::string& msg) { err << msg << "\n"; };
      const auto result = cmd == ks ? kernel_size_study(plan, opt) : run_plan(plan, opt);
      out << "rows: " << result.rows.size() << ", failed cells: " << result.failures.size() << "\n";
      out << "manifest: " << result.manifest_path.string() << "\n";
      return kExitOk;
    }

    if (*rd) {
      apply_threads(rd_c);
      auto ov = common_overrides(rd_c);
      RealDataOptions opt;
      apply_estimator_flags(rd_f, opt.estimator, ov);
      if (rd_f.methods) opt.method = fc_method_from_string(rd_f.methods->front());
      opt.seed = rd_c.seed.value_or(0);
      opt.n_states = rd_states;
      std::tie(opt.k_min, opt.k_max) = parse_k_range(rd_range);
      opt.pca_dims = rd_pca;
      opt.restarts = rd_restarts;
      opt.max_iters = rd_iters;
      opt.zscore = rd_zscore;
      std::map<std::string, std::pair<std::string, std::optional<std::string>>> cov;
      if (!rd_cov.empty()) {
        if (!fs::exists(rd_cov)) throw ValidationError("covariate file '" + rd_cov.string() + "' does not exist");
        const auto text = read_text_file(rd_cov);
        std::size_t pos = 0, line = 0;
        while (pos < text.size()) {
          auto nl = text.find('\n', pos);
          if (nl == std::string::npos) nl = text.size();
          const auto row_text = detail::trim(std::string_view(text).substr(pos, nl - pos));
          pos = nl + 1;
          if (row_text.empty() || ++line == 1) continue;  // header
          const auto cells = detail::split_csv_line(row_text);
          if (cells.size() < 2) throw ParseError(rd_cov.string() + ": expected subject,group[,pair]");
          cov[std::string(cells[0])] = {std::string(cells[1]),
                                        cells.size() > 2 ? std::optional<std::string>(std::string(cells[2])) : std::nullopt};
        }
      }
      std::vector<RealDataSubject> subjects;
      for (const auto& p : rd_inputs) {
        RealDataSubject s{p.stem().string(), load_csv(p, layout_from(rd_layout)), std::nullopt, std::nullopt};
        if (const auto it = cov.find(s.id); it != cov.end()) s.covariate = it->second.first, s.pair = it->second.second;
        subjects.push_back(std::move(s));
      }
      auto res = realdata_pipeline(subjects, opt, rd_c.out);
      res.manifest["overrides"] = ov;
      write_bytes(res.manifest_path, res.manifest.dump(2) + "\n");
      out << "states: " << res.n_states << "\n";
      out << "manifest: " << res.manifest_path.string() << "\n";
      return kExitOk;
    }

    if (*rep) {
      const auto res = write_report(rep_in, rep_out, rep_svg);
      out << "tables: " << res.tables.size() << "\n";
      out << "manifest: " << res.manifest_path.string() << "\n";
      return kExitOk;
    }
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace randcon::cli
