#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "randcon/harness.hpp"

namespace randcon {

struct RealDataSubject {
  std::string id;
  RoiTimeSeries series;
  std::optional<std::string> covariate;  // group level, e.g. "female"
  std::optional<std::string> pair;       // pairing key for within-subject designs
};

struct RealDataOptions {
  FcMethod method = FcMethod::randcon;
  EstimatorSettings estimator;
  std::uint64_t seed = 0;
  std::optional<std::size_t> n_states;  // skips the elbow search when set
  std::size_t k_min = 2;
  std::size_t k_max = 8;
  std::size_t pca_dims = 0;  // 0 clusters the full lower-triangle vectors
  std::size_t restarts = 100;
  std::size_t max_iters = 20;
  bool zscore = false;
};

struct SubjectMetricRow {
  std::string subject;
  std::string covariate;
  std::string metric;
  std::string state;  // 1-based state, empty for whole-scan metrics
  double value = 0.0;
};

struct ComparisonRow {
  std::string metric;
  std::string state;
  std::string test;
  std::string level_a, level_b;
  std::size_t n_a = 0, n_b = 0;
  double statistic = 0.0;
  double p_value = 1.0;
};

struct RealDataResult {
  std::size_t n_states = 0;
  std::optional<ElbowResult> elbow;
  std::vector<std::vector<int>> labels;  // per subject, 0-based
  Matrix state_patterns;                 // n_states x N(N-1)/2 mean FC
  std::vector<SubjectMetricRow> subject_metrics;
  std::vector<ComparisonRow> comparisons;
  std::vector<std::string> notes;
  nlohmann::json manifest;
  std::filesystem::path manifest_path;
};

namespace detail {

inline void compare_levels(const std::vector<RealDataSubject>& subjects, const std::vector<SubjectMetricRow>& rows,
                           RealDataResult& out) {
  std::vector<std::string> levels;
  for (const auto& s : subjects)
    if (s.covariate && std::find(levels.begin(), levels.end(), *s.covariate) == levels.end())
      levels.push_back(*s.covariate);
  if (levels.empty()) return;
  if (levels.size() != 2)
    throw ValidationError("covariate comparison needs exactly two levels, found " + std::to_string(levels.size()));
  std::sort(levels.begin(), levels.end());
  const bool paired = std::all_of(subjects.begin(), subjects.end(), [](const auto& s) { return s.pair.has_value(); });
  std::map<std::string, const RealDataSubject*> by_id;
  for (const auto& s : subjects) by_id[s.id] = &s;

  // Keyed by (metric, state) in first-appearance order.
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& r : rows)
    if (std::find(keys.begin(), keys.end(), std::pair{r.metric, r.state}) == keys.end()) keys.emplace_back(r.metric, r.state);

  for (const auto& [metric, state] : keys) {
    ComparisonRow c{metric, state, paired ? "wilcoxon-signed-rank" : "mann-whitney-u", levels[0], levels[1]};
    try {
      if (paired) {
        std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> pairs;
        for (const auto& r : rows) {
          if (r.metric != metric || r.state != state) continue;
          const auto* s = by_id.at(r.subject);
          auto& slot = pairs[*s->pair];
          (r.covariate == levels[0] ? slot.first : slot.second) = r.value;
        }
        std::vector<double> a, b;
        for (const auto& [_, p] : pairs)
          if (p.first && p.second) a.push_back(*p.first), b.push_back(*p.second);
        const auto t = paired_group_compare(a, b);
        c.n_a = c.n_b = a.size();
        c.statistic = t.statistic;
        c.p_value = t.p_value;
      } else {
        std::vector<double> a, b;
        for (const auto& r : rows) {
          if (r.metric != metric || r.state != state || r.covariate.empty()) continue;
          (r.covariate == levels[0] ? a : b).push_back(r.value);
        }
        const auto t = unpaired_group_compare(a, b);
        c.n_a = a.size();
        c.n_b = b.size();
        c.statistic = t.u;
        c.p_value = t.p_value;
      }
      out.comparisons.push_back(std::move(c));
    } catch (const Error& e) {
      out.notes.push_back(metric + (state.empty() ? "" : " state " + state) + ": comparison skipped (" + e.what() + ")");
    }
  }
}

}  // namespace detail

// Estimate dynamic FC for every subject, pick the state count (elbow unless
// fixed), cluster the pooled frames and derive per-subject state metrics.
inline RealDataResult realdata_pipeline(const std::vector<RealDataSubject>& subjects, const RealDataOptions& opt,
                                        const std::filesystem::path& output_dir = {}) {
  if (subjects.size() < 1) throw ValidationError("real-data pipeline needs at least one subject");
  const std::size_t n = subjects.front().series.n_rois();
  const std::size_t t = subjects.front().series.n_timepoints();
  for (const auto& s : subjects) {
    if (s.series.n_rois() != n || s.series.n_timepoints() != t)
      throw ValidationError("subject '" + s.id + "' is " + std::to_string(s.series.n_rois()) + "x" +
                            std::to_string(s.series.n_timepoints()) + ", expected " + std::to_string(n) + "x" +
                            std::to_string(t));
  }
  {
    std::set<std::string> ids;
    for (const auto& s : subjects)
      if (!ids.insert(s.id).second) throw ValidationError("duplicate subject id '" + s.id + "'");
  }
  if (opt.k_min < 2 || opt.k_max < opt.k_min) throw ValidationError("elbow range needs 2 <= k_min <= k_max");

  const auto bank_seed_value = bank_seed(opt.seed);
  std::optional<KernelBank> bank;
  if (opt.method == FcMethod::randcon) bank = sample_gaussian_bank(opt.estimator.kernel_count, opt.estimator.width, bank_seed_value);
  const auto params = detail::fc_params_for(opt.method, opt.estimator, bank_seed_value);
  const std::size_t frames = expected_frames(opt.method, params, t);
  const std::size_t dim = lower_tri_length(n);

  RealDataResult out;
  Matrix pooled(frames * subjects.size(), dim);
  std::vector<FcSeries> series;
  series.reserve(subjects.size());
  std::uint64_t degenerate = 0;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto ts = opt.zscore ? zscore_rows(subjects[i].series).series : subjects[i].series;
    series.push_back(estimate_fc(ts, opt.method, params, bank ? &*bank : nullptr));
    degenerate += series.back().degenerate_pairs();
    for (std::size_t f = 0; f < frames; ++f) vectorize_lower_into(series.back().frame(f), n, pooled.row(i * frames + f));
  }

  Matrix features = pooled;
  if (opt.pca_dims > 0) features = project_principal_components(pooled, opt.pca_dims, combine_seed(opt.seed, 0x706361)).scores;
  const KMeansOptions km{opt.restarts, opt.max_iters, kmeans_seed(opt.seed, 0)};
  if (opt.n_states) {
    out.n_states = *opt.n_states;
  } else {
    out.elbow = elbow_k(features, opt.k_min, opt.k_max, km);
    out.n_states = out.elbow->k;
    if (!out.elbow->monotone) out.notes.push_back("elbow inertia curve was not monotone");
  }
  const auto clusters = kmeans(features, out.n_states, km);

  // Mean FC of the frames assigned to each state, on the original scale.
  out.state_patterns = Matrix(out.n_states, dim);
  std::vector<std::size_t> counts(out.n_states, 0);
  for (std::size_t r = 0; r < pooled.rows(); ++r) {
    const auto k = static_cast<std::size_t>(clusters.labels[r]);
    ++counts[k];
    auto dst = out.state_patterns.row(k);
    const auto src = pooled.row(r);
    for (std::size_t d = 0; d < dim; ++d) dst[d] += src[d];
  }
  for (std::size_t k = 0; k < out.n_states; ++k)
    for (auto& v : out.state_patterns.row(k)) v /= static_cast<double>(counts[k]);

  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& s = subjects[i];
    const std::string cov = s.covariate.value_or("");
    std::vector<int> labels(clusters.labels.begin() + static_cast<std::ptrdiff_t>(i * frames),
                            clusters.labels.begin() + static_cast<std::ptrdiff_t>((i + 1) * frames));
    const auto frac = fraction_of_time(labels, out.n_states);
    const auto dwell = mean_dwell_time(labels, out.n_states);
    for (std::size_t k = 0; k < out.n_states; ++k)
      out.subject_metrics.push_back({s.id, cov, "fraction_of_time", std::to_string(k + 1), frac[k]});
    for (std::size_t k = 0; k < out.n_states; ++k)
      out.subject_metrics.push_back({s.id, cov, "mean_dwell_time", std::to_string(k + 1), dwell.mean[k]});
    out.subject_metrics.push_back({s.id, cov, "fc_variability", "", fc_variability(series[i])});
    try {
      out.subject_metrics.push_back({s.id, cov, "centroid_similarity", "", centroid_similarity(series[i])});
    } catch (const DegenerateError& e) {
      out.notes.push_back(s.id + ": centroid similarity undefined (" + e.what() + ")");
    }
    out.labels.push_back(std::move(labels));
  }
  detail::compare_levels(subjects, out.subject_metrics, out);

  nlohmann::json notes = out.notes;
  nlohmann::json elbow = nullptr;
  if (out.elbow) elbow = {{"ks", out.elbow->ks}, {"inertias", out.elbow->inertias}, {"k", out.elbow->k}};
  nlohmann::json subject_ids = nlohmann::json::array();
  for (const auto& s : subjects) subject_ids.push_back(s.id);
  out.manifest = {
      {"format", "randcon-run"},
      {"software", {{"name", "randcon"}, {"version", RANDCON_VERSION}}},
      {"command", "realdata"},
      {"settings",
       {{"method", to_string(opt.method)},
        {"width", opt.estimator.width},
        {"kernel_count", opt.estimator.kernel_count},
        {"stride", opt.estimator.stride},
        {"padding", to_string(opt.estimator.padding)},
        {"phase_smoothing", opt.estimator.phase_smoothing},
        {"n_states", opt.n_states ? nlohmann::json(*opt.n_states) : nlohmann::json(nullptr)},
        {"k_range", {opt.k_min, opt.k_max}},
        {"pca_dims", opt.pca_dims},
        {"restarts", opt.restarts},
        {"max_iters", opt.max_iters},
        {"zscore", opt.zscore}}},
      {"seeds", {{"master", opt.seed}, {"kernel_bank", bank_seed_value}, {"kmeans", km.seed}}},
      {"subjects", std::move(subject_ids)},
      {"n_states", out.n_states},
      {"elbow", std::move(elbow)},
      {"counters", {{"degenerate_pairs", degenerate}, {"frames_per_subject", frames}}},
      {"notes", std::move(notes)}};

  if (!output_dir.empty()) {
    std::filesystem::create_directories(output_dir);
    const auto& roi = subjects.front().series.roi_labels();
    std::string patterns = "state,row,col,value\n";
    for (std::size_t k = 0; k < out.n_states; ++k) {
      std::size_t idx = 0;
      for (std::size_t r = 1; r < n; ++r)
        for (std::size_t c = 0; c < r; ++c, ++idx)
          patterns += std::to_string(k + 1) + "," + roi[r] + "," + roi[c] + "," +
                      detail::format_double(out.state_patterns(k, idx)) + "\n";
    }
    std::string labels = "subject,frame,center,state\n";
    for (std::size_t i = 0; i < subjects.size(); ++i)
      for (std::size_t f = 0; f < frames; ++f)
        labels += subjects[i].id + "," + std::to_string(f) + "," + std::to_string(series[i].center(f)) + "," +
                  std::to_string(out.labels[i][f] + 1) + "\n";
    std::string metrics = "subject,covariate,metric,state,value\n";
    for (const auto& r : out.subject_metrics)
      metrics += r.subject + "," + r.covariate + "," + r.metric + "," + r.state + "," + detail::format_double(r.value) + "\n";
    std::string comparisons = "metric,state,test,level_a,level_b,n_a,n_b,statistic,p_value,stars\n";
    for (const auto& c : out.comparisons)
      comparisons += c.metric + "," + c.state + "," + c.test + "," + c.level_a + "," + c.level_b + "," +
                     std::to_string(c.n_a) + "," + std::to_string(c.n_b) + "," + detail::format_double(c.statistic) +
                     "," + detail::format_double(c.p_value) + "," + significance_stars(c.p_value) + "\n";
    const std::vector<std::pair<std::string, std::string>> files{{"state_patterns.csv", patterns},
                                                                 {"labels.csv", labels},
                                                                 {"subject_metrics.csv", metrics},
                                                                 {"comparisons.csv", comparisons}};
    nlohmann::json inventory = nlohmann::json::array();
    for (const auto& [name, text] : files) {
      write_bytes(output_dir / name, text);
      inventory.push_back(detail::file_entry(output_dir, name));
    }
    out.manifest["files"] = std::move(inventory);
    out.manifest_path = output_dir / "manifest.json";
    write_bytes(out.manifest_path, out.manifest.dump(2) + "\n");
  }
  return out;
}

}  // namespace randcon
