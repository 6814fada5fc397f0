#include <gtest/gtest.h>

#include <filesystem>

#include "randcon/harness.hpp"
#include "randcon/realdata.hpp"

using namespace randcon;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("randcon_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

RunOptions to(const fs::path& dir) {
  RunOptions o;
  o.output_dir = dir;
  return o;
}

ExperimentPlan tiny_plan() {
  auto p = preset_plan("desk-smoke");
  p.sweep_values = {0.5};
  p.base.n_groups = 2;
  p.restarts = 3;
  return p;
}

}  // namespace

TEST(Presets, AllResolveAndValidate) {
  for (const auto& name : preset_names()) {
    const auto p = preset_plan(name);
    EXPECT_EQ(p.name, name);
    EXPECT_NO_THROW(p.validate()) << name;
  }
  EXPECT_THROW(preset_plan("paper-nothing"), ValidationError);
  const auto noise = preset_plan("paper-noise");
  EXPECT_EQ(noise.base.n_rois, 90u);
  EXPECT_EQ(noise.base.n_subjects(), 600u);
  EXPECT_EQ(noise.sweep_values.size(), 7u);
  EXPECT_EQ(noise.estimator.width, 3u);
  EXPECT_EQ(noise.restarts, 100u);
  const auto ks = preset_plan("paper-kernel-size");
  EXPECT_EQ(ks.study, Study::kernel_size);
  EXPECT_EQ(ks.estimator.padding, Padding::valid);
  const auto kc = preset_plan("paper-kernel-count");
  EXPECT_EQ(kc.sweep_values, (std::vector<double>{5, 10, 20, 40, 80, 160}));
  EXPECT_EQ(kc.noise_levels, (std::vector<double>{0.6, 1.1, 1.6, 2.6}));
}

TEST(PlanParsing, JsonRoundTrip) {
  for (const auto& name : preset_names()) {
    const auto p = preset_plan(name);
    EXPECT_EQ(to_json(plan_from_json(to_json(p))), to_json(p)) << name;
  }
}

TEST(PlanParsing, TomlMatchesJson) {
  const std::string toml_text = R"(
name = "mine"
preset = "desk-smoke"
seed = 9
methods = ["randcon", "mtd"]
[sweep]
param = "kernel_count"
values = [5, 20]
noise_levels = [0.5, 1.5]
[estimator]
width = 4
)";
  const std::string json_text = R"({"name":"mine","preset":"desk-smoke","seed":9,"methods":["randcon","mtd"],
    "sweep":{"param":"kernel_count","values":[5,20],"noise_levels":[0.5,1.5]},"estimator":{"width":4}})";
  const auto a = plan_from_json(parse_plan_text(toml_text, true, "plan.toml"));
  const auto b = plan_from_json(parse_plan_text(json_text, false, "plan.json"));
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(a.base.seed, 9u);
  EXPECT_EQ(a.base.n_rois, 20u);
  EXPECT_EQ(a.estimator.width, 4u);
  EXPECT_NO_THROW(a.validate());
  EXPECT_THROW(parse_plan_text("name = ", true, "bad.toml"), ParseError);
  EXPECT_THROW(parse_plan_text("{", false, "bad.json"), ParseError);
}

TEST(PlanParsing, RejectsBadPlansBeforeCompute) {
  try {
    plan_from_json(nlohmann::json::parse(R"({"preset":"desk-smoke","methods":["randcon","sliding-windw"]})"));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("sliding-windw"), std::string::npos);
  }
  EXPECT_THROW(plan_from_json(nlohmann::json::parse(R"({"colour":"red"})")), ValidationError);
  EXPECT_THROW(plan_from_json(nlohmann::json::parse(R"({"sweep":{"param":"n_rios"}})")), ValidationError);
  EXPECT_THROW(plan_from_json(nlohmann::json::parse(R"({"estimator":{"padding":"reflect"}})")), ValidationError);
  EXPECT_THROW(plan_from_json(nlohmann::json::parse(R"({"estimator":{"width":-3}})")), ValidationError);
  EXPECT_THROW(load_plan("/nonexistent/plan.toml"), ValidationError);

  auto p = preset_plan("desk-noise");
  p.noise_levels = {0.5};
  EXPECT_THROW(p.validate(), ValidationError);
  p = preset_plan("desk-roi");
  p.sweep_values = {30, 45.5};
  EXPECT_THROW(p.validate(), ValidationError);
  p = preset_plan("desk-roi");
  p.sweep_values = {35};
  EXPECT_THROW(p.validate(), ParameterError);
}

TEST(PlanParsing, KernelSizeStudyRules) {
  auto p = preset_plan("desk-kernel-size");
  p.estimator.padding = Padding::same;
  EXPECT_THROW(p.validate(), ValidationError);
  p = preset_plan("desk-kernel-size");
  p.methods.push_back(FcMethod::mtd);
  EXPECT_THROW(p.validate(), ValidationError);
  p = preset_plan("desk-kernel-size");
  p.metrics.push_back(Metric::ari);
  EXPECT_THROW(p.validate(), ValidationError);
  EXPECT_THROW(kernel_size_study(preset_plan("desk-smoke")), ValidationError);
}

TEST(PlanCells, SweepValuesReachTheRightKnob) {
  auto p = preset_plan("desk-kernel-count");
  EXPECT_EQ(p.estimator_for(80).kernel_count, 80u);
  EXPECT_EQ(p.spec_for(80, 1.6).noise_sigma, 1.6);
  EXPECT_EQ(p.spec_for(80, 1.6).n_rois, 30u);
  p = preset_plan("desk-tr");
  EXPECT_EQ(p.spec_for(300, 0.6).n_timepoints, 300u);
  p = preset_plan("desk-scale-param");
  EXPECT_EQ(p.spec_for(7, 0.6).gamma_scale, 7.0);
}

TEST(RunPlan, ProducesEveryCellAndConsistentManifest) {
  const auto plan = tiny_plan();
  const auto dir = fresh_dir("cells");
  const auto r = run_plan(plan, to(dir));
  EXPECT_TRUE(r.failures.empty());
  EXPECT_EQ(r.rows.size(), 2u * plan.methods.size() * plan.metrics.size());
  for (const auto& row : r.rows) {
    EXPECT_TRUE(std::isfinite(row.value));
    if (row.metric == Metric::ari) {
      EXPECT_LE(row.value, 1.0);
    }
    if (row.metric == Metric::overlap_ratio || row.metric == Metric::sojourn_kl || row.metric == Metric::mse) {
      EXPECT_GE(row.value, 0.0);
    }
  }
  const auto csv = read_text_file(dir / "results.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "sweep_param,sweep_value,noise_sigma,group,subject,method,metric,value");
  const auto manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
  EXPECT_EQ(manifest["format"], "randcon-run");
  EXPECT_FALSE(manifest.contains("timings"));
  for (const auto& f : manifest["files"])
    EXPECT_EQ(f["sha256"].get<std::string>(), sha256_file(dir / f["path"].get<std::string>()));
  EXPECT_EQ(to_json(plan_from_json(manifest)), to_json(plan));
}

TEST(RunPlan, ByteIdenticalAcrossRunsAndThreadCounts) {
  const auto plan = tiny_plan();
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b"), c = fresh_dir("det_c");
  run_plan(plan, to(a));
  run_plan(plan, to(b));
  set_thread_count(1);
  run_plan(plan, to(c));
  set_thread_count(0);
  for (const char* f : {"results.csv", "summary.json", "manifest.json"}) {
    EXPECT_EQ(sha256_file(a / f), sha256_file(b / f)) << f;
    EXPECT_EQ(sha256_file(a / f), sha256_file(c / f)) << f;
  }
}

TEST(RunPlan, ReplayFromManifestReproducesOutputs) {
  const auto a = fresh_dir("replay_a"), b = fresh_dir("replay_b");
  run_plan(tiny_plan(), to(a));
  run_plan(load_plan(a / "manifest.json"), to(b));
  for (const char* f : {"results.csv", "summary.json", "manifest.json"})
    EXPECT_EQ(sha256_file(a / f), sha256_file(b / f)) << f;
}

TEST(RunPlan, FailedCellsAreRecordedAndOthersContinue) {
  auto plan = tiny_plan();
  plan.methods = {FcMethod::randcon, FcMethod::phase_sync};
  plan.estimator.phase_smoothing = 500;  // longer than T: every phase-sync cell fails
  const auto r = run_plan(plan);
  ASSERT_EQ(r.failures.size(), 2u);
  for (const auto& f : r.failures) {
    EXPECT_EQ(f.method, FcMethod::phase_sync);
    EXPECT_EQ(f.stage, "estimate");
    EXPECT_NE(f.message.find("smoothing"), std::string::npos);
  }
  EXPECT_EQ(r.rows.size(), 2u * plan.metrics.size());
  EXPECT_EQ(r.manifest["counters"]["failed_cells"], 2);
}

TEST(RunPlan, PoolingAllAndTimings) {
  auto plan = tiny_plan();
  plan.pooling = Pooling::all;
  plan.methods = {FcMethod::sliding_window};
  RunOptions opt;
  opt.record_timings = true;
  const auto r = run_plan(plan, opt);
  ASSERT_EQ(r.rows.size(), plan.metrics.size());
  EXPECT_EQ(r.rows.front().group, "all");
  EXPECT_TRUE(r.manifest.contains("timings"));
}

TEST(KernelSizeStudy, EmitsOnlyAxisFreeMetrics) {
  auto plan = preset_plan("desk-kernel-size");
  plan.base = tiny_plan().base;
  plan.sweep_values = {4, 6};
  plan.restarts = 3;
  const auto r = kernel_size_study(plan);
  EXPECT_TRUE(r.failures.empty());
  EXPECT_EQ(r.rows.size(), 2u * 2u * 2u * 3u);
  for (const auto& row : r.rows) EXPECT_NE(row.metric, Metric::ari);
}

TEST(Summary, MeanSdAndStars) {
  auto plan = tiny_plan();
  plan.base.n_groups = 6;
  plan.methods = {FcMethod::randcon, FcMethod::sliding_window};
  plan.metrics = {Metric::ari};
  const auto r = run_plan(plan);
  const auto s = summarize(plan, r);
  ASSERT_EQ(s["cells"].size(), 2u);
  const auto vals = r.values(0.5, 0.5, FcMethod::randcon, Metric::ari);
  ASSERT_EQ(vals.size(), 6u);
  double mean = 0;
  for (double v : vals) mean += v / 6.0;
  EXPECT_NEAR(s["cells"][0]["mean"].get<double>(), mean, 1e-12);
  EXPECT_EQ(s["comparisons"].size(), 1u);
  EXPECT_EQ(s["comparisons"][0]["test"], "wilcoxon-signed-rank");
}

TEST(RealData, IdenticalSubjectsGiveIdenticalRows) {
  auto spec = tiny_plan().base;
  spec.n_timepoints = 100;
  const auto pats = generate_state_patterns(spec, spec.seed);
  const auto subj = generate_subject(spec, pats, 0);
  std::vector<RealDataSubject> subjects{{"a", subj.series, std::nullopt, std::nullopt},
                                        {"b", subj.series, std::nullopt, std::nullopt}};
  RealDataOptions opt;
  opt.estimator.kernel_count = 16;
  opt.restarts = 4;
  opt.k_max = 5;
  const auto r = realdata_pipeline(subjects, opt);
  EXPECT_GE(r.n_states, 2u);
  EXPECT_LE(r.n_states, 5u);
  ASSERT_TRUE(r.elbow.has_value());
  EXPECT_EQ(r.labels[0], r.labels[1]);
  const std::size_t half = r.subject_metrics.size() / 2;
  for (std::size_t i = 0; i < half; ++i) {
    EXPECT_EQ(r.subject_metrics[i].metric, r.subject_metrics[half + i].metric);
    EXPECT_EQ(r.subject_metrics[i].value, r.subject_metrics[half + i].value);
  }
  EXPECT_TRUE(r.comparisons.empty());
  subjects[1].id = "a";
  EXPECT_THROW(realdata_pipeline(subjects, opt), ValidationError);
}

TEST(RealData, PcaAndPairedCovariates) {
  auto spec = tiny_plan().base;
  spec.n_timepoints = 80;
  const auto pats = generate_state_patterns(spec, spec.seed);
  std::vector<RealDataSubject> subjects;
  for (std::size_t i = 0; i < 12; ++i)
    subjects.push_back({"s" + std::to_string(i), generate_subject(spec, pats, i).series,
                        std::string(i % 2 ? "post" : "pre"), "p" + std::to_string(i / 2)});
  RealDataOptions opt;
  opt.estimator.kernel_count = 16;
  opt.restarts = 3;
  opt.n_states = 3;
  opt.pca_dims = 5;
  const auto r = realdata_pipeline(subjects, opt);
  EXPECT_EQ(r.n_states, 3u);
  EXPECT_EQ(r.state_patterns.rows(), 3u);
  ASSERT_FALSE(r.comparisons.empty());
  for (const auto& c : r.comparisons) {
    EXPECT_EQ(c.test, "wilcoxon-signed-rank");
    EXPECT_EQ(c.n_a, 6u);
  }
}

// With only fully coupled or anti-coupled subnetwork pairs, every state has a
// deterministic within-window correlation pattern and noiseless recovery is
// near perfect. Independent (zero) relations are what limit recovery on the
// default generator: their 3-sample window correlations are random.
TEST(Recovery, NoiselessSignedPatternsAreRecovered) {
  auto plan = preset_plan("desk-ordering");
  plan.metrics = {Metric::ari, Metric::cosine};
  plan.restarts = 30;
  auto spec = plan.spec_for(0.0, 0.0);
  const std::vector<StatePattern> patterns{StatePattern({0, 0, 0}, {1, 1, 1}), StatePattern({0, 0, 0}, {1, 1, -1}),
                                           StatePattern({0, 0, 0}, {1, -1, 1}), StatePattern({0, 0, 0}, {1, -1, -1})};
  std::vector<SimulatedSubject> subjects;
  for (std::size_t i = 0; i < spec.subjects_per_group; ++i) subjects.push_back(generate_subject(spec, patterns, i));
  const auto bank = sample_gaussian_bank(plan.estimator.kernel_count, plan.estimator.width, bank_seed(spec.seed));
  for (auto method : plan.methods) {
    std::string stage;
    std::uint64_t degenerate = 0;
    const auto m = detail::evaluate_pool(plan, spec, patterns, subjects, method, plan.estimator, &bank,
                                         kmeans_seed(spec.seed, 0), stage, degenerate);
    EXPECT_GT(m[0].second, 0.95) << to_string(method);
    EXPECT_GT(m[1].second, 0.99) << to_string(method);
  }
}
