#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "randcon/simulator.hpp"

using namespace randcon;

namespace {

SimulationSpec small_spec(std::size_t n_rois = 30, double sigma = 0.0) {
  SimulationSpec s;
  s.n_states = 4;
  s.n_rois = n_rois;
  s.n_timepoints = 400;
  s.noise_sigma = sigma;
  s.n_groups = 2;
  s.subjects_per_group = 3;
  s.seed = 5;
  return s;
}

double pearson(std::span<const double> a, std::span<const double> b) {
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
  return static_cast<double>(sab / std::sqrt(saa * sbb));
}

}  // namespace

TEST(SimulationSpec, DefaultsAndValidation) {
  const SimulationSpec s;
  EXPECT_EQ(s.n_states, 4u);
  EXPECT_EQ(s.n_rois, 90u);
  EXPECT_EQ(s.n_timepoints, 1200u);
  EXPECT_EQ(s.gamma_shape, 10.0);
  EXPECT_EQ(s.gamma_scale, 5.0);
  EXPECT_EQ(s.noise_sigma, 0.6);
  EXPECT_EQ(s.n_groups * s.subjects_per_group, 600u);
  auto bad = s;
  bad.n_rois = 95;
  EXPECT_THROW(bad.validate(), ParameterError);
  bad = s;
  bad.n_states = 1;
  EXPECT_THROW(bad.validate(), ParameterError);
  bad = s;
  bad.noise_sigma = -0.1;
  EXPECT_THROW(bad.validate(), ParameterError);
  EXPECT_EQ(simulation_spec_from_json(to_json(small_spec())), small_spec());
}

TEST(StatePattern, CanonicalFormIgnoresFactorRelabelAndGlobalFlip) {
  const StatePattern a({0, 1, 0}, {1, 1, -1});
  const StatePattern b({1, 0, 1}, {-1, -1, 1});
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.implied_fc(), b.implied_fc());
  EXPECT_EQ(a.relation(0, 2), -1);
  EXPECT_EQ(a.relation(0, 1), 0);
  EXPECT_EQ(a.n_factors(), 2u);
}

TEST(StatePattern, OppositeSignsGiveNegativeBlock) {
  const StatePattern p({0, 0}, {1, -1});
  const auto z = p.implied_fc();
  for (std::size_t m = 0; m < 10; ++m)
    for (std::size_t k = 10; k < 20; ++k) EXPECT_EQ(z(m, k), -1.0);
}

TEST(GeneratePatterns, WithinSubnetworkBlocksAndDistinctness) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto pats = generate_state_patterns(small_spec(), seed);
    ASSERT_EQ(pats.size(), 4u);
    std::set<std::vector<double>> unique;
    for (const auto& p : pats) {
      const auto z = p.implied_fc();
      for (std::size_t m = 0; m < 30; ++m)
        for (std::size_t k = 0; k < 30; ++k) {
          if (m / 10 == k / 10) {
            EXPECT_EQ(z(m, k), 1.0);
          }
          EXPECT_TRUE(z(m, k) == 1.0 || z(m, k) == 0.0 || z(m, k) == -1.0);
          EXPECT_EQ(z(m, k), z(k, m));
        }
      unique.insert(p.implied_lower());
    }
    EXPECT_EQ(unique.size(), 4u);
  }
  EXPECT_EQ(generate_state_patterns(small_spec(), 3), generate_state_patterns(small_spec(), 3));
}

TEST(GeneratePatterns, AllRelationTypesReachable) {
  std::set<int> seen;
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    for (const auto& p : generate_state_patterns(small_spec(), seed))
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < a; ++b) seen.insert(p.relation(a, b));
  EXPECT_EQ(seen, (std::set<int>{-1, 0, 1}));
}

TEST(GeneratePatterns, OneSubnetworkIsParameterError) {
  auto s = small_spec(10);
  EXPECT_THROW(generate_state_patterns(s, 0), ParameterError);
}

TEST(GeneratePatterns, TooManyStatesForTwoSubnetworksFails) {
  // Two subnetworks admit exactly three distinct patterns: +1, -1, 0.
  auto s = small_spec(20);
  s.n_states = 3;
  EXPECT_NO_THROW(generate_state_patterns(s, 0));
  s.n_states = 4;
  EXPECT_THROW(generate_state_patterns(s, 0), ParameterError);
}

TEST(DwellTimes, GammaMomentsAfterRounding) {
  const auto d = sample_dwell_times(10.0, 5.0, 10000, 123);
  double mean = 0.0;
  for (auto v : d) mean += static_cast<double>(v);
  mean /= d.size();
  double var = 0.0;
  for (auto v : d) var += (static_cast<double>(v) - mean) * (static_cast<double>(v) - mean);
  var /= d.size() - 1;
  EXPECT_NEAR(mean, 50.0, 2.0);
  EXPECT_NEAR(var, 250.0, 0.15 * 250.0);
  for (auto v : sample_dwell_times(0.1, 0.1, 1000, 1)) EXPECT_GE(v, 1u);
}

TEST(StateSequence, TransitionsAndLength) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = small_spec();
    s.n_timepoints = 1000;
    const auto seq = generate_state_sequence(s, seed);
    ASSERT_EQ(seq.labels.size(), 1000u);
    for (int l : seq.labels) EXPECT_TRUE(l >= 0 && l < 4);
  }
  auto s = small_spec();
  s.n_states = 2;
  s.gamma_shape = 2.0;
  s.gamma_scale = 2.0;
  const auto seq = generate_state_sequence(s, 4);
  std::vector<int> segments{seq.labels[0]};
  for (std::size_t t = 1; t < seq.labels.size(); ++t)
    if (seq.labels[t] != seq.labels[t - 1]) segments.push_back(seq.labels[t]);
  for (std::size_t i = 1; i < segments.size(); ++i) EXPECT_EQ(segments[i], 1 - segments[i - 1]);
  EXPECT_GT(segments.size(), 10u);
}

TEST(SynthesizeBold, NoiselessSegmentsReproduceImpliedFc) {
  const auto spec = small_spec();
  const auto pats = generate_state_patterns(spec, spec.seed);
  const auto subj = generate_subject(spec, pats, 0);
  const auto& labels = subj.sequence.labels;
  std::size_t checked = 0;
  for (std::size_t start = 0; start < labels.size();) {
    std::size_t end = start;
    while (end < labels.size() && labels[end] == labels[start]) ++end;
    if (end - start >= 3) {
      const auto z = pats[static_cast<std::size_t>(labels[start])].implied_fc();
      for (std::size_t m = 0; m < spec.n_rois; ++m)
        for (std::size_t k = 0; k < m; ++k) {
          if (z(m, k) == 0.0) continue;  // independent factors: sample correlation is random
          const auto a = subj.series.roi(m).subspan(start, end - start);
          const auto b = subj.series.roi(k).subspan(start, end - start);
          EXPECT_NEAR(pearson(a, b), z(m, k), 1e-9);
          ++checked;
        }
    }
    start = end;
  }
  EXPECT_GT(checked, 0u);
}

TEST(SynthesizeBold, NoiseRescalesOneRealization) {
  const auto pats = generate_state_patterns(small_spec(), 1);
  const auto clean = generate_subject(small_spec(30, 0.0), pats, 2);
  const auto a = generate_subject(small_spec(30, 0.5), pats, 2);
  const auto b = generate_subject(small_spec(30, 1.0), pats, 2);
  EXPECT_EQ(a.sequence, clean.sequence);
  for (std::size_t i = 0; i < clean.series.values().size(); ++i) {
    const double na = a.series.values().data()[i] - clean.series.values().data()[i];
    const double nb = b.series.values().data()[i] - clean.series.values().data()[i];
    EXPECT_NEAR(nb, 2.0 * na, 1e-12);
  }
}

TEST(SynthesizeBold, RejectsInconsistentInputs) {
  const auto spec = small_spec();
  const auto pats = generate_state_patterns(spec, 0);
  StateSequence bad{std::vector<int>(spec.n_timepoints, 7)};
  EXPECT_THROW(synthesize_bold(pats, bad, spec, 0), ValidationError);
  StateSequence short_seq{std::vector<int>(10, 0)};
  EXPECT_THROW(synthesize_bold(pats, short_seq, spec, 0), ValidationError);
}

TEST(GenerateDataset, PartitionAndDeterminism) {
  auto spec = small_spec(30, 0.6);
  spec.n_timepoints = 60;
  const auto d = generate_dataset(spec);
  ASSERT_EQ(d.groups.size(), 2u);
  EXPECT_EQ(d.groups[1].id(), "group-001");
  EXPECT_EQ(d.groups[0].subjects().size(), 3u);
  EXPECT_EQ(d.sequences.size(), 6u);
  EXPECT_EQ(d, generate_dataset(spec));
  // Subject 4 lives in group 1, slot 1, and depends only on its own seed.
  EXPECT_EQ(d.groups[1].subjects()[1], generate_subject(spec, d.patterns, 4).series);
  set_thread_count(1);
  const auto serial = generate_dataset(spec);
  set_thread_count(0);
  EXPECT_EQ(serial, d);
}

TEST(GenerateDataset, DeskScaleCounts) {
  auto spec = small_spec(30, 0.6);
  spec.n_groups = 10;
  spec.subjects_per_group = 5;
  spec.n_timepoints = 20;
  const auto d = generate_dataset(spec);
  EXPECT_EQ(d.sequences.size(), 50u);
  EXPECT_EQ(d.patterns.size(), 4u);
}

TEST(DatasetIo, RoundTripsBitExactly) {
  auto spec = small_spec(20, 0.7);
  spec.n_states = 3;
  spec.n_timepoints = 50;
  const auto d = generate_dataset(spec);
  const auto dir = std::filesystem::temp_directory_path() / "randcon_dataset_io";
  std::filesystem::remove_all(dir);
  const auto files = write_dataset(dir, d);
  EXPECT_EQ(files.front(), "dataset.json");
  EXPECT_EQ(files.size(), 1u + 2u * 6u);
  EXPECT_EQ(read_dataset(dir), d);
  const auto text = read_text_file(dir / "subjects" / "sub-0000_labels.csv");
  EXPECT_EQ(text.substr(0, 8), "t,state\n");
  const auto labels = labels_from_csv(text);
  for (std::size_t t = 0; t < labels.size(); ++t) EXPECT_EQ(labels[t], d.sequences[0].labels[t]);
  EXPECT_THROW(read_dataset(dir / "missing"), ValidationError);
}

TEST(DatasetIo, LabelsAreOneBasedOnDisk) {
  EXPECT_EQ(labels_to_csv({0, 2}), "t,state\n0,1\n1,3\n");
  EXPECT_THROW(labels_from_csv("t,state\n0,0\n"), ParseError);
}
