#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "randcon/connectivity.hpp"
#include "randcon/errors.hpp"
#include "randcon/fc_io.hpp"
#include "randcon/matrix.hpp"
#include "randcon/parallel.hpp"
#include "randcon/rng.hpp"
#include "randcon/timeseries.hpp"

namespace randcon {

inline constexpr std::size_t kSubnetworkSize = 10;

// Ground-truth generator configuration. Defaults are the full-scale
// settings: 4 states, 90 ROIs, 1200 TRs, Gamma(10, 5) dwell times, noise
// sigma 0.6, 30 groups of 20 subjects.
struct SimulationSpec {
  std::size_t n_states = 4;
  std::size_t n_rois = 90;
  std::size_t n_timepoints = 1200;
  double gamma_shape = 10.0;
  double gamma_scale = 5.0;
  double noise_sigma = 0.6;
  std::size_t n_groups = 30;
  std::size_t subjects_per_group = 20;
  std::uint64_t seed = 0;

  std::size_t n_subjects() const noexcept { return n_groups * subjects_per_group; }
  std::size_t n_subnetworks() const noexcept { return n_rois / kSubnetworkSize; }

  void validate() const {
    if (n_states < 2) throw ParameterError("simulation needs at least 2 states");
    if (n_rois == 0 || n_rois % kSubnetworkSize != 0)
      throw ParameterError("number of ROIs must be a positive multiple of 10, got " + std::to_string(n_rois));
    if (n_timepoints < 2) throw ParameterError("simulation needs T >= 2");
    if (!(gamma_shape > 0.0) || !(gamma_scale > 0.0))
      throw ParameterError("Gamma shape and scale must be positive");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
      throw ParameterError("noise sigma must be a finite non-negative number");
    if (n_groups < 1 || subjects_per_group < 1) throw ParameterError("need at least one group and one subject");
  }

  friend bool operator==(const SimulationSpec&, const SimulationSpec&) = default;
};

inline nlohmann::json to_json(const SimulationSpec& s) {
  return {{"n_states", s.n_states},       {"n_rois", s.n_rois},
          {"n_timepoints", s.n_timepoints}, {"gamma_shape", s.gamma_shape},
          {"gamma_scale", s.gamma_scale}, {"noise_sigma", s.noise_sigma},
          {"n_groups", s.n_groups},       {"subjects_per_group", s.subjects_per_group},
          {"seed", s.seed}};
}

inline SimulationSpec simulation_spec_from_json(const nlohmann::json& j, SimulationSpec base = {}) {
  base.n_states = j.value("n_states", base.n_states);
  base.n_rois = j.value("n_rois", base.n_rois);
  base.n_timepoints = j.value("n_timepoints", base.n_timepoints);
  base.gamma_shape = j.value("gamma_shape", base.gamma_shape);
  base.gamma_scale = j.value("gamma_scale", base.gamma_scale);
  base.noise_sigma = j.value("noise_sigma", base.noise_sigma);
  base.n_groups = j.value("n_groups", base.n_groups);
  base.subjects_per_group = j.value("subjects_per_group", base.subjects_per_group);
  base.seed = j.value("seed", base.seed);
  return base;
}

// One latent state: every 10-ROI subnetwork follows a signed latent factor.
// Subnetworks on the same factor are perfectly (anti)correlated; different
// factors are independent.
class StatePattern {
 public:
  StatePattern(std::vector<int> factors, std::vector<int> signs) : factors_(std::move(factors)), signs_(std::move(signs)) {
    if (factors_.size() != signs_.size() || factors_.empty())
      throw ValidationError("pattern needs one factor and one sign per subnetwork");
    int next = 0;
    std::vector<int> relabel(factors_.size(), -1);
    std::vector<int> first_sign(factors_.size(), 0);
    for (std::size_t s = 0; s < factors_.size(); ++s) {
      const int f = factors_[s];
      if (f < 0 || static_cast<std::size_t>(f) >= factors_.size())
        throw ValidationError("factor id out of range");
      if (signs_[s] != 1 && signs_[s] != -1) throw ValidationError("sign must be +1 or -1");
      if (relabel[f] < 0) {
        relabel[f] = next++;
        first_sign[f] = signs_[s];
      }
    }
    // Canonical form: factors numbered by first appearance and the first
    // subnetwork on each factor carries +1. Flipping a whole factor does not
    // change the implied correlations.
    for (std::size_t s = 0; s < factors_.size(); ++s) {
      const int f = factors_[s];
      signs_[s] *= first_sign[f];
      factors_[s] = relabel[f];
    }
    n_factors_ = static_cast<std::size_t>(next);
  }

  std::size_t n_subnetworks() const noexcept { return factors_.size(); }
  std::size_t n_rois() const noexcept { return factors_.size() * kSubnetworkSize; }
  std::size_t n_factors() const noexcept { return n_factors_; }
  const std::vector<int>& factors() const noexcept { return factors_; }
  const std::vector<int>& signs() const noexcept { return signs_; }

  // Correlation implied between subnetworks a and b: +1, -1 or 0.
  int relation(std::size_t a, std::size_t b) const noexcept {
    if (a == b) return 1;
    return factors_[a] == factors_[b] ? signs_[a] * signs_[b] : 0;
  }

  Matrix implied_fc() const {
    const std::size_t n = n_rois();
    Matrix z(n, n);
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t k = 0; k < n; ++k) z(m, k) = relation(m / kSubnetworkSize, k / kSubnetworkSize);
    return z;
  }

  std::vector<double> implied_lower() const {
    const auto z = implied_fc();
    std::vector<double> v(lower_tri_length(n_rois()));
    vectorize_lower_into(z.values(), n_rois(), v);
    return v;
  }

  friend bool operator==(const StatePattern&, const StatePattern&) = default;

 private:
  std::vector<int> factors_;
  std::vector<int> signs_;
  std::size_t n_factors_ = 0;
};

// Per-time-point state labels, 0-based (0 .. M-1).
struct StateSequence {
  std::vector<int> labels;
  friend bool operator==(const StateSequence&, const StateSequence&) = default;
};

// M pairwise-distinct patterns. Each state draws a factor count F uniformly
// from 1..S (S = subnetworks), assigns every subnetwork a uniform factor and
// sign, and is redrawn if it duplicates an earlier state.
inline std::vector<StatePattern> generate_state_patterns(const SimulationSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t s_count = spec.n_subnetworks();
  if (s_count < 2)
    throw ParameterError("need at least 2 subnetworks (N >= 20) to express inter-network structure");
  constexpr int kMaxAttempts = 1000;
  auto rng = make_rng(seed, Stream::patterns);
  std::vector<StatePattern> patterns;
  patterns.reserve(spec.n_states);
  for (std::size_t m = 0; m < spec.n_states; ++m) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      const auto f_count = uniform_int(rng, 1, static_cast<std::int64_t>(s_count));
      std::vector<int> factors(s_count), signs(s_count);
      for (std::size_t s = 0; s < s_count; ++s) {
        factors[s] = static_cast<int>(uniform_int(rng, 0, f_count - 1));
        signs[s] = uniform_int(rng, 0, 1) == 0 ? 1 : -1;
      }
      StatePattern candidate(std::move(factors), std::move(signs));
      if (std::find(patterns.begin(), patterns.end(), candidate) != patterns.end()) continue;
      patterns.push_back(std::move(candidate));
      placed = true;
    }
    if (!placed)
      throw ParameterError("could not draw " + std::to_string(spec.n_states) + " distinct state patterns over " +
                           std::to_string(s_count) + " subnetworks");
  }
  return patterns;
}

// Dwell length: Gamma(shape, scale) rounded half-up, floored at 1.
inline std::size_t draw_dwell(Philox& rng, double shape, double scale) {
  const double g = gamma_draw(rng, shape, scale);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(g + 0.5)));
}

inline std::vector<std::size_t> sample_dwell_times(double shape, double scale, std::size_t count,
                                                   std::uint64_t seed) {
  auto rng = make_rng(seed, Stream::sequence);
  std::vector<std::size_t> out(count);
  for (auto& d : out) d = draw_dwell(rng, shape, scale);
  return out;
}

inline StateSequence generate_state_sequence(const SimulationSpec& spec, std::uint64_t seed) {
  spec.validate();
  auto rng = make_rng(seed, Stream::sequence);
  const auto m = static_cast<std::int64_t>(spec.n_states);
  StateSequence seq;
  seq.labels.reserve(spec.n_timepoints);
  auto state = static_cast<int>(uniform_int(rng, 0, m - 1));
  while (seq.labels.size() < spec.n_timepoints) {
    const auto dwell = draw_dwell(rng, spec.gamma_shape, spec.gamma_scale);
    for (std::size_t i = 0; i < dwell && seq.labels.size() < spec.n_timepoints; ++i) seq.labels.push_back(state);
    // Uniform over the M-1 other states.
    auto next = static_cast<int>(uniform_int(rng, 0, m - 2));
    if (next >= state) ++next;
    state = next;
  }
  return seq;
}

// Noise draws come from their own stream, so for a fixed seed changing
// sigma rescales one noise realization rather than drawing a new one.
inline RoiTimeSeries synthesize_bold(const std::vector<StatePattern>& patterns, const StateSequence& sequence,
                                     const SimulationSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (sequence.labels.size() != spec.n_timepoints)
    throw ValidationError("state sequence length does not match T");
  for (const auto& p : patterns)
    if (p.n_rois() != spec.n_rois) throw ValidationError("pattern ROI count does not match the spec");
  const std::size_t n = spec.n_rois;
  const std::size_t t_count = spec.n_timepoints;
  Matrix x(n, t_count);
  auto latent_rng = make_rng(seed, Stream::latent);
  std::vector<double> latent;
  for (std::size_t t = 0; t < t_count; ++t) {
    const int label = sequence.labels[t];
    if (label < 0 || static_cast<std::size_t>(label) >= patterns.size())
      throw ValidationError("state label " + std::to_string(label) + " has no pattern");
    const auto& p = patterns[static_cast<std::size_t>(label)];
    latent.resize(p.n_factors());
    for (double& z : latent) z = standard_normal(latent_rng);
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t s = r / kSubnetworkSize;
      x(r, t) = p.signs()[s] * latent[static_cast<std::size_t>(p.factors()[s])];
    }
  }
  if (spec.noise_sigma > 0.0) {
    auto noise_rng = make_rng(seed, Stream::noise);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t t = 0; t < t_count; ++t) x(r, t) += spec.noise_sigma * standard_normal(noise_rng);
  }
  return RoiTimeSeries(std::move(x));
}

struct SimulatedSubject {
  RoiTimeSeries series;
  StateSequence sequence;
};

inline std::uint64_t subject_seed(const SimulationSpec& spec, std::size_t subject) {
  return derive_seed(spec.seed, subject);
}

inline SimulatedSubject generate_subject(const SimulationSpec& spec, const std::vector<StatePattern>& patterns,
                                         std::size_t subject) {
  const auto seed = subject_seed(spec, subject);
  auto seq = generate_state_sequence(spec, seed);
  auto ts = synthesize_bold(patterns, seq, spec, seed);
  return {std::move(ts), std::move(seq)};
}

inline std::string group_id(std::size_t g) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "group-%03zu", g);
  return buf;
}

struct SimulatedGroup {
  SubjectGroup group;
  std::vector<StateSequence> sequences;
  std::vector<std::size_t> subject_indices;
};

// Group g holds subjects g*P .. g*P + P - 1 (P = subjects per group).
inline SimulatedGroup generate_group(const SimulationSpec& spec, const std::vector<StatePattern>& patterns,
                                     std::size_t g) {
  const std::size_t per = spec.subjects_per_group;
  std::vector<std::optional<SimulatedSubject>> subjects(per);
  parallel_for(per, [&](std::size_t i) { subjects[i] = generate_subject(spec, patterns, g * per + i); });
  std::vector<RoiTimeSeries> series;
  std::vector<StateSequence> seqs;
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < per; ++i) {
    series.push_back(std::move(subjects[i]->series));
    seqs.push_back(std::move(subjects[i]->sequence));
    indices.push_back(g * per + i);
  }
  return {SubjectGroup(std::move(series), group_id(g)), std::move(seqs), std::move(indices)};
}

struct Dataset {
  SimulationSpec spec;
  std::vector<StatePattern> patterns;
  std::vector<SubjectGroup> groups;
  std::vector<StateSequence> sequences;  // indexed by subject

  friend bool operator==(const Dataset& a, const Dataset& b) {
    if (!(a.spec == b.spec && a.patterns == b.patterns && a.sequences == b.sequences)) return false;
    if (a.groups.size() != b.groups.size()) return false;
    for (std::size_t g = 0; g < a.groups.size(); ++g)
      if (a.groups[g].id() != b.groups[g].id() || a.groups[g].subjects() != b.groups[g].subjects()) return false;
    return true;
  }
};

inline Dataset generate_dataset(const SimulationSpec& spec) {
  spec.validate();
  Dataset d{spec, generate_state_patterns(spec, spec.seed), {}, {}};
  for (std::size_t g = 0; g < spec.n_groups; ++g) {
    auto sg = generate_group(spec, d.patterns, g);
    d.groups.push_back(std::move(sg.group));
    for (auto& s : sg.sequences) d.sequences.push_back(std::move(s));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Dataset directory: manifest.json + subjects/sub-XXXX.csv + labels CSVs.

inline nlohmann::json to_json(const StatePattern& p) {
  const auto z = p.implied_fc();
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t m = 0; m < z.rows(); ++m) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t k = 0; k < z.cols(); ++k) row.push_back(static_cast<int>(z(m, k)));
    rows.push_back(std::move(row));
  }
  return {{"factors", p.factors()}, {"signs", p.signs()}, {"implied_fc", std::move(rows)}};
}

inline StatePattern state_pattern_from_json(const nlohmann::json& j) {
  return StatePattern(j.at("factors").get<std::vector<int>>(), j.at("signs").get<std::vector<int>>());
}

inline std::string subject_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sub-%04zu", i);
  return buf;
}

// Labels written 1-based, one row per time point.
inline std::string labels_to_csv(const std::vector<int>& labels) {
  std::string out = "t,state\n";
  for (std::size_t t = 0; t < labels.size(); ++t) out += std::to_string(t) + "," + std::to_string(labels[t] + 1) + "\n";
  return out;
}

inline std::vector<int> labels_from_csv(std::string_view text) {
  std::vector<int> labels;
  std::size_t pos = 0;
  std::size_t line = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto row = detail::trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line;
    if (row.empty()) continue;
    const auto cells = detail::split_csv_line(row);
    const auto& cell = cells.back();
    const auto value = detail::parse_number(cell);
    if (!value) {
      if (line == 1) continue;  // header
      throw ParseError("non-numeric label at row " + std::to_string(line));
    }
    if (*value < 1 || *value != std::floor(*value)) throw ParseError("labels must be integers >= 1 (row " + std::to_string(line) + ")");
    labels.push_back(static_cast<int>(*value) - 1);
  }
  return labels;
}

inline std::vector<std::filesystem::path> write_dataset(const std::filesystem::path& dir, const Dataset& d) {
  std::filesystem::create_directories(dir / "subjects");
  nlohmann::json manifest{{"format", "randcon-dataset"}, {"version", 1}, {"spec", to_json(d.spec)},
                          {"pattern_seed", d.spec.seed}};
  nlohmann::json patterns = nlohmann::json::array();
  for (const auto& p : d.patterns) patterns.push_back(to_json(p));
  manifest["patterns"] = std::move(patterns);
  nlohmann::json groups = nlohmann::json::array();
  nlohmann::json subjects = nlohmann::json::array();
  std::vector<std::filesystem::path> written;
  std::size_t index = 0;
  for (std::size_t g = 0; g < d.groups.size(); ++g) {
    nlohmann::json members = nlohmann::json::array();
    for (const auto& ts : d.groups[g].subjects()) {
      const auto stem = subject_stem(index);
      const auto ts_rel = std::filesystem::path("subjects") / (stem + ".csv");
      const auto lab_rel = std::filesystem::path("subjects") / (stem + "_labels.csv");
      save_csv(dir / ts_rel, ts);
      write_bytes(dir / lab_rel, labels_to_csv(d.sequences.at(index).labels));
      written.push_back(ts_rel);
      written.push_back(lab_rel);
      subjects.push_back({{"index", index},
                          {"group", d.groups[g].id()},
                          {"seed", subject_seed(d.spec, index)},
                          {"timeseries", ts_rel.generic_string()},
                          {"labels", lab_rel.generic_string()}});
      members.push_back(index);
      ++index;
    }
    groups.push_back({{"id", d.groups[g].id()}, {"subjects", std::move(members)}});
  }
  manifest["groups"] = std::move(groups);
  manifest["subjects"] = std::move(subjects);
  write_bytes(dir / "dataset.json", manifest.dump(2) + "\n");
  written.insert(written.begin(), "dataset.json");
  return written;
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  const auto path = dir / "dataset.json";
  if (!std::filesystem::exists(path)) throw ValidationError("no dataset manifest at '" + path.string() + "'");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  Dataset d;
  d.spec = simulation_spec_from_json(manifest.at("spec"));
  for (const auto& p : manifest.at("patterns")) d.patterns.push_back(state_pattern_from_json(p));
  const auto& subjects = manifest.at("subjects");
  for (const auto& s : subjects)
    d.sequences.push_back({labels_from_csv(read_text_file(dir / s.at("labels").get<std::string>()))});
  for (const auto& g : manifest.at("groups")) {
    std::vector<RoiTimeSeries> members;
    for (const auto& idx : g.at("subjects")) {
      const auto& s = subjects.at(idx.get<std::size_t>());
      members.push_back(load_csv(dir / s.at("timeseries").get<std::string>()));
    }
    d.groups.emplace_back(std::move(members), g.at("id").get<std::string>());
  }
  return d;
}

}  // namespace randcon
