#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "randcon/harness.hpp"

namespace randcon {

struct ResultRecord {
  std::string sweep_param;
  double sweep_value = 0.0;
  double noise_sigma = 0.0;
  std::string group;
  std::string subject;
  std::string method;
  std::string metric;
  double value = 0.0;
};

inline const std::vector<std::string>& results_columns() {
  static const std::vector<std::string> cols{"sweep_param", "sweep_value", "noise_sigma", "group",
                                             "subject",     "method",      "metric",      "value"};
  return cols;
}

namespace detail {

inline std::vector<std::string> split_commas(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

inline double parse_number(const std::string& s, std::size_t line, const std::string& col) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ParseError("line " + std::to_string(line) + ": column '" + col + "' is not a number: '" + s + "'");
}

}  // namespace detail

// Parses a results table. Columns may come in any order; extra columns are ignored.
inline std::vector<ResultRecord> parse_results_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start < text.size();) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    if (end > start) lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  if (lines.empty()) throw ValidationError("results file is empty");
  const auto header = detail::split_commas(lines.front());
  std::map<std::string, std::size_t> at;
  for (std::size_t i = 0; i < header.size(); ++i) at[header[i]] = i;
  std::string missing;
  for (const auto& c : results_columns())
    if (!at.count(c)) missing += (missing.empty() ? "" : ", ") + c;
  if (!missing.empty()) throw ValidationError("results file is missing columns: " + missing);
  if (lines.size() < 2) throw ValidationError("results file has a header but no rows");

  std::vector<ResultRecord> out;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto f = detail::split_commas(lines[l]);
    if (f.size() != header.size())
      throw ParseError("line " + std::to_string(l + 1) + ": expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(f.size()));
    out.push_back({f[at["sweep_param"]], detail::parse_number(f[at["sweep_value"]], l + 1, "sweep_value"),
                   detail::parse_number(f[at["noise_sigma"]], l + 1, "noise_sigma"), f[at["group"]], f[at["subject"]],
                   f[at["method"]], f[at["metric"]], detail::parse_number(f[at["value"]], l + 1, "value")});
  }
  return out;
}

struct ReportCell {
  std::string sweep_param;
  double sweep_value = 0.0;
  double noise_sigma = 0.0;
  std::string method;
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  std::optional<double> p_vs_randcon;  // paired signed-rank over groups
};

struct ReportTable {
  std::string metric;
  std::vector<std::string> methods;  // first-appearance order
  std::vector<ReportCell> cells;     // by sweep value, noise level, method
};

inline std::vector<ReportTable> build_report(const std::vector<ResultRecord>& records) {
  std::vector<std::string> metrics, methods;
  for (const auto& r : records) {
    if (std::find(metrics.begin(), metrics.end(), r.metric) == metrics.end()) metrics.push_back(r.metric);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  std::vector<ReportTable> tables;
  for (const auto& metric : metrics) {
    ReportTable tab{metric, {}, {}};
    using Key = std::tuple<std::string, double, double>;
    std::map<Key, std::map<std::string, std::map<std::string, double>>> grid;  // key -> method -> group -> value
    for (const auto& r : records) {
      if (r.metric != metric) continue;
      auto& slot = grid[{r.sweep_param, r.sweep_value, r.noise_sigma}][r.method];
      if (!slot.emplace(r.group + "/" + r.subject, r.value).second)
        throw ValidationError("results file repeats a row for " + metric + " " + r.method + " group " + r.group);
    }
    for (const auto& m : methods)
      for (const auto& [_, by_method] : grid)
        if (by_method.count(m) && std::find(tab.methods.begin(), tab.methods.end(), m) == tab.methods.end())
          tab.methods.push_back(m);
    for (const auto& [key, by_method] : grid) {
      for (const auto& m : tab.methods) {
        const auto it = by_method.find(m);
        if (it == by_method.end()) continue;
        std::vector<double> vals;
        for (const auto& [_, v] : it->second) vals.push_back(v);
        ReportCell cell{std::get<0>(key), std::get<1>(key), std::get<2>(key), m, vals.size(),
                        detail::mean_of(vals), detail::sd_of(vals), std::nullopt};
        const auto ref = by_method.find("randcon");
        if (m != "randcon" && ref != by_method.end()) {
          std::vector<double> a, b;
          for (const auto& [g, v] : ref->second) {
            const auto o = it->second.find(g);
            if (o != it->second.end()) a.push_back(v), b.push_back(o->second);
          }
          if (a.size() >= 6) cell.p_vs_randcon = paired_group_compare(a, b).p_value;
        }
        tab.cells.push_back(std::move(cell));
      }
    }
    tables.push_back(std::move(tab));
  }
  return tables;
}

inline std::string table_tidy_csv(const ReportTable& t) {
  std::string out = "sweep_param,sweep_value,noise_sigma,method,n,mean,sd,p_vs_randcon,stars\n";
  for (const auto& c : t.cells)
    out += c.sweep_param + "," + detail::format_double(c.sweep_value) + "," + detail::format_double(c.noise_sigma) + "," +
           c.method + "," + std::to_string(c.n) + "," + detail::format_double(c.mean) + "," +
           detail::format_double(c.sd) + "," + (c.p_vs_randcon ? detail::format_double(*c.p_vs_randcon) : "") + "," +
           (c.p_vs_randcon ? significance_stars(*c.p_vs_randcon) : "") + "\n";
  return out;
}

// One row per (sweep value, noise level); mean, sd and stars per method.
inline std::string table_wide_csv(const ReportTable& t) {
  std::string out = "sweep_param,sweep_value,noise_sigma";
  for (const auto& m : t.methods) out += "," + m + "_mean," + m + "_sd," + m + "_stars";
  out += "\n";
  for (std::size_t i = 0; i < t.cells.size();) {
    const auto& first = t.cells[i];
    out += first.sweep_param + "," + detail::format_double(first.sweep_value) + "," +
           detail::format_double(first.noise_sigma);
    std::size_t j = i;
    for (const auto& m : t.methods) {
      if (j < t.cells.size() && t.cells[j].method == m && t.cells[j].sweep_value == first.sweep_value &&
          t.cells[j].noise_sigma == first.noise_sigma) {
        const auto& c = t.cells[j++];
        out += "," + detail::format_double(c.mean) + "," + detail::format_double(c.sd) + "," +
               (c.p_vs_randcon ? significance_stars(*c.p_vs_randcon) : "");
      } else {
        out += ",,,";
      }
    }
    out += "\n";
    i = j;
  }
  return out;
}

// Line chart of group means against the sweep value with +-1 sd bars; one
// line per method and noise level.
inline std::string table_svg(const ReportTable& t) {
  constexpr double W = 640, H = 400, L = 70, R = 170, T = 30, B = 50;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& c : t.cells) {
    xmin = std::min(xmin, c.sweep_value);
    xmax = std::max(xmax, c.sweep_value);
    ymin = std::min(ymin, c.mean - c.sd);
    ymax = std::max(ymax, c.mean + c.sd);
  }
  if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
  if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  auto shortnum = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return std::string(buf);
  };
  static const char* palette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"};

  std::map<std::pair<std::string, double>, std::vector<const ReportCell*>> lines;
  std::vector<std::pair<std::string, double>> order;
  for (const auto& c : t.cells) {
    const auto key = std::pair{c.method, c.noise_sigma};
    if (!lines.count(key)) order.push_back(key);
    lines[key].push_back(&c);
  }
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) +
                  "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(L) + "\" y=\"18\" font-size=\"14\">" + t.metric + "</text>\n";
  s += "<line x1=\"" + num(L) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(W - R) + "\" y2=\"" + num(H - B) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) + "\" y2=\"" + num(H - B) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = ymin + (ymax - ymin) * i / 4.0, x = xmin + (xmax - xmin) * i / 4.0;
    s += "<text x=\"" + num(L - 6) + "\" y=\"" + num(py(y) + 4) + "\" text-anchor=\"end\">" + shortnum(y) + "</text>\n";
    s += "<text x=\"" + num(px(x)) + "\" y=\"" + num(H - B + 18) + "\" text-anchor=\"middle\">" + shortnum(x) +
         "</text>\n";
  }
  if (!t.cells.empty())
    s += "<text x=\"" + num((L + W - R) / 2) + "\" y=\"" + num(H - 10) + "\" text-anchor=\"middle\">" +
         t.cells.front().sweep_param + "</text>\n";
  for (std::size_t li = 0; li < order.size(); ++li) {
    const char* colour = palette[li % 8];
    const auto& pts = lines[order[li]];
    std::string path;
    for (const auto* c : pts) {
      path += (path.empty() ? "M" : " L") + num(px(c->sweep_value)) + " " + num(py(c->mean));
      s += "<line x1=\"" + num(px(c->sweep_value)) + "\" y1=\"" + num(py(c->mean - c->sd)) + "\" x2=\"" +
           num(px(c->sweep_value)) + "\" y2=\"" + num(py(c->mean + c->sd)) + "\" stroke=\"" + colour + "\"/>\n";
      s += "<circle cx=\"" + num(px(c->sweep_value)) + "\" cy=\"" + num(py(c->mean)) + "\" r=\"3\" fill=\"" + colour +
           "\"/>\n";
    }
    s += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"1.5\"/>\n";
    const double ly = T + 16.0 * static_cast<double>(li);
    s += "<text x=\"" + num(W - R + 10) + "\" y=\"" + num(ly + 4) + "\" fill=\"" + colour + "\">" + order[li].first +
         " (noise " + shortnum(order[li].second) + ")</text>\n";
  }
  s += "</svg>\n";
  return s;
}

struct ReportOutput {
  std::vector<ReportTable> tables;
  std::filesystem::path manifest_path;
};

inline ReportOutput write_report(const std::filesystem::path& results_csv, const std::filesystem::path& output_dir,
                                 bool svg) {
  if (!std::filesystem::exists(results_csv))
    throw ValidationError("results file '" + results_csv.string() + "' does not exist");
  const auto text = read_text_file(results_csv);
  ReportOutput out{build_report(parse_results_csv(text)), {}};
  std::filesystem::create_directories(output_dir);
  nlohmann::json inventory = nlohmann::json::array();
  for (const auto& t : out.tables) {
    std::vector<std::pair<std::string, std::string>> files{{t.metric + ".csv", table_tidy_csv(t)},
                                                           {t.metric + "_table.csv", table_wide_csv(t)}};
    if (svg) files.emplace_back(t.metric + ".svg", table_svg(t));
    for (const auto& [name, body] : files) {
      write_bytes(output_dir / name, body);
      inventory.push_back(detail::file_entry(output_dir, name));
    }
  }
  const nlohmann::json manifest{{"format", "randcon-run"},
                                {"software", {{"name", "randcon"}, {"version", RANDCON_VERSION}}},
                                {"command", "report"},
                                {"input", {{"path", results_csv.filename().string()}, {"sha256", sha256_hex(text)}}},
                                {"comparison", "paired signed-rank test of each method against randcon over groups"},
                                {"files", std::move(inventory)}};
  out.manifest_path = output_dir / "manifest.json";
  write_bytes(out.manifest_path, manifest.dump(2) + "\n");
  return out;
}

}  // namespace randcon
