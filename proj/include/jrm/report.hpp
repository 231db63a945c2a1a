#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "jrm/config.hpp"
#include "jrm/evaluation.hpp"

namespace jrm {

/// One metric row read back from an eval or sweep CSV.
struct ResultRow {
  std::string benchmark, method, condition, role, sweep;
  std::size_t scene = 0, instance = 0, cell = 0, n_wrong = 0;
  double rot_deg = 0.0, trans = 0.0, neg_ratio = 0.0;
  double cd = 0.0, nc = 0.0, f1 = 0.0;
  std::string config_hash, seed;

  [[nodiscard]] double metric(const std::string& m) const {
    if (m == "cd") return cd;
    if (m == "nc") return nc;
    if (m == "f1") return f1;
    throw InputError("unknown metric '" + m + "'");
  }
};

inline std::vector<ResultRow> parse_result_rows(const CsvData& csv) {
  auto col = [&](const char* name) -> std::optional<std::size_t> {
    const auto it = std::find(csv.header.begin(), csv.header.end(), name);
    if (it == csv.header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - csv.header.begin());
  };
  auto need = [&](const char* name) {
    const auto c = col(name);
    if (!c) throw InputError(std::string("result csv lacks column '") + name + "'");
    return *c;
  };
  const std::size_t c_bench = need("benchmark"), c_scene = need("scene"), c_method = need("method"),
                    c_cond = need("condition"), c_inst = need("instance"), c_role = need("role"),
                    c_cd = need("cd"), c_nc = need("nc"), c_f1 = need("f1"),
                    c_hash = need("config_hash"), c_seed = need("seed");
  const auto c_sweep = col("sweep"), c_cell = col("cell"), c_rot = col("rot_deg"),
             c_trans = col("trans"), c_wrong = col("n_wrong"), c_ratio = col("neg_ratio");
  std::vector<ResultRow> out;
  for (const auto& r : csv.rows) {
    try {
      ResultRow x;
      x.benchmark = r[c_bench];
      x.scene = std::stoull(r[c_scene]);
      x.method = r[c_method];
      x.condition = r[c_cond];
      x.instance = std::stoull(r[c_inst]);
      x.role = r[c_role];
      x.cd = std::stod(r[c_cd]);
      x.nc = std::stod(r[c_nc]);
      x.f1 = std::stod(r[c_f1]);
      x.config_hash = r[c_hash];
      x.seed = r[c_seed];
      if (c_sweep) x.sweep = r[*c_sweep];
      if (c_cell) x.cell = std::stoull(r[*c_cell]);
      if (c_rot) x.rot_deg = std::stod(r[*c_rot]);
      if (c_trans) x.trans = std::stod(r[*c_trans]);
      if (c_wrong) x.n_wrong = std::stoull(r[*c_wrong]);
      if (c_ratio) x.neg_ratio = std::stod(r[*c_ratio]);
      out.push_back(std::move(x));
    } catch (const std::logic_error&) {
      throw InputError("result csv has a malformed numeric field");
    }
  }
  return out;
}

inline std::vector<ResultRow> load_result_rows(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing results file " + path.string());
  return parse_result_rows(CsvData::load(path));
}

template <typename Pred>
CellStat summarize(const std::vector<ResultRow>& rows, const std::string& metric, Pred keep) {
  std::vector<const ResultRow*> sel;
  for (const ResultRow& r : rows)
    if (keep(r)) sel.push_back(&r);
  return per_scene_stat<ResultRow>(sel, [&](const ResultRow& r) { return r.metric(metric); });
}

// ---------------------------------------------------------------------------
// Markdown tables

struct TableSpec {
  std::string title;
  std::vector<std::pair<std::string, std::string>> rows;     // (label, method)
  std::vector<std::pair<std::string, std::string>> columns;  // (label, condition or role)
  bool columns_are_roles = false;
};

inline std::vector<TableSpec> protocol_tables(BenchmarkKind kind) {
  switch (kind) {
    case BenchmarkKind::Spatial:
      return {{"Spatial pairs",
               {{"Explicit alignment (oracle pose)", "fm_align"}, {"JRM", "jrm"}},
               {{"Target-only", "target_only"},
                {"Identical pair", "identical_pair"},
                {"Similar pair", "similar_pair"},
                {"Negative pair", "negative_pair"}},
               false}};
    case BenchmarkKind::Temporal:
      return {{"Temporal rescans",
               {{"Explicit alignment, oracle matching", "fm_align"},
                {"Explicit alignment, predicted matching + ICP", "fm_align_pred"},
                {"JRM, oracle matching", "jrm"},
                {"JRM, predicted matching", "jrm_pred"}},
               {{"Target-only", "target_only"}, {"1 rescan", "rescans_1"}, {"3 rescans", "rescans_3"}},
               false}};
    case BenchmarkKind::Articulated:
      return {{"Articulated copies",
               {{"Independent", "fm_ind"}, {"Explicit alignment (fused)", "fm_align"}, {"JRM", "jrm"}},
               {{"Copy 0 (rest)", "copy0"}, {"Copy 1", "copy1"}, {"Copy 2", "copy2"}},
               true}};
  }
  return {};
}

inline std::string fmt_stat(const CellStat& s, int digits = 3) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << s.mean << " ± " << s.se;
  return o.str();
}

struct ReportIssues {
  std::vector<std::string> missing;
};

inline std::string metric_label(const std::string& m) {
  if (m == "cd") return "CD ↓";
  if (m == "nc") return "NC ↑";
  return "F1 ↑";
}

/// One markdown table per metric. Cells with no rows print MISSING; cells
/// covering fewer scenes than the benchmark print the scene count.
inline std::string render_protocol_tables(BenchmarkKind kind, const std::vector<ResultRow>& rows,
                                          ReportIssues& issues) {
  std::set<std::size_t> scenes;
  for (const ResultRow& r : rows) scenes.insert(r.scene);
  std::ostringstream md;
  for (const TableSpec& t : protocol_tables(kind)) {
    md << "### " << t.title << " (" << scenes.size() << " scenes)\n\n";
    for (const std::string metric : {"cd", "nc", "f1"}) {
      md << "| " << metric_label(metric) << " |";
      for (const auto& c : t.columns) md << " " << c.first << " |";
      md << "\n|---|";
      for (std::size_t i = 0; i < t.columns.size(); ++i) md << "---|";
      md << "\n";
      for (const auto& [label, method] : t.rows) {
        md << "| " << label << " |";
        for (const auto& [clabel, key] : t.columns) {
          const CellStat s = summarize(rows, metric, [&](const ResultRow& r) {
            return r.method == method && (t.columns_are_roles ? r.role == key : r.condition == key);
          });
          if (s.scenes == 0) {
            md << " MISSING |";
            if (metric == "cd")
              issues.missing.push_back(std::string(benchmark_name(kind)) + ": " + method + " / " + key);
          } else {
            md << " " << fmt_stat(s) << (s.scenes < scenes.size() ? " (n=" + std::to_string(s.scenes) + ")" : "")
               << " |";
            if (metric == "cd" && s.scenes < scenes.size())
              issues.missing.push_back(std::string(benchmark_name(kind)) + ": " + method + " / " + key +
                                       " covers " + std::to_string(s.scenes) + " of " +
                                       std::to_string(scenes.size()) + " scenes");
          }
        }
        md << "\n";
      }
      md << "\n";
    }
  }
  return md.str();
}

// ---------------------------------------------------------------------------
// Sweep aggregation (long format) and plots

struct SweepPoint {
  std::string series;  // method, or method/condition for the neg-ratio grid
  double x = 0.0;
  std::string metric;
  CellStat stat;
};

inline std::string sweep_axis(const std::string& sweep) {
  if (sweep == "align") return "rot_deg";
  if (sweep == "match") return "n_wrong";
  if (sweep == "negratio") return "neg_ratio";
  throw InputError("unknown sweep '" + sweep + "'");
}

inline double sweep_x(const ResultRow& r) {
  if (r.sweep == "align") return r.rot_deg;
  if (r.sweep == "match") return static_cast<double>(r.n_wrong);
  return r.neg_ratio;
}

inline std::string sweep_series(const ResultRow& r) {
  return r.sweep == "negratio" ? r.method + "/" + r.condition : r.method;
}

inline std::vector<SweepPoint> aggregate_sweep(const std::vector<ResultRow>& rows) {
  std::map<std::pair<std::string, double>, std::vector<const ResultRow*>> groups;
  for (const ResultRow& r : rows) groups[{sweep_series(r), sweep_x(r)}].push_back(&r);
  std::vector<SweepPoint> out;
  for (const auto& [key, sel] : groups)
    for (const std::string metric : {"cd", "nc", "f1"})
      out.push_back({key.first, key.second, metric,
                     per_scene_stat<ResultRow>(sel, [&](const ResultRow& r) { return r.metric(metric); })});
  return out;
}

inline constexpr const char* kSweepLongHeader =
    "config_hash,seed,sweep,axis,x,series,metric,mean,se,scenes";

inline CsvTable sweep_long_table(const std::string& hash, std::uint64_t seed, const std::string& sweep,
                                 const std::vector<ResultRow>& rows) {
  CsvTable t(kSweepLongHeader);
  for (const SweepPoint& p : aggregate_sweep(rows))
    t.row(hash, static_cast<std::size_t>(seed), sweep, sweep_axis(sweep), p.x, p.series, p.metric,
          p.stat.mean, p.stat.se, p.stat.scenes);
  return t;
}

inline std::vector<ResultRow> sweep_rows_to_results(const std::vector<SweepRow>& rows) {
  std::vector<ResultRow> out;
  for (const SweepRow& s : rows) {
    ResultRow r;
    r.sweep = s.sweep;
    r.cell = s.cell;
    r.rot_deg = s.rot_deg;
    r.trans = s.trans;
    r.n_wrong = s.n_wrong;
    r.neg_ratio = s.neg_ratio;
    r.benchmark = s.eval.benchmark;
    r.method = s.eval.method;
    r.condition = s.eval.condition;
    r.role = s.eval.role;
    r.scene = s.eval.scene;
    r.instance = s.eval.instance;
    r.cd = s.eval.metrics.cd;
    r.nc = s.eval.metrics.nc;
    r.f1 = s.eval.metrics.f1;
    out.push_back(std::move(r));
  }
  return out;
}

/// Line plot of mean +- SE per series.
inline std::string svg_line_plot(const std::string& title, const std::string& xlabel,
                                 const std::string& ylabel, const std::vector<SweepPoint>& points) {
  std::map<std::string, std::vector<const SweepPoint*>> series;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const SweepPoint& p : points) {
    series[p.series].push_back(&p);
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.stat.mean - p.stat.se);
    y1 = std::max(y1, p.stat.mean + p.stat.se);
  }
  if (points.empty()) x0 = y0 = 0.0, x1 = y1 = 1.0;
  if (x1 <= x0) x1 = x0 + 1.0;
  if (y1 <= y0) y1 = y0 + 1.0;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double W = 640, H = 400, L = 70, R = 170, T = 40, B = 50;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  std::ostringstream s;
  s.precision(6);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    s << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << io::fmt_double(std::round(xv * 100) / 100) << "</text>\n";
    s << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << io::fmt_double(std::round(yv * 100) / 100) << "</text>\n";
  }
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  s << "<text transform=\"translate(16," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  std::size_t ci = 0;
  for (auto& [name, pts] : series) {
    std::sort(pts.begin(), pts.end(), [](const SweepPoint* a, const SweepPoint* b) { return a->x < b->x; });
    const char* c = colors[ci % 8];
    s << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (const SweepPoint* p : pts) s << px(p->x) << "," << py(p->stat.mean) << " ";
    s << "\"/>\n";
    for (const SweepPoint* p : pts) {
      s << "<line x1=\"" << px(p->x) << "\" y1=\"" << py(p->stat.mean - p->stat.se) << "\" x2=\"" << px(p->x)
        << "\" y2=\"" << py(p->stat.mean + p->stat.se) << "\" stroke=\"" << c << "\"/>\n";
      s << "<circle cx=\"" << px(p->x) << "\" cy=\"" << py(p->stat.mean) << "\" r=\"3\" fill=\"" << c << "\"/>\n";
    }
    const double ly = T + 10 + 18.0 * static_cast<double>(ci);
    s << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 32 << "\" y2=\"" << ly
      << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << W - R + 36 << "\" y=\"" << ly + 4 << "\">" << name << "</text>\n";
    ++ci;
  }
  s << "</svg>\n";
  return s.str();
}

inline std::string render_sweep_table(const std::string& sweep, const std::vector<ResultRow>& rows) {
  const auto pts = aggregate_sweep(rows);
  std::set<std::string> series;
  std::set<double> xs;
  for (const SweepPoint& p : pts) {
    series.insert(p.series);
    xs.insert(p.x);
  }
  std::ostringstream md;
  md << "| " << sweep_axis(sweep) << " |";
  for (const auto& s : series) md << " " << s << " CD |";
  md << "\n|---|";
  for (std::size_t i = 0; i < series.size(); ++i) md << "---|";
  md << "\n";
  for (double x : xs) {
    md << "| " << io::fmt_double(x) << " |";
    for (const auto& s : series) {
      const auto it = std::find_if(pts.begin(), pts.end(), [&](const SweepPoint& p) {
        return p.series == s && p.x == x && p.metric == "cd";
      });
      md << " " << (it == pts.end() ? std::string("MISSING") : fmt_stat(it->stat)) << " |";
    }
    md << "\n";
  }
  return md.str();
}

/// Reads whatever eval and sweep CSVs exist under the workspace and writes
/// <ws>/report/summary.md plus one SVG per sweep. Absent inputs are listed in
/// the summary rather than skipped silently.
inline std::string write_report(const Workspace& ws) {
  std::ostringstream md;
  ReportIssues issues;
  md << "# Reconstruction benchmark summary\n\n"
     << "Means over scenes (rows are averaged within a scene first) ± standard error across scenes.\n\n";
  std::set<std::string> hashes;
  for (BenchmarkKind kind : {BenchmarkKind::Spatial, BenchmarkKind::Temporal, BenchmarkKind::Articulated}) {
    const fs::path p = ws.eval() / (std::string(benchmark_name(kind)) + ".csv");
    md << "## " << benchmark_name(kind) << "\n\n";
    if (!fs::exists(p)) {
      md << "MISSING: " << p.filename().string() << " not found.\n\n";
      issues.missing.push_back("eval/" + p.filename().string());
      continue;
    }
    const auto rows = load_result_rows(p);
    for (const auto& r : rows) hashes.insert(r.config_hash);
    md << render_protocol_tables(kind, rows, issues);
  }
  fs::create_directories(ws.report());
  for (const std::string sweep : {"align", "match", "negratio"}) {
    const fs::path p = ws.sweep() / (sweep + ".csv");
    md << "## Sweep: " << sweep << "\n\n";
    if (!fs::exists(p)) {
      md << "MISSING: " << p.filename().string() << " not found.\n\n";
      issues.missing.push_back("sweep/" + p.filename().string());
      continue;
    }
    const auto rows = load_result_rows(p);
    for (const auto& r : rows) hashes.insert(r.config_hash);
    md << render_sweep_table(sweep, rows) << "\n";
    std::vector<SweepPoint> cd;
    for (const SweepPoint& s : aggregate_sweep(rows))
      if (s.metric == "cd") cd.push_back(s);
    const std::string svg = sweep + ".svg";
    io::write_file(ws.report() / svg,
                   svg_line_plot("CD vs " + sweep_axis(sweep), sweep_axis(sweep), "CD (x100)", cd));
    md << "![" << sweep << "](" << svg << ")\n\n";
  }
  md << "## Missing inputs\n\n";
  if (issues.missing.empty()) md << "None.\n";
  for (const auto& m : issues.missing) md << "- " << m << "\n";
  md << "\nConfig hashes: ";
  for (const auto& h : hashes) md << h << " ";
  md << "\n";
  io::write_file(ws.report() / "summary.md", md.str());
  return md.str();
}

}  // namespace jrm
