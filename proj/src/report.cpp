#include "gridfm/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gridfm/errors.hpp"

namespace gridfm::report {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string svg_header(int w, int h) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
    << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << ' ' << h
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return s.str();
}

std::string escape_xml(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// White to `base` blue by t in [0,1].
std::string shade(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(255 - t * (255 - 31)));
  const int g = static_cast<int>(std::lround(255 - t * (255 - 119)));
  const int b = static_cast<int>(std::lround(255 - t * (255 - 180)));
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

nlohmann::json cell_json(const std::optional<Cell>& c) {
  return c ? nlohmann::json(format_cell(*c)) : nlohmann::json(nullptr);
}

}  // namespace

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n\r") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string format_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", value);
  return buf;
}

std::string probe_accuracy_csv(const std::vector<ProbeReport>& reports) {
  std::ostringstream out;
  out << "model,template,n,total,correct,accuracy\n";
  for (const ProbeReport& r : reports) {
    out << csv_field(r.model) << ',' << r.template_name << ',' << r.n << ','
        << r.total << ',' << r.correct << ',' << format_number(r.accuracy())
        << '\n';
  }
  return out.str();
}

std::string probe_ledger_csv(const ProbeReport& report) {
  std::ostringstream out;
  out << "state,action,true_cell,true_reward,predicted_cell,predicted_reward,"
         "correct,raw\n";
  for (const ProbeOutcome& o : report.outcomes) {
    out << csv_field(format_cell(o.state)) << ',' << to_string(o.action) << ','
        << csv_field(format_cell(o.true_cell)) << ',' << o.true_reward << ','
        << (o.predicted_cell ? csv_field(format_cell(*o.predicted_cell)) : "")
        << ','
        << (o.predicted_reward ? std::to_string(*o.predicted_reward) : "")
        << ',' << (o.correct ? 1 : 0) << ',' << csv_field(o.raw) << '\n';
  }
  return out.str();
}

std::string probe_json(const ProbeReport& report) {
  nlohmann::json j;
  j["model"] = report.model;
  j["template"] = report.template_name;
  j["n"] = report.n;
  j["total"] = report.total;
  j["correct"] = report.correct;
  j["accuracy"] = report.accuracy();
  auto& errs = j["errors"] = nlohmann::json::array();
  for (const ProbeOutcome& o : report.errors()) {
    errs.push_back({{"state", format_cell(o.state)},
                    {"action", std::string(to_string(o.action))},
                    {"true_cell", format_cell(o.true_cell)},
                    {"true_reward", o.true_reward},
                    {"predicted_cell", cell_json(o.predicted_cell)},
                    {"predicted_reward", o.predicted_reward
                                             ? nlohmann::json(*o.predicted_reward)
                                             : nlohmann::json(nullptr)},
                    {"raw", o.raw}});
  }
  return j.dump(2) + "\n";
}

std::string probe_error_svg(const ProbeReport& report) {
  const int n = report.n;
  const int cell = std::max(16, 400 / std::max(1, n));
  const int margin = 30;
  const int size = n * cell + 2 * margin;
  std::vector<int> errs(static_cast<std::size_t>(n) * n, 0);
  for (const ProbeOutcome& o : report.outcomes) {
    if (!o.correct) ++errs[static_cast<std::size_t>(o.state.y) * n + o.state.x];
  }
  auto cx = [&](double x) { return margin + (x + 0.5) * cell; };
  auto cy = [&](double y) { return margin + (n - 1 - y + 0.5) * cell; };

  std::ostringstream s;
  s << svg_header(size, size + 20);
  s << "<defs><marker id=\"head\" markerWidth=\"6\" markerHeight=\"6\" refX=\"5\" "
       "refY=\"3\" orient=\"auto\"><path d=\"M0,0 L6,3 L0,6 z\" "
       "fill=\"#d62728\"/></marker></defs>\n";
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const int e = errs[static_cast<std::size_t>(y) * n + x];
      s << "<rect x=\"" << margin + x * cell << "\" y=\""
        << margin + (n - 1 - y) * cell << "\" width=\"" << cell
        << "\" height=\"" << cell << "\" fill=\"" << shade(e / 4.0)
        << "\" stroke=\"#999\"/>\n";
    }
  }
  for (const ProbeOutcome& o : report.outcomes) {
    if (o.correct) continue;
    const double x0 = cx(o.state.x), y0 = cy(o.state.y);
    if (!o.predicted_cell) {
      s << "<circle cx=\"" << format_number(x0) << "\" cy=\"" << format_number(y0)
        << "\" r=\"4\" fill=\"none\" stroke=\"#d62728\"/>\n";
      continue;
    }
    const Cell p = *o.predicted_cell;
    if (p == o.state) {
      // Predicted "no movement": a short stub in the attempted direction.
      const Cell dir = apply_move({1, 1}, o.action, 3);
      const double x1 = x0 + (dir.x - 1) * cell * 0.3;
      const double y1 = y0 - (dir.y - 1) * cell * 0.3;
      s << "<line x1=\"" << format_number(x0) << "\" y1=\"" << format_number(y0)
        << "\" x2=\"" << format_number(x1) << "\" y2=\"" << format_number(y1)
        << "\" stroke=\"#d62728\" stroke-dasharray=\"2,2\"/>\n";
      continue;
    }
    s << "<line x1=\"" << format_number(x0) << "\" y1=\"" << format_number(y0)
      << "\" x2=\"" << format_number(cx(p.x)) << "\" y2=\"" << format_number(cy(p.y))
      << "\" stroke=\"#d62728\" marker-end=\"url(#head)\"/>\n";
  }
  s << "<text x=\"" << margin << "\" y=\"" << size + 10 << "\">"
    << escape_xml(report.model + " / " + report.template_name) << ": "
    << report.correct << "/" << report.total << " correct</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string distribution_csv(const DistributionReport& report) {
  std::ostringstream out;
  if (report.n == 0) {
    out << "outcome,count\n1," << report.counts[0] << "\n0," << report.counts[1]
        << '\n';
    return out.str();
  }
  out << "x,y,count\n";
  for (int y = 0; y < report.n; ++y) {
    for (int x = 0; x < report.n; ++x) {
      out << x << ',' << y << ','
          << report.counts[static_cast<std::size_t>(y) * report.n + x] << '\n';
    }
  }
  return out.str();
}

std::string distribution_json(const DistributionReport& report) {
  nlohmann::json j;
  j["n"] = report.n;
  j["counts"] = report.counts;
  j["sample_size"] = report.sample_size;
  j["rejected"] = report.rejected;
  j["support"] = std::string(support_name(report.support));
  j["out_of_support"] = report.out_of_support;
  j["chi_square"] = std::isfinite(report.chi_square)
                        ? nlohmann::json(report.chi_square)
                        : nlohmann::json("inf");
  j["dof"] = report.dof;
  j["alpha"] = report.alpha;
  j["critical"] = report.critical;
  j["p_value"] = report.p_value;
  j["pass"] = report.pass;
  return j.dump(2) + "\n";
}

std::string density_svg(const DistributionReport& report) {
  const int n = report.n;
  if (n == 0) throw UsageError("density plots need a location report");
  const int cell = std::max(16, 400 / n);
  const int margin = 30;
  const int size = n * cell + 2 * margin;
  const long peak = std::max<long>(1, *std::max_element(report.counts.begin(),
                                                         report.counts.end()));
  std::ostringstream s;
  s << svg_header(size, size + 20);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const long c = report.counts[static_cast<std::size_t>(y) * n + x];
      const int px = margin + x * cell;
      const int py = margin + (n - 1 - y) * cell;
      s << "<rect x=\"" << px << "\" y=\"" << py << "\" width=\"" << cell
        << "\" height=\"" << cell << "\" fill=\""
        << shade(static_cast<double>(c) / peak) << "\" stroke=\"#999\"/>\n";
      if (cell >= 24) {
        s << "<text x=\"" << px + cell / 2 << "\" y=\"" << py + cell / 2 + 4
          << "\" text-anchor=\"middle\">" << c << "</text>\n";
      }
    }
  }
  s << "<text x=\"" << margin << "\" y=\"" << size + 10 << "\">chi2="
    << format_number(report.chi_square) << " dof=" << report.dof
    << " critical=" << format_number(report.critical)
    << (report.pass ? " pass" : " fail") << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string binary_table_csv(const std::vector<BinaryRow>& rows) {
  std::ostringstream out;
  out << "source,requested_p1,requested_p2,observed_1,observed_0,discrepancy,"
         "requested_discrepancy\n";
  for (const BinaryRow& r : rows) {
    out << csv_field(r.source) << ',' << format_number(r.requested_p1) << ','
        << format_number(1.0 - r.requested_p1) << ','
        << format_number(r.observed_1) << ',' << format_number(r.observed_0)
        << ',' << format_number(r.discrepancy()) << ','
        << format_number(r.requested_discrepancy()) << '\n';
  }
  return out.str();
}

namespace {

struct Plot {
  int width = 640, height = 400, left = 60, right = 180, top = 20, bottom = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  double px(double x) const {
    return left + (x - x0) / (x1 - x0) * (width - left - right);
  }
  double py(double y) const {
    return top + (1.0 - (y - y0) / (y1 - y0)) * (height - top - bottom);
  }
  std::string axes(const std::string& xlabel, const std::string& ylabel) const {
    std::ostringstream s;
    s << "<line x1=\"" << left << "\" y1=\"" << py(y0) << "\" x2=\""
      << px(x1) << "\" y2=\"" << py(y0) << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << py(y0) << "\" x2=\"" << left
      << "\" y2=\"" << py(y1) << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      const double v = y0 + (y1 - y0) * k / 4.0;
      s << "<text x=\"" << left - 6 << "\" y=\"" << format_number(py(v) + 4)
        << "\" text-anchor=\"end\">" << format_number(v) << "</text>\n";
      const double u = x0 + (x1 - x0) * k / 4.0;
      s << "<text x=\"" << format_number(px(u)) << "\" y=\"" << py(y0) + 16
        << "\" text-anchor=\"middle\">" << format_number(u) << "</text>\n";
    }
    s << "<text x=\"" << format_number((px(x0) + px(x1)) / 2) << "\" y=\""
      << height - 10 << "\" text-anchor=\"middle\">" << escape_xml(xlabel)
      << "</text>\n"
      << "<text x=\"14\" y=\"" << format_number((py(y0) + py(y1)) / 2)
      << "\" transform=\"rotate(-90 14 " << format_number((py(y0) + py(y1)) / 2)
      << ")\" text-anchor=\"middle\">" << escape_xml(ylabel) << "</text>\n";
    return s.str();
  }
  std::string legend(int index, const std::string& label, const char* color,
                     bool dashed) const {
    std::ostringstream s;
    const double y = top + 14 + index * 18;
    const double x = width - right + 12;
    s << "<line x1=\"" << x << "\" y1=\"" << y << "\" x2=\"" << x + 20
      << "\" y2=\"" << y << "\" stroke=\"" << color << "\" stroke-width=\"2\""
      << (dashed ? " stroke-dasharray=\"4,3\"" : "") << "/>\n"
      << "<text x=\"" << x + 26 << "\" y=\"" << y + 4 << "\">"
      << escape_xml(label) << "</text>\n";
    return s.str();
  }
};

std::string polyline(const Plot& p, const std::vector<std::pair<double, double>>& pts,
                     const char* color, bool dashed) {
  std::ostringstream s;
  s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\""
    << (dashed ? " stroke-dasharray=\"4,3\"" : "") << " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) s << ' ';
    s << format_number(p.px(pts[i].first)) << ',' << format_number(p.py(pts[i].second));
  }
  s << "\"/>\n";
  return s.str();
}

}  // namespace

std::string binary_sweep_svg(const std::vector<BinaryRow>& rows) {
  Plot p;
  p.x0 = 0.5;
  p.x1 = 1.0;
  p.y0 = 0.0;
  p.y1 = 1.0;
  std::map<std::string, std::vector<std::pair<double, double>>> by_source;
  std::map<double, double> requested;
  for (const BinaryRow& r : rows) {
    by_source[r.source].push_back({r.requested_p1, r.observed_1});
    requested[r.requested_p1] = r.requested_p1;
  }
  std::ostringstream s;
  s << svg_header(p.width, p.height) << p.axes("requested p1", "frequency of outcome 1");
  std::vector<std::pair<double, double>> ref(requested.begin(), requested.end());
  s << polyline(p, ref, "#000000", true) << p.legend(0, "requested", "#000000", true);
  int k = 0;
  for (auto& [source, pts] : by_source) {
    std::sort(pts.begin(), pts.end());
    const char* color = kPalette[k % 8];
    s << polyline(p, pts, color, false) << p.legend(k + 1, source, color, false);
    ++k;
  }
  s << "</svg>\n";
  return s.str();
}

std::string curve_json(const LearningCurve& curve) {
  nlohmann::json j;
  j["phase"] = std::string(phase_name(curve.phase));
  j["step_offset"] = curve.step_offset;
  auto& seeds = j["seeds"] = nlohmann::json::array();
  for (const SeedCurve& s : curve.seeds) {
    nlohmann::json e;
    e["seed"] = s.seed;
    auto& pts = e["points"] = nlohmann::json::array();
    for (const CurvePoint& pt : s.points) {
      pts.push_back({{"step", pt.step}, {"success", pt.success},
                     {"mean_return", pt.mean_return}});
    }
    e["error"] = s.error ? nlohmann::json(*s.error) : nlohmann::json(nullptr);
    seeds.push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

std::string learning_curve_svg(
    const std::vector<CurveSeries>& series,
    const std::vector<std::pair<std::string, double>>& fa_lines) {
  Plot p;
  p.width = 760;
  p.x0 = 0;
  p.x1 = 1;
  std::vector<std::vector<std::pair<double, double>>> lines;
  for (const CurveSeries& cs : series) {
    // Seed-mean success at every step that some seed reported.
    std::map<long, std::pair<double, int>> acc;
    for (const SeedCurve& s : cs.curve->seeds) {
      for (const CurvePoint& pt : s.points) {
        auto& a = acc[pt.step];
        a.first += pt.success;
        a.second += 1;
      }
    }
    std::vector<std::pair<double, double>> pts;
    for (const auto& [step, a] : acc) {
      pts.push_back({static_cast<double>(step), a.first / a.second});
      p.x1 = std::max(p.x1, static_cast<double>(step));
    }
    lines.push_back(std::move(pts));
  }
  std::ostringstream s;
  s << svg_header(p.width, p.height)
    << p.axes("environment steps", "success rate");
  int k = 0;
  for (std::size_t i = 0; i < series.size(); ++i, ++k) {
    const char* color = kPalette[k % 8];
    s << polyline(p, lines[i], color, false)
      << p.legend(k, series[i].label, color, false);
  }
  for (const auto& [label, rate] : fa_lines) {
    const char* color = kPalette[k % 8];
    s << polyline(p, {{p.x0, rate}, {p.x1, rate}}, color, true)
      << p.legend(k, label, color, true);
    ++k;
  }
  s << "</svg>\n";
  return s.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
  if (!out) throw ConfigError("failed writing " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace gridfm::report
