#include "trajsens/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "trajsens/stats.hpp"

namespace trajsens {

namespace {

using Json = nlohmann::ordered_json;

std::string epsilon_cell(const SensitivitySet& s) {
  return s.epsilon ? format_number(*s.epsilon) : "";
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string_view feature_kind_name(FeatureId::Kind k) {
  switch (k) {
    case FeatureId::Kind::StateHistoryAll: return "state_history_all";
    case FeatureId::Kind::StateCell: return "state_cell";
    case FeatureId::Kind::Image: return "image";
    case FeatureId::Kind::GraphNodes: return "graph_nodes";
    case FeatureId::Kind::GraphWeights: return "graph_weights";
  }
  return "?";
}

FeatureId::Kind parse_feature_kind(const std::string& name) {
  for (auto k : {FeatureId::Kind::StateHistoryAll, FeatureId::Kind::StateCell,
                 FeatureId::Kind::Image, FeatureId::Kind::GraphNodes,
                 FeatureId::Kind::GraphWeights}) {
    if (feature_kind_name(k) == name) return k;
  }
  throw ParseError("sets: unknown feature kind '" + name + "'");
}

Json boxplot_json(const BoxplotSummary& b) {
  Json outliers = Json::array();
  for (double v : b.outliers) outliers.push_back(v);
  return Json{{"n", b.n},
              {"q1", b.q1},
              {"q2", b.q2},
              {"q3", b.q3},
              {"lower_whisker", b.lower_whisker},
              {"upper_whisker", b.upper_whisker},
              {"outliers", std::move(outliers)}};
}

}  // namespace

std::string format_number(double v) {
  if (v == 0.0) v = 0.0;  // fold -0
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string attribution_records(std::span<const SensitivitySet> sets) {
  std::string out = "feature,kind,epsilon,n,q1,q2,q3,mean,zero_baseline_count\n";
  for (const auto& s : sets) {
    out += csv_field(s.label) + "," + std::string(perturb_kind_name(s.kind)) + "," +
           epsilon_cell(s) + "," + std::to_string(s.scores.size()) + ",";
    if (s.scores.empty()) {
      out += ",,,,";
    } else {
      const QuartileSummary q = s.summary();
      out += format_number(q.q1) + "," + format_number(q.q2) + "," + format_number(q.q3) + "," +
             format_number(q.mean) + ",";
    }
    out += std::to_string(s.zero_baseline_count) + "\n";
  }
  return out;
}

std::string report_table(std::span<const SensitivitySet> sets, bool transformed) {
  std::string out = "feature,kind,epsilon,n,q1,q2,q3,mean,lambda,outlier_count\n";
  for (const auto& s : sets) {
    out += csv_field(s.label) + "," + std::string(perturb_kind_name(s.kind)) + "," +
           epsilon_cell(s) + "," + std::to_string(s.scores.size()) + ",";
    if (s.scores.empty()) {
      out += ",,,,,0\n";
      continue;
    }
    const TransformedSet t = transform(s.scores);
    const std::vector<double>& v = transformed ? t.values : s.scores;
    const QuartileSummary q = quartiles(v);
    const BoxplotSummary b = boxplot_summary(v);
    out += format_number(q.q1) + "," + format_number(q.q2) + "," + format_number(q.q3) + "," +
           format_number(q.mean) + "," + format_number(t.lambda) + "," +
           std::to_string(b.outliers.size()) + "\n";
  }
  return out;
}

std::string plot_data(std::span<const SensitivitySet> sets) {
  Json groups = Json::array();
  for (const auto& s : sets) {
    Json g{{"feature", s.label},
           {"kind", perturb_kind_name(s.kind)},
           {"epsilon", s.epsilon ? Json(*s.epsilon) : Json(nullptr)},
           {"zero_baseline_count", s.zero_baseline_count}};
    if (s.scores.empty()) {
      g["lambda"] = nullptr;
      g["raw"] = nullptr;
      g["transformed"] = nullptr;
    } else {
      const TransformedSet t = transform(s.scores);
      g["lambda"] = t.lambda;
      g["lambda_degenerate"] = t.degenerate;
      g["raw"] = boxplot_json(boxplot_summary(s.scores));
      g["transformed"] = boxplot_json(boxplot_summary(t.values));
    }
    groups.push_back(std::move(g));
  }
  return Json{{"groups", std::move(groups)}}.dump(1) + "\n";
}

std::string boxplot_svg(std::span<const SensitivitySet> sets, const std::string& title) {
  constexpr double kLeft = 220.0, kRight = 760.0, kRow = 36.0, kTop = 50.0;
  std::vector<BoxplotSummary> boxes;
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const auto& s : sets) {
    if (s.scores.empty()) {
      boxes.emplace_back();
      continue;
    }
    BoxplotSummary b = boxplot_summary(transform(s.scores).values);
    const double mn = b.outliers.empty() ? b.lower_whisker : std::min(b.lower_whisker, b.outliers.front());
    const double mx = b.outliers.empty() ? b.upper_whisker : std::max(b.upper_whisker, b.outliers.back());
    lo = any ? std::min(lo, mn) : mn;
    hi = any ? std::max(hi, mx) : mx;
    any = true;
    boxes.push_back(std::move(b));
  }
  if (!(hi > lo)) hi = lo + 1.0;
  auto px = [&](double v) { return format_number(kLeft + (v - lo) / (hi - lo) * (kRight - kLeft)); };

  const double height = kTop + kRow * static_cast<double>(sets.size()) + 40.0;
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\""
      << format_number(height) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<text x=\"10\" y=\"24\" font-size=\"14\">" << xml_escape(title)
      << " (Yeo-Johnson transformed)</text>\n";
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const double y = kTop + kRow * static_cast<double>(i);
    const std::string mid = format_number(y + kRow / 2);
    std::string label = sets[i].label + " / " + std::string(perturb_kind_name(sets[i].kind));
    if (sets[i].epsilon) label += " eps=" + format_number(*sets[i].epsilon);
    out << "<text x=\"10\" y=\"" << format_number(y + kRow / 2 + 4) << "\">" << xml_escape(label)
        << "</text>\n";
    if (sets[i].scores.empty()) continue;
    const BoxplotSummary& b = boxes[i];
    out << "<line x1=\"" << px(b.lower_whisker) << "\" y1=\"" << mid << "\" x2=\"" << px(b.q1)
        << "\" y2=\"" << mid << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << px(b.q3) << "\" y1=\"" << mid << "\" x2=\"" << px(b.upper_whisker)
        << "\" y2=\"" << mid << "\" stroke=\"black\"/>\n";
    out << "<rect x=\"" << px(b.q1) << "\" y=\"" << format_number(y + 8) << "\" width=\""
        << format_number((b.q3 - b.q1) / (hi - lo) * (kRight - kLeft)) << "\" height=\""
        << format_number(kRow - 16) << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << px(b.q2) << "\" y1=\"" << format_number(y + 8) << "\" x2=\""
        << px(b.q2) << "\" y2=\"" << format_number(y + kRow - 8)
        << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    for (double o : b.outliers) {
      out << "<circle cx=\"" << px(o) << "\" cy=\"" << mid
          << "\" r=\"2.5\" fill=\"none\" stroke=\"#d62728\"/>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

std::string render_report(std::span<const SensitivitySet> sets, ReportFormat format,
                          const std::string& title) {
  switch (format) {
    case ReportFormat::Table: return report_table(sets, false);
    case ReportFormat::TransformedTable: return report_table(sets, true);
    case ReportFormat::PlotData: return plot_data(sets);
    case ReportFormat::Svg: return boxplot_svg(sets, title);
  }
  return {};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

void emit_report(std::span<const SensitivitySet> sets, const std::filesystem::path& path,
                 ReportFormat format, const std::string& title) {
  write_text(path, render_report(sets, format, title));
}

std::string serialize_sets(std::span<const SensitivitySet> sets) {
  Json arr = Json::array();
  for (const auto& s : sets) {
    Json scores = Json::array();
    for (double v : s.scores) scores.push_back(v);
    arr.push_back(Json{{"label", s.label},
                       {"kind", perturb_kind_name(s.kind)},
                       {"epsilon", s.epsilon ? Json(*s.epsilon) : Json(nullptr)},
                       {"feature",
                        {{"kind", feature_kind_name(s.feature.kind)},
                         {"agent", s.feature.agent},
                         {"dim", s.feature.dim},
                         {"step", s.feature.step},
                         {"node", s.feature.node}}},
                       {"zero_baseline_count", s.zero_baseline_count},
                       {"scores", std::move(scores)}});
  }
  return Json{{"sets", std::move(arr)}}.dump(1) + "\n";
}

std::vector<SensitivitySet> parse_sets(const std::string& text) {
  std::vector<SensitivitySet> out;
  try {
    const Json j = Json::parse(text);
    for (const auto& s : j.at("sets")) {
      SensitivitySet set;
      set.label = s.at("label").get<std::string>();
      set.kind = parse_perturb_kind(s.at("kind").get<std::string>());
      if (!s.at("epsilon").is_null()) set.epsilon = s.at("epsilon").get<double>();
      const Json& f = s.at("feature");
      set.feature.kind = parse_feature_kind(f.at("kind").get<std::string>());
      set.feature.agent = f.at("agent").get<int>();
      set.feature.dim = f.at("dim").get<int>();
      set.feature.step = f.at("step").get<int>();
      set.feature.node = f.at("node").get<int>();
      set.zero_baseline_count = s.at("zero_baseline_count").get<std::size_t>();
      set.scores = s.at("scores").get<std::vector<double>>();
      out.push_back(std::move(set));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("sets: ") + e.what());
  }
  return out;
}

}  // namespace trajsens
