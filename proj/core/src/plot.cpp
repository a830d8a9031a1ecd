#include "uxai/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "uxai/checkpoint.hpp"
#include "uxai/error.hpp"

namespace uxai {

namespace {

constexpr std::string_view kHeader = "test,uq,explainer,dataset,stage_fraction,metric_name,metric_value,seed";

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double number(const ReportRow& row) {
  try {
    std::size_t used = 0;
    const double v = std::stod(row.value, &used);
    if (used != row.value.size()) throw std::invalid_argument(row.value);
    return v;
  } catch (const std::exception&) {
    throw FormatError("metric " + row.metric + " has non-numeric value '" + row.value + "'");
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

std::vector<ReportRow> parse_report_csv(std::string_view text, const std::string& source) {
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = false;
  std::vector<ReportRow> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      if (line != kHeader) throw FormatError(source + ": header does not match the report schema");
      header = true;
      continue;
    }
    const auto c = split(line);
    if (c.size() != 8) throw FormatError(source + ": line " + std::to_string(line_no) + " has " +
                                         std::to_string(c.size()) + " columns, expected 8");
    rows.push_back({c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]});
  }
  if (rows.empty()) throw FormatError(source + ": report has no data rows");
  return rows;
}

nlohmann::json plot_description(std::span<const ReportRow> rows) {
  if (rows.empty()) throw FormatError("cannot describe a plot without rows");
  const auto& first = rows.front();
  for (const auto& r : rows)
    if (r.test != first.test) throw FormatError("report mixes weight and data rows");
  const bool image = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.metric == "ssim_mean"; });
  std::string verdict = "unknown";
  for (const auto& r : rows)
    if (r.metric == "verdict") verdict = r.value;

  nlohmann::json d;
  d["title"] = first.test + " randomization: " + first.uq + " + " + first.explainer + " on " + first.dataset +
               " (seed " + first.seed + ", verdict " + verdict + ")";
  if (first.test == "weight") {
    d["chart"] = "line";
    d["x_label"] = "fraction of layers randomized";
    d["y_label"] = image ? "SSIM vs unrandomized" : "value";
    const std::vector<std::string> stats =
        image ? std::vector<std::string>{"ssim_mean", "ssim_std"}
              : std::vector<std::string>{"mean_cosine", "aggregate_sigma"};
    nlohmann::json series = nlohmann::json::array();
    for (const auto& stat : stats) {
      nlohmann::json s{{"name", stat}, {"x", nlohmann::json::array()}, {"y", nlohmann::json::array()}};
      for (const auto& r : rows) {
        if (r.metric != stat) continue;
        try {
          s["x"].push_back(std::stod(r.stage));
        } catch (const std::exception&) {
          throw FormatError("weight-test stage '" + r.stage + "' is not a fraction");
        }
        s["y"].push_back(number(r));
      }
      if (s["x"].empty()) throw FormatError("weight-test report lacks metric " + stat);
      series.push_back(std::move(s));
    }
    d["series"] = std::move(series);
    return d;
  }
  if (first.test != "data") throw FormatError("unknown test kind '" + first.test + "'");
  d["chart"] = "bar";
  d["y_label"] = image ? "SSIM, true vs random labels" : "aggregate explanation sigma";
  std::map<std::string, nlohmann::json> groups;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    const std::string key = r.uq + " / " + r.explainer;
    const bool wanted = image ? (r.stage == "random_labels" && (r.metric == "ssim_mean" || r.metric == "ssim_std"))
                              : r.metric == "aggregate_sigma";
    if (!wanted) continue;
    if (!groups.count(key)) {
      order.push_back(key);
      groups[key] = nlohmann::json{{"name", key}, {"bars", nlohmann::json::array()}};
    }
    groups[key]["bars"].push_back({{"label", image ? r.metric : r.stage}, {"value", number(r)}});
  }
  if (order.empty()) throw FormatError("data-test report lacks comparison metrics");
  d["groups"] = nlohmann::json::array();
  for (const auto& k : order) d["groups"].push_back(groups[k]);
  return d;
}

std::string render_svg(const nlohmann::json& d) {
  constexpr double W = 640, H = 400, L = 70, R = 20, T = 50, B = 60;
  const double pw = W - L - R, ph = H - T - B;
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
                  "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  s += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-size=\"13\">" +
       escape(d.at("title").get<std::string>()) + "</text>\n";
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

  std::vector<double> ys;
  if (d.at("chart") == "line") {
    for (const auto& ser : d.at("series"))
      for (const auto& y : ser.at("y")) ys.push_back(y.get<double>());
  } else {
    for (const auto& g : d.at("groups"))
      for (const auto& b : g.at("bars")) ys.push_back(b.at("value").get<double>());
  }
  double lo = std::min(0.0, *std::min_element(ys.begin(), ys.end()));
  double hi = std::max(*std::max_element(ys.begin(), ys.end()), lo + 1e-12);
  hi += 0.05 * (hi - lo);
  auto py = [&](double v) { return T + ph * (1.0 - (v - lo) / (hi - lo)); };

  s += "<line x1=\"" + fmt(L) + "\" y1=\"" + fmt(T) + "\" x2=\"" + fmt(L) + "\" y2=\"" + fmt(T + ph) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt(L) + "\" y1=\"" + fmt(T + ph) + "\" x2=\"" + fmt(L + pw) + "\" y2=\"" + fmt(T + ph) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    s += "<text x=\"" + fmt(L - 6) + "\" y=\"" + fmt(py(v) + 4) + "\" text-anchor=\"end\">" + fmt(v) + "</text>\n";
  }
  s += "<text x=\"16\" y=\"" + fmt(T + ph / 2) + "\" transform=\"rotate(-90 16 " + fmt(T + ph / 2) +
       ")\" text-anchor=\"middle\">" + escape(d.at("y_label").get<std::string>()) + "</text>\n";

  if (d.at("chart") == "line") {
    auto px = [&](double x) { return L + pw * x; };
    for (int i = 0; i <= 5; ++i) {
      const double x = i / 5.0;
      s += "<text x=\"" + fmt(px(x)) + "\" y=\"" + fmt(T + ph + 18) + "\" text-anchor=\"middle\">" + fmt(x) +
           "</text>\n";
    }
    s += "<text x=\"" + fmt(L + pw / 2) + "\" y=\"" + fmt(H - 12) + "\" text-anchor=\"middle\">" +
         escape(d.at("x_label").get<std::string>()) + "</text>\n";
    std::size_t k = 0;
    for (const auto& ser : d.at("series")) {
      const char* c = colors[k % 4];
      std::string pts;
      for (std::size_t i = 0; i < ser.at("x").size(); ++i) {
        const double x = px(ser["x"][i].get<double>()), y = py(ser["y"][i].get<double>());
        pts += fmt(x) + "," + fmt(y) + " ";
        s += "<circle cx=\"" + fmt(x) + "\" cy=\"" + fmt(y) + "\" r=\"3\" fill=\"" + c + "\"/>\n";
      }
      s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + c + "\" stroke-width=\"2\"/>\n";
      s += "<text x=\"" + fmt(L + pw - 110) + "\" y=\"" + fmt(T + 14 + 16.0 * static_cast<double>(k)) +
           "\" fill=\"" + c + "\">" + escape(ser.at("name").get<std::string>()) + "</text>\n";
      ++k;
    }
  } else {
    const auto& groups = d.at("groups");
    const double gw = pw / static_cast<double>(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto& bars = groups[g].at("bars");
      const double bw = gw * 0.7 / static_cast<double>(bars.size());
      for (std::size_t b = 0; b < bars.size(); ++b) {
        const double v = bars[b].at("value").get<double>();
        const double x = L + gw * static_cast<double>(g) + gw * 0.15 + bw * static_cast<double>(b);
        const double top = std::min(py(v), py(0.0)), height = std::abs(py(v) - py(0.0));
        s += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(top) + "\" width=\"" + fmt(bw * 0.9) + "\" height=\"" +
             fmt(height) + "\" fill=\"" + colors[b % 4] + "\"/>\n";
        s += "<text x=\"" + fmt(x + bw * 0.45) + "\" y=\"" + fmt(top - 4) + "\" text-anchor=\"middle\">" + fmt(v) +
             "</text>\n";
        s += "<text x=\"" + fmt(x + bw * 0.45) + "\" y=\"" + fmt(T + ph + 16) + "\" text-anchor=\"middle\">" +
             escape(bars[b].at("label").get<std::string>()) + "</text>\n";
      }
      s += "<text x=\"" + fmt(L + gw * (static_cast<double>(g) + 0.5)) + "\" y=\"" + fmt(T + ph + 34) +
           "\" text-anchor=\"middle\">" + escape(groups[g].at("name").get<std::string>()) + "</text>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

std::vector<std::filesystem::path> plot_reports(std::span<const std::filesystem::path> csv_paths,
                                                const std::filesystem::path& out_dir) {
  if (csv_paths.empty()) throw InvalidArgument("no report CSVs given");
  std::vector<std::pair<std::filesystem::path, std::string>> pending;
  for (const auto& p : csv_paths) {
    const auto bytes = read_file(p);
    const auto rows = parse_report_csv(std::string(bytes.begin(), bytes.end()), p.string());
    const std::string stem = p.parent_path().filename().string() + "-" + p.stem().string();
    pending.emplace_back(out_dir / (stem + ".svg"), render_svg(plot_description(rows)));
  }
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& [path, svg] : pending) {
    write_file_atomic(path, svg);
    written.push_back(path);
  }
  return written;
}

}  // namespace uxai
