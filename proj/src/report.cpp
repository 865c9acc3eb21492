#include "vidret/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace vidret {

using nlohmann::json;

json to_json(const RankMetrics& m) {
  json j = {{"r1", m.r1}, {"r5", m.r5}, {"r10", m.r10}, {"medr", m.medr},
            {"map", m.map}, {"sumr", m.sumr}, {"queries", m.queries}};
  if (m.ndcg) j["ndcg"] = *m.ndcg;
  return j;
}

json to_json(const TrainingLog& log) {
  json epochs = json::array();
  for (const auto& e : log.epochs) {
    json r = {{"epoch", e.epoch},     {"train_loss", e.train_loss}, {"objective", e.objective},
              {"lr", e.lr},           {"improved", e.improved},     {"lr_halved", e.lr_halved},
              {"seconds", e.seconds}};
    if (e.val_metrics) r["val"] = to_json(*e.val_metrics);
    epochs.push_back(std::move(r));
  }
  return {{"epochs", epochs},
          {"lr_halvings", log.lr_halvings},
          {"best_epoch", log.best_epoch},
          {"best_objective", log.best_objective},
          {"early_stopped", log.early_stopped}};
}

json run_record(const std::string& run_id, const std::string& config_hash, const std::string& kind,
                const json& metrics, const json& extra) {
  json j = {{"run_id", run_id}, {"config_hash", config_hash}, {"kind", kind}, {"metrics", metrics}};
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

std::string make_run_id(const std::string& kind, const std::string& config_hash) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << kind << '-' << config_hash.substr(0, 8) << '-' << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  return ss.str();
}

void append_jsonl(const std::filesystem::path& path, const json& record) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot append to " + path.string());
  out << record.dump() << '\n';
}

std::string format_fixed(double v, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

namespace {

bool numeric(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end != nullptr && *end == '\0';
}

}  // namespace

std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw Error("format_table: ragged row");
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells, bool is_header) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c > 0) out << "  ";
      const bool right = !is_header ? numeric(cells[c]) : c > 0;
      out << (right ? std::right : std::left) << std::setw(static_cast<int>(width[c])) << cells[c];
    }
    out << '\n';
  };
  line(header, true);
  std::size_t total = 0;
  for (std::size_t w : width) total += w;
  out << std::string(total + 2 * (width.empty() ? 0 : width.size() - 1), '-') << '\n';
  for (const auto& r : rows) line(r, false);
  return out.str();
}

std::string metrics_table(const std::vector<std::pair<std::string, RankMetrics>>& rows,
                          const std::string& label_header) {
  const bool with_ndcg = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.second.ndcg.has_value(); });
  std::vector<std::string> header{label_header, "R@1", "R@5", "R@10", "Med r", "mAP", "SumR"};
  if (with_ndcg) header.push_back("nDCG");
  std::vector<std::vector<std::string>> body;
  for (const auto& [label, m] : rows) {
    std::vector<std::string> r{label,
                               format_fixed(m.r1, 1),
                               format_fixed(m.r5, 1),
                               format_fixed(m.r10, 1),
                               format_fixed(m.medr, 0),
                               format_fixed(m.map, 3),
                               format_fixed(m.sumr, 1)};
    if (with_ndcg) r.push_back(m.ndcg ? format_fixed(*m.ndcg, 3) : "-");
    body.push_back(std::move(r));
  }
  return format_table(header, body);
}

// ---------------------------------------------------------------------------

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

std::string num(double v) { return format_fixed(v, 2); }

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<PlotSeries>& series) {
  constexpr double W = 640, H = 400, L = 70, R = 150, T = 40, B = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw Error("svg_line_plot: x and y lengths differ in " + s.name);
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pw = W - L - R, ph = H - T - B;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return T + ph - (y - y0) / (y1 - y0) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape_xml(title)
    << "</text>\n";
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fy = y0 + (y1 - y0) * i / 4.0, fx = x0 + (x1 - x0) * i / 4.0;
    o << "<line x1=\"" << L << "\" x2=\"" << L + pw << "\" y1=\"" << num(py(fy)) << "\" y2=\"" << num(py(fy))
      << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << num(py(fy) + 4) << "\" text-anchor=\"end\">" << format_fixed(fy, 3)
      << "</text>\n";
    o << "<text x=\"" << num(px(fx)) << "\" y=\"" << T + ph + 18 << "\" text-anchor=\"middle\">"
      << format_fixed(fx, 1) << "</text>\n";
  }
  o << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << escape_xml(x_label)
    << "</text>\n";
  o << "<text transform=\"translate(16," << T + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape_xml(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      o << num(px(s.x[i])) << ',' << num(py(s.y[i])) << ' ';
    }
    o << "\"/>\n";
    const double ly = T + 14 + 18.0 * static_cast<double>(k);
    o << "<line x1=\"" << L + pw + 10 << "\" x2=\"" << L + pw + 30 << "\" y1=\"" << ly - 4 << "\" y2=\"" << ly - 4
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << L + pw + 36 << "\" y=\"" << ly << "\">" << escape_xml(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::vector<std::filesystem::path> write_training_plots(const TrainingLog& log, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  PlotSeries loss{"train loss", {}, {}}, objective{"validation objective", {}, {}}, lr{"learning rate", {}, {}};
  PlotSeries r1{"R@1", {}, {}}, r5{"R@5", {}, {}}, r10{"R@10", {}, {}};
  for (const auto& e : log.epochs) {
    const auto x = static_cast<double>(e.epoch);
    loss.x.push_back(x), loss.y.push_back(e.train_loss);
    objective.x.push_back(x), objective.y.push_back(e.objective);
    lr.x.push_back(x), lr.y.push_back(e.lr);
    if (e.val_metrics) {
      r1.x.push_back(x), r1.y.push_back(e.val_metrics->r1);
      r5.x.push_back(x), r5.y.push_back(e.val_metrics->r5);
      r10.x.push_back(x), r10.y.push_back(e.val_metrics->r10);
    }
  }
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& file, const std::string& svg) {
    const auto path = dir / file;
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << svg;
    written.push_back(path);
  };
  emit("loss.svg", svg_line_plot("Training loss", "epoch", "loss", {loss}));
  emit("objective.svg", svg_line_plot("Validation objective", "epoch", "objective", {objective}));
  emit("lr.svg", svg_line_plot("Learning rate", "epoch", "lr", {lr}));
  if (!r1.x.empty()) emit("recall.svg", svg_line_plot("Validation recall", "epoch", "percent", {r1, r5, r10}));
  return written;
}

}  // namespace vidret
