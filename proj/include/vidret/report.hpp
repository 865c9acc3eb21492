#pragma once

#include "vidret/evaluator.hpp"
#include "vidret/trainer.hpp"

#include <nlohmann/json.hpp>

namespace vidret {

nlohmann::json to_json(const RankMetrics& m);
nlohmann::json to_json(const TrainingLog& log);

/// {"run_id", "config_hash", "kind", "metrics", ...extra}
nlohmann::json run_record(const std::string& run_id, const std::string& config_hash, const std::string& kind,
                          const nlohmann::json& metrics, const nlohmann::json& extra = nlohmann::json::object());

/// "<kind>-<config hash prefix>-<UTC timestamp>".
std::string make_run_id(const std::string& kind, const std::string& config_hash);

void append_jsonl(const std::filesystem::path& path, const nlohmann::json& record);

/// Columns padded to their widest cell; numeric-looking cells right-aligned.
std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

/// One row per labelled run: R@1, R@5, R@10, Med r, mAP, SumR (and nDCG when present).
std::string metrics_table(const std::vector<std::pair<std::string, RankMetrics>>& rows,
                          const std::string& label_header = "Run");

std::string format_fixed(double v, int digits);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal line chart as a standalone SVG document.
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<PlotSeries>& series);

/// loss.svg, objective.svg and lr.svg under `dir`.
std::vector<std::filesystem::path> write_training_plots(const TrainingLog& log, const std::filesystem::path& dir);

}  // namespace vidret
