#include "vidret/ablation.hpp"

#include "vidret/report.hpp"

#include <chrono>
#include <fstream>
#include <algorithm>
#include <map>
#include <set>

namespace vidret {

using nlohmann::json;

namespace {

std::string canonical_key(const std::string& key) {
  static const std::map<std::string, std::string> aliases = {
      {"branches", "model.branches"},   {"dependency", "intensive.dependent"},
      {"windows", "intensive.windows"}, {"attention", "intensive.variant"},
      {"lateral", "intensive.variant"}, {"preview", "preview.kind"},
  };
  auto it = aliases.find(key);
  return it == aliases.end() ? key : it->second;
}

std::string value_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string describe(const json& overrides) {
  if (overrides.empty()) return "base";
  std::string out;
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    if (!out.empty()) out += ',';
    out += it.key() + '=' + value_text(it.value());
  }
  return out;
}

struct V2VOptions {
  bool enabled = false;
  BranchSel branch = BranchSel::Both;
  FeatureSpace space = FeatureSpace::Raw;
  double threshold = 0.2;
};

AblationRow run_one(const Config& config, const std::string& split, const std::string& name, const V2VOptions& v2v) {
  const auto t0 = std::chrono::steady_clock::now();
  AblationRow row;
  row.cell = name;
  row.seed = config.train.seed;
  row.config_hash = config_hash(config);
  const Corpus corpus = corpus_from_config(config);
  auto model = build_model(config, corpus.train, config.train.seed);
  row.parameters = model->params().scalar_count();
  TrainOptions opts;
  opts.restore_best = true;
  const TrainResult res = train(*model, corpus, opts);
  row.epochs = static_cast<int>(res.log.epochs.size());
  row.best_epoch = res.log.best_epoch;

  const CorpusSplit& eval_split = corpus.split(split);
  const EncodedSplit enc = encode_split(*model, eval_split);
  const SimilarityMatrix t2v = text_to_video(*model, enc);
  row.t2v = rank_metrics(t2v.scores, text_to_video_truth(eval_split, t2v));
  if (v2v.enabled) {
    const V2VAnnotation ann = build_v2v_annotations(eval_split, token_jaccard, v2v.threshold);
    if (ann.queries.empty()) {
      row.note = "no v2v query has a relevant video";
    } else {
      const bool has_branch = (v2v.branch != BranchSel::Preview || model->has_preview_branch()) &&
                              (v2v.branch != BranchSel::Intensive || model->has_intensive_branch()) &&
                              (v2v.branch != BranchSel::Both ||
                               (model->has_preview_branch() && model->has_intensive_branch()));
      if (has_branch) {
        row.v2v = evaluate_v2v(video_to_video(*model, enc, v2v.branch, v2v.space), ann);
      } else {
        row.note = "v2v branch " + to_string(v2v.branch) + " not present";
      }
    }
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

}  // namespace

AblationGrid ablation_grid_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("ablation grid must be a JSON object");
  static const std::set<std::string> known = {"base", "axes", "cells", "seeds", "split", "v2v"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (known.count(it.key()) == 0) throw ConfigError("unknown ablation grid key: " + it.key());
  }
  AblationGrid g;
  g.base = j.contains("base") ? config_from_json(j.at("base")) : desk_profile();
  if (j.contains("seeds")) g.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (g.seeds.empty()) throw ConfigError("ablation grid needs at least one seed");
  if (j.contains("split")) g.split = j.at("split").get<std::string>();
  if (g.split != "train" && g.split != "val" && g.split != "test") throw ConfigError("unknown split " + g.split);
  if (j.contains("v2v")) {
    const json& v = j.at("v2v");
    g.v2v = true;
    if (v.contains("branch")) g.v2v_branch = parse_branch_sel(v.at("branch").get<std::string>());
    if (v.contains("space")) g.v2v_space = parse_feature_space(v.at("space").get<std::string>());
    if (v.contains("threshold")) g.v2v_threshold = v.at("threshold").get<double>();
  }

  if (j.contains("axes")) {
    std::vector<json> combos{json::object()};
    for (auto it = j.at("axes").begin(); it != j.at("axes").end(); ++it) {
      if (!it.value().is_array() || it.value().empty()) {
        throw ConfigError("ablation axis " + it.key() + " must be a non-empty array");
      }
      const std::string key = canonical_key(it.key());
      std::vector<json> next;
      for (const json& c : combos) {
        for (const json& v : it.value()) {
          json e = c;
          e[key] = v;
          next.push_back(std::move(e));
        }
      }
      combos = std::move(next);
    }
    for (json& c : combos) g.cells.push_back({describe(c), std::move(c)});
  }
  if (j.contains("cells")) {
    for (const json& c : j.at("cells")) {
      AblationCell cell;
      json set = c.value("set", json::object());
      for (auto it = set.begin(); it != set.end(); ++it) cell.overrides[canonical_key(it.key())] = it.value();
      cell.name = c.value("name", describe(cell.overrides));
      g.cells.push_back(std::move(cell));
    }
  }
  if (g.cells.empty()) g.cells.push_back({"base", json::object()});
  return g;
}

AblationGrid load_ablation_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open ablation grid " + path.string());
  try {
    return ablation_grid_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigError("ablation grid " + path.string() + ": " + e.what());
  }
}

AblationRow run_cell(const Config& config, const std::string& split, const std::string& name) {
  validate(config);
  return run_one(config, split, name, V2VOptions{});
}

AblationReport run_ablation(const AblationGrid& grid, const AblationProgress& progress) {
  AblationReport report;
  const V2VOptions v2v{grid.v2v, grid.v2v_branch, grid.v2v_space, grid.v2v_threshold};
  for (const AblationCell& cell : grid.cells) {
    for (std::uint64_t seed : grid.seeds) {
      Config cfg = grid.base;
      AblationRow row;
      row.cell = cell.name;
      row.seed = seed;
      try {
        apply_overrides(cfg, cell.overrides);
        cfg.train.seed = seed;
        if (cfg.data.dir.empty()) cfg.data.synth.seed = seed;
        validate(cfg);
      } catch (const ConfigError& e) {
        row.skipped = true;
        row.note = std::string("skipped: ") + e.what();
        report.rows.push_back(row);
        if (progress) progress(row);
        continue;
      }
      row = run_one(cfg, grid.split, cell.name, v2v);
      report.rows.push_back(row);
      if (progress) progress(row);
    }
  }
  return report;
}

std::string AblationReport::text_table() const {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const AblationRow*>> by_cell;
  for (const auto& r : rows) {
    if (by_cell.find(r.cell) == by_cell.end()) order.push_back(r.cell);
    by_cell[r.cell].push_back(&r);
  }
  const bool any_v2v = std::any_of(rows.begin(), rows.end(), [](const AblationRow& r) { return r.v2v.has_value(); });
  std::vector<std::string> header{"Cell", "Seeds", "R@1", "R@5", "R@10", "Med r", "mAP", "SumR"};
  if (any_v2v) header.insert(header.end(), {"v2v nDCG", "v2v mAP"});
  header.push_back("Note");
  std::vector<std::vector<std::string>> body;
  for (const auto& name : order) {
    RankMetrics mean;
    double v_ndcg = 0.0, v_map = 0.0;
    std::size_t n = 0, nv = 0;
    std::string note;
    for (const AblationRow* r : by_cell[name]) {
      if (!r->note.empty() && note.empty()) note = r->note;
      if (!r->t2v) continue;
      ++n;
      mean.r1 += r->t2v->r1;
      mean.r5 += r->t2v->r5;
      mean.r10 += r->t2v->r10;
      mean.medr += r->t2v->medr;
      mean.map += r->t2v->map;
      mean.sumr += r->t2v->sumr;
      if (r->v2v) {
        ++nv;
        v_ndcg += r->v2v->ndcg.value_or(0.0);
        v_map += r->v2v->map;
      }
    }
    std::vector<std::string> row{name, std::to_string(n)};
    if (n == 0) {
      for (int i = 0; i < 6; ++i) row.push_back("-");
    } else {
      const double k = static_cast<double>(n);
      row.insert(row.end(), {format_fixed(mean.r1 / k, 1), format_fixed(mean.r5 / k, 1), format_fixed(mean.r10 / k, 1),
                             format_fixed(mean.medr / k, 1), format_fixed(mean.map / k, 3),
                             format_fixed(mean.sumr / k, 1)});
    }
    if (any_v2v) {
      row.push_back(nv ? format_fixed(v_ndcg / static_cast<double>(nv), 3) : "-");
      row.push_back(nv ? format_fixed(v_map / static_cast<double>(nv), 3) : "-");
    }
    row.push_back(note);
    body.push_back(std::move(row));
  }
  return format_table(header, body);
}

std::vector<json> AblationReport::records(const std::string& run_id) const {
  std::vector<json> out;
  for (const auto& r : rows) {
    json metrics = json::object();
    if (r.t2v) metrics["t2v"] = to_json(*r.t2v);
    if (r.v2v) metrics["v2v"] = to_json(*r.v2v);
    json extra = {{"cell", r.cell},         {"seed", r.seed},       {"skipped", r.skipped},
                  {"epochs", r.epochs},     {"best_epoch", r.best_epoch},
                  {"parameters", r.parameters}, {"seconds", r.seconds}};
    if (!r.note.empty()) extra["note"] = r.note;
    out.push_back(run_record(run_id, r.config_hash, "ablation", metrics, extra));
  }
  return out;
}

}  // namespace vidret
