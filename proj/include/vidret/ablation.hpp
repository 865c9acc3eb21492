#pragma once

// Grid runner: every cell is a set of config overrides trained with the
// shared base config and evaluated on one split.
//
// Grid file:
//   {
//     "base":  { ...config... },
//     "axes":  { "model.branches": ["both", "preview"], "intensive.windows": [[1], [1, 3]] },
//     "cells": [ { "name": "independent", "set": { "intensive.dependent": false } } ],
//     "seeds": [0, 1, 2],
//     "split": "test",
//     "v2v":   { "branch": "both", "space": "raw", "threshold": 0.2 }
//   }
//
// Axes expand to their cartesian product; explicit cells are appended. Axis
// keys are config keys; "branches", "dependency", "windows", "attention" and
// "lateral" are accepted as shorthands.

#include "vidret/evaluator.hpp"
#include "vidret/trainer.hpp"

#include <nlohmann/json.hpp>

namespace vidret {

struct AblationCell {
  std::string name;
  nlohmann::json overrides = nlohmann::json::object();  // dotted keys
};

struct AblationGrid {
  Config base;
  std::vector<AblationCell> cells;
  std::vector<std::uint64_t> seeds{0};
  std::string split = "test";
  bool v2v = false;
  BranchSel v2v_branch = BranchSel::Both;
  FeatureSpace v2v_space = FeatureSpace::Raw;
  double v2v_threshold = 0.2;
};

AblationGrid ablation_grid_from_json(const nlohmann::json& j);
AblationGrid load_ablation_grid(const std::filesystem::path& path);

struct AblationRow {
  std::string cell;
  std::uint64_t seed = 0;
  std::string config_hash;
  bool skipped = false;
  std::string note;
  std::optional<RankMetrics> t2v;
  std::optional<RankMetrics> v2v;
  int epochs = 0;
  int best_epoch = 0;
  std::size_t parameters = 0;
  double seconds = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;

  /// Per-cell means over seeds (skipped cells keep their note).
  std::string text_table() const;
  std::vector<nlohmann::json> records(const std::string& run_id) const;
};

using AblationProgress = std::function<void(const AblationRow&)>;

/// Trains and evaluates every (cell, seed). With synthetic data the corpus
/// seed follows the run seed.
AblationReport run_ablation(const AblationGrid& grid, const AblationProgress& progress = {});

/// Trains one config on its corpus and evaluates t2v on `split`.
AblationRow run_cell(const Config& config, const std::string& split, const std::string& name = "run");

}  // namespace vidret
