#pragma once

#include "vidret/corpus.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace vidret {

enum class PreviewKind { BiGru, Fc };
enum class AttentionVariant { Paa, Mean, Simple, ConcatSa, SumSa };
enum class Branches { Both, Preview, Intensive };
enum class Monitor { SumR, Loss };

struct TextConfig {
  int d_word = 16;
  int h_text = 8;
  int r_text = 8;
  std::vector<int> windows{2, 3, 4};
  bool external_enabled = false;
  int external_dim = 0;
  int min_count = 5;
};

struct PreviewConfig {
  PreviewKind kind = PreviewKind::BiGru;
  int hidden = 8;  // per direction; output dim is 2 * hidden

  int output_dim() const { return 2 * hidden; }
};

struct IntensiveConfig {
  int d_map = 32;
  std::vector<int> windows{1, 3};
  int filters = 16;  // r
  int stride = 2;
  int d_k = 8;
  int d_v = 16;
  AttentionVariant variant = AttentionVariant::Paa;
  /// false: the attention query is a learned constant instead of p
  bool dependent = true;
  double ln_eps = 1e-5;

  int d_ff() const { return 2 * d_v; }
  int output_dim() const { return static_cast<int>(windows.size()) * d_v; }
};

struct HybridConfig {
  double alpha = 0.6;
  int d_lat = 16;
  int k_concepts = 8;
  bool share_text_proj = false;
};

struct LossConfig {
  double margin = 0.2;
  double w_lat = 1.0;
  double w_con_trip = 1.0;
  double w_bce = 1.0;
  bool concept_terms = true;
};

struct TrainConfig {
  int batch_size = 128;
  double lr = 1e-4;
  int lr_patience = 3;
  int early_stop_patience = 10;
  int max_epochs = 50;
  bool early_stop = true;
  Monitor monitor = Monitor::SumR;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct DataConfig {
  std::string dir;  // empty: generate a synthetic corpus from `synth`
  SyntheticSpec synth;
};

struct Config {
  std::string profile = "desk";
  int d_frame = 16;
  Branches branches = Branches::Both;
  TextConfig text;
  PreviewConfig preview;
  IntensiveConfig intensive;
  HybridConfig hybrid;
  LossConfig loss;
  TrainConfig train;
  DataConfig data;

  bool uses_preview_space() const { return branches != Branches::Intensive; }
  bool uses_intensive_space() const { return branches != Branches::Preview; }
};

Config desk_profile();
Config paper_profile();

/// Throws ConfigError on inconsistent settings (e.g. filters != d_v).
void validate(const Config& config);

/// Accepts nested objects and/or dotted keys ("intensive.d_v": 16). A
/// top-level "profile" selects the starting point; other keys override it.
Config config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const Config& config);
Config load_config(const std::filesystem::path& path);
/// Applies dotted-key overrides on top of an existing config.
void apply_overrides(Config& config, const nlohmann::json& overrides);

/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const Config& config);

std::string to_string(PreviewKind k);
std::string to_string(AttentionVariant v);
std::string to_string(Branches b);
std::string to_string(Monitor m);
AttentionVariant parse_attention_variant(const std::string& s);

/// Loads data.dir when set, otherwise synthesizes from data.synth.
Corpus corpus_from_config(const Config& config);

}  // namespace vidret
