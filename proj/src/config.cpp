#include "vidret/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>

namespace vidret {
namespace {

using json = nlohmann::json;

PreviewKind parse_preview_kind(const std::string& s) {
  if (s == "bigru") return PreviewKind::BiGru;
  if (s == "fc") return PreviewKind::Fc;
  throw ConfigError("preview.kind must be bigru or fc, got " + s);
}

Branches parse_branches(const std::string& s) {
  if (s == "both") return Branches::Both;
  if (s == "preview") return Branches::Preview;
  if (s == "intensive") return Branches::Intensive;
  throw ConfigError("model.branches must be both, preview or intensive, got " + s);
}

Monitor parse_monitor(const std::string& s) {
  if (s == "sumr") return Monitor::SumR;
  if (s == "loss") return Monitor::Loss;
  throw ConfigError("train.monitor must be sumr or loss, got " + s);
}

void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten(*it, key, out);
    } else {
      out[key] = *it;
    }
  }
}

template <typename T>
T as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key " + key + " has the wrong type");
  }
}

using Setter = std::function<void(Config&, const json&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
#define VIDRET_INT(key, member) \
  t[key] = [](Config& c, const json& v, const std::string& k) { c.member = as<int>(v, k); }
#define VIDRET_DBL(key, member) \
  t[key] = [](Config& c, const json& v, const std::string& k) { c.member = as<double>(v, k); }
#define VIDRET_BOOL(key, member) \
  t[key] = [](Config& c, const json& v, const std::string& k) { c.member = as<bool>(v, k); }
#define VIDRET_SIZE(key, member) \
  t[key] = [](Config& c, const json& v, const std::string& k) { c.member = as<std::size_t>(v, k); }
    VIDRET_INT("model.d_frame", d_frame);
    t["model.branches"] = [](Config& c, const json& v, const std::string& k) {
      c.branches = parse_branches(as<std::string>(v, k));
    };
    VIDRET_INT("text.d_word", text.d_word);
    VIDRET_INT("text.h_text", text.h_text);
    VIDRET_INT("text.r_text", text.r_text);
    t["text.windows"] = [](Config& c, const json& v, const std::string& k) {
      c.text.windows = as<std::vector<int>>(v, k);
    };
    VIDRET_BOOL("text.external.enabled", text.external_enabled);
    VIDRET_INT("text.external.dim", text.external_dim);
    VIDRET_INT("text.min_count", text.min_count);
    t["preview.kind"] = [](Config& c, const json& v, const std::string& k) {
      c.preview.kind = parse_preview_kind(as<std::string>(v, k));
    };
    VIDRET_INT("preview.hidden", preview.hidden);
    VIDRET_INT("intensive.d_map", intensive.d_map);
    t["intensive.windows"] = [](Config& c, const json& v, const std::string& k) {
      c.intensive.windows = as<std::vector<int>>(v, k);
    };
    VIDRET_INT("intensive.filters", intensive.filters);
    VIDRET_INT("intensive.stride", intensive.stride);
    VIDRET_INT("intensive.d_k", intensive.d_k);
    VIDRET_INT("intensive.d_v", intensive.d_v);
    t["intensive.variant"] = [](Config& c, const json& v, const std::string& k) {
      c.intensive.variant = parse_attention_variant(as<std::string>(v, k));
    };
    VIDRET_BOOL("intensive.dependent", intensive.dependent);
    VIDRET_DBL("intensive.ln_eps", intensive.ln_eps);
    VIDRET_DBL("hybrid.alpha", hybrid.alpha);
    VIDRET_INT("hybrid.d_lat", hybrid.d_lat);
    VIDRET_INT("hybrid.k_concepts", hybrid.k_concepts);
    VIDRET_BOOL("hybrid.share_text_proj", hybrid.share_text_proj);
    VIDRET_DBL("loss.margin", loss.margin);
    VIDRET_DBL("loss.w_lat", loss.w_lat);
    VIDRET_DBL("loss.w_con_trip", loss.w_con_trip);
    VIDRET_DBL("loss.w_bce", loss.w_bce);
    VIDRET_BOOL("loss.concept_terms", loss.concept_terms);
    VIDRET_INT("train.batch_size", train.batch_size);
    VIDRET_DBL("train.lr", train.lr);
    VIDRET_INT("train.lr_patience", train.lr_patience);
    VIDRET_INT("train.early_stop_patience", train.early_stop_patience);
    VIDRET_INT("train.max_epochs", train.max_epochs);
    VIDRET_BOOL("train.early_stop", train.early_stop);
    t["train.monitor"] = [](Config& c, const json& v, const std::string& k) {
      c.train.monitor = parse_monitor(as<std::string>(v, k));
    };
    t["train.seed"] = [](Config& c, const json& v, const std::string& k) { c.train.seed = as<std::uint64_t>(v, k); };
    VIDRET_DBL("train.beta1", train.beta1);
    VIDRET_DBL("train.beta2", train.beta2);
    VIDRET_DBL("train.adam_eps", train.adam_eps);
    t["data.dir"] = [](Config& c, const json& v, const std::string& k) { c.data.dir = as<std::string>(v, k); };
    t["synth.seed"] = [](Config& c, const json& v, const std::string& k) {
      c.data.synth.seed = as<std::uint64_t>(v, k);
    };
    VIDRET_SIZE("synth.n_videos", data.synth.n_videos);
    VIDRET_SIZE("synth.n_val", data.synth.n_val);
    VIDRET_SIZE("synth.n_test", data.synth.n_test);
    VIDRET_SIZE("synth.captions_per_video", data.synth.captions_per_video);
    VIDRET_SIZE("synth.m_min", data.synth.m_min);
    VIDRET_SIZE("synth.m_max", data.synth.m_max);
    VIDRET_SIZE("synth.vocab_size", data.synth.vocab_size);
    VIDRET_SIZE("synth.words_per_video", data.synth.words_per_video);
    VIDRET_DBL("synth.noise", data.synth.noise);
#undef VIDRET_INT
#undef VIDRET_DBL
#undef VIDRET_BOOL
#undef VIDRET_SIZE
    return t;
  }();
  return table;
}

}  // namespace

std::string to_string(PreviewKind k) { return k == PreviewKind::BiGru ? "bigru" : "fc"; }

std::string to_string(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::Paa: return "paa";
    case AttentionVariant::Mean: return "mean";
    case AttentionVariant::Simple: return "simple";
    case AttentionVariant::ConcatSa: return "concat_sa";
    case AttentionVariant::SumSa: return "sum_sa";
  }
  return "paa";
}

std::string to_string(Branches b) {
  switch (b) {
    case Branches::Both: return "both";
    case Branches::Preview: return "preview";
    case Branches::Intensive: return "intensive";
  }
  return "both";
}

std::string to_string(Monitor m) { return m == Monitor::SumR ? "sumr" : "loss"; }

AttentionVariant parse_attention_variant(const std::string& s) {
  if (s == "paa") return AttentionVariant::Paa;
  if (s == "mean") return AttentionVariant::Mean;
  if (s == "simple") return AttentionVariant::Simple;
  if (s == "concat_sa") return AttentionVariant::ConcatSa;
  if (s == "sum_sa") return AttentionVariant::SumSa;
  throw ConfigError("unknown attention variant: " + s);
}

Config desk_profile() {
  Config c;
  c.profile = "desk";
  c.train.lr = 1e-3;
  c.data.synth.d_frame = static_cast<std::size_t>(c.d_frame);
  return c;
}

Config paper_profile() {
  Config c;
  c.profile = "paper";
  c.d_frame = 4096;
  c.text.d_word = 500;
  c.text.h_text = 512;
  c.text.r_text = 512;
  c.preview.hidden = 512;
  c.intensive.d_map = 2048;
  c.intensive.filters = 1024;
  c.intensive.stride = 2;
  c.intensive.d_k = 512;
  c.intensive.d_v = 1024;
  c.intensive.windows = {1, 3};
  c.hybrid.d_lat = 1536;
  c.hybrid.k_concepts = 512;
  c.data.synth.d_frame = 4096;
  return c;
}

void validate(const Config& c) {
  auto positive = [](long v, const char* key) {
    if (v <= 0) throw ConfigError(std::string(key) + " must be positive");
  };
  positive(c.d_frame, "model.d_frame");
  positive(c.text.d_word, "text.d_word");
  positive(c.text.h_text, "text.h_text");
  positive(c.text.r_text, "text.r_text");
  if (c.text.windows.empty()) throw ConfigError("text.windows must not be empty");
  for (int w : c.text.windows) positive(w, "text.windows");
  if (c.text.external_enabled) positive(c.text.external_dim, "text.external.dim");
  positive(c.text.min_count, "text.min_count");
  positive(c.preview.hidden, "preview.hidden");
  positive(c.intensive.d_map, "intensive.d_map");
  if (c.intensive.windows.empty()) throw ConfigError("intensive.windows must not be empty");
  for (int w : c.intensive.windows) positive(w, "intensive.windows");
  positive(c.intensive.filters, "intensive.filters");
  positive(c.intensive.stride, "intensive.stride");
  positive(c.intensive.d_k, "intensive.d_k");
  positive(c.intensive.d_v, "intensive.d_v");
  if (c.intensive.filters != c.intensive.d_v) {
    throw ConfigError("intensive.filters (r = " + std::to_string(c.intensive.filters) +
                      ") must equal intensive.d_v (" + std::to_string(c.intensive.d_v) +
                      ") for the max-pool residual");
  }
  if (c.branches == Branches::Intensive && c.intensive.dependent) {
    throw ConfigError("model.branches = intensive has no preview feature to attend with; set intensive.dependent = false");
  }
  if (c.hybrid.alpha < 0.0 || c.hybrid.alpha > 1.0) throw ConfigError("hybrid.alpha must lie in [0, 1]");
  positive(c.hybrid.d_lat, "hybrid.d_lat");
  positive(c.hybrid.k_concepts, "hybrid.k_concepts");
  if (c.loss.margin < 0.0) throw ConfigError("loss.margin must be >= 0");
  if (c.train.batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
  if (!(c.train.lr > 0.0)) throw ConfigError("train.lr must be positive");
  positive(c.train.lr_patience, "train.lr_patience");
  positive(c.train.max_epochs, "train.max_epochs");
  if (c.train.early_stop_patience <= c.train.lr_patience) {
    throw ConfigError("train.early_stop_patience must exceed train.lr_patience");
  }
}

void apply_overrides(Config& config, const nlohmann::json& overrides) {
  std::map<std::string, json> flat;
  flatten(overrides, "", flat);
  for (const auto& [key, value] : flat) {
    if (key == "profile") continue;
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key: " + key);
    it->second(config, value, key);
  }
}

Config config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  Config c = desk_profile();
  if (j.contains("profile")) {
    const std::string p = as<std::string>(j["profile"], "profile");
    if (p == "paper") {
      c = paper_profile();
    } else if (p != "desk") {
      throw ConfigError("profile must be desk or paper, got " + p);
    }
  }
  apply_overrides(c, j);
  validate(c);
  return c;
}

nlohmann::json config_to_json(const Config& c) {
  json j;
  j["profile"] = c.profile;
  j["model"] = {{"d_frame", c.d_frame}, {"branches", to_string(c.branches)}};
  j["text"] = {{"d_word", c.text.d_word},
               {"h_text", c.text.h_text},
               {"r_text", c.text.r_text},
               {"windows", c.text.windows},
               {"min_count", c.text.min_count},
               {"external", {{"enabled", c.text.external_enabled}, {"dim", c.text.external_dim}}}};
  j["preview"] = {{"kind", to_string(c.preview.kind)}, {"hidden", c.preview.hidden}};
  j["intensive"] = {{"d_map", c.intensive.d_map},   {"windows", c.intensive.windows},
                    {"filters", c.intensive.filters}, {"stride", c.intensive.stride},
                    {"d_k", c.intensive.d_k},         {"d_v", c.intensive.d_v},
                    {"variant", to_string(c.intensive.variant)}, {"dependent", c.intensive.dependent},
                    {"ln_eps", c.intensive.ln_eps}};
  j["hybrid"] = {{"alpha", c.hybrid.alpha},
                 {"d_lat", c.hybrid.d_lat},
                 {"k_concepts", c.hybrid.k_concepts},
                 {"share_text_proj", c.hybrid.share_text_proj}};
  j["loss"] = {{"margin", c.loss.margin},
               {"w_lat", c.loss.w_lat},
               {"w_con_trip", c.loss.w_con_trip},
               {"w_bce", c.loss.w_bce},
               {"concept_terms", c.loss.concept_terms}};
  j["train"] = {{"batch_size", c.train.batch_size},
                {"lr", c.train.lr},
                {"lr_patience", c.train.lr_patience},
                {"early_stop_patience", c.train.early_stop_patience},
                {"max_epochs", c.train.max_epochs},
                {"early_stop", c.train.early_stop},
                {"monitor", to_string(c.train.monitor)},
                {"seed", c.train.seed},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"adam_eps", c.train.adam_eps}};
  j["data"] = {{"dir", c.data.dir}};
  const auto& s = c.data.synth;
  j["synth"] = {{"seed", s.seed},         {"n_videos", s.n_videos},
                {"n_val", s.n_val},       {"n_test", s.n_test},
                {"captions_per_video", s.captions_per_video},
                {"m_min", s.m_min},       {"m_max", s.m_max},
                {"vocab_size", s.vocab_size}, {"words_per_video", s.words_per_video},
                {"noise", s.noise}};
  return j;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const Config& config) {
  const std::string dump = config_to_json(config).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Corpus corpus_from_config(const Config& config) {
  if (!config.data.dir.empty()) {
    std::optional<Eigen::Index> ext;
    if (config.text.external_enabled) ext = config.text.external_dim;
    return load_corpus_dir(config.data.dir, ext);
  }
  SyntheticSpec spec = config.data.synth;
  spec.d_frame = static_cast<std::size_t>(config.d_frame);
  return make_synthetic_corpus(spec).corpus;
}

}  // namespace vidret
