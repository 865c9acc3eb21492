#include <doctest.h>

#include "support.hpp"

#include <fstream>

using namespace vidret;
using nlohmann::json;

TEST_SUITE("config") {
  TEST_CASE("desk profile matches the small acceptance dimensions") {
    const Config c = desk_profile();
    CHECK(c.d_frame == 16);
    CHECK(c.preview.hidden == 8);
    CHECK(c.intensive.d_map == 32);
    CHECK(c.intensive.filters == 16);
    CHECK(c.intensive.d_v == 16);
    CHECK(c.intensive.d_k == 8);
    CHECK(c.intensive.windows == std::vector<int>{1, 3});
    CHECK(c.intensive.stride == 2);
    CHECK(c.hybrid.d_lat == 16);
    CHECK(c.hybrid.k_concepts == 8);
    CHECK(c.hybrid.alpha == 0.6);
    CHECK(c.loss.margin == 0.2);
    CHECK_NOTHROW(validate(c));
  }

  TEST_CASE("paper profile dimensions") {
    const Config c = paper_profile();
    CHECK(c.preview.output_dim() == 1024);
    CHECK(c.intensive.d_map == 2048);
    CHECK(c.intensive.filters == 1024);
    CHECK(c.intensive.d_k == 512);
    CHECK(c.intensive.d_v == 1024);
    CHECK(c.intensive.output_dim() == 2048);
    CHECK(c.train.batch_size == 128);
    CHECK(c.train.lr == 1e-4);
    CHECK(c.train.lr_patience == 3);
    CHECK(c.train.early_stop_patience == 10);
    CHECK(c.train.max_epochs == 50);
    CHECK_NOTHROW(validate(c));
  }

  TEST_CASE("JSON round-trip preserves the config and its hash") {
    Config c = desk_profile();
    c.intensive.windows = {1, 2, 4};
    c.intensive.variant = AttentionVariant::SumSa;
    c.preview.kind = PreviewKind::Fc;
    c.train.monitor = Monitor::Loss;
    c.train.seed = 42;
    c.hybrid.alpha = 0.25;
    c.data.synth.captions_per_video = 3;
    const Config back = config_from_json(config_to_json(c));
    CHECK(config_to_json(back) == config_to_json(c));
    CHECK(config_hash(back) == config_hash(c));
    CHECK(config_hash(c) != config_hash(desk_profile()));
    CHECK(config_hash(c).size() == 16);
  }

  TEST_CASE("nested and dotted keys both apply") {
    const Config a = config_from_json(json{{"intensive", {{"d_v", 32}, {"filters", 32}}}});
    const Config b = config_from_json(json{{"intensive.d_v", 32}, {"intensive.filters", 32}});
    CHECK(a.intensive.d_v == 32);
    CHECK(config_hash(a) == config_hash(b));
    const Config p = config_from_json(json{{"profile", "paper"}, {"train.seed", 5}});
    CHECK(p.intensive.d_v == 1024);
    CHECK(p.train.seed == 5);
  }

  TEST_CASE("invalid configs are rejected") {
    CHECK_THROWS_AS(config_from_json(json{{"intensive.filters", 12}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"no.such.key", 1}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"train.lr", "fast"}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"profile", "huge"}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"intensive.variant", "multihead"}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"model.branches", "intensive"}}), ConfigError);
    CHECK_NOTHROW(config_from_json(json{{"model.branches", "intensive"}, {"intensive.dependent", false}}));
    CHECK_THROWS_AS(config_from_json(json{{"train.early_stop_patience", 3}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"train.batch_size", 1}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"hybrid.alpha", 1.5}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"intensive.windows", json::array()}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::array()), ConfigError);
  }

  TEST_CASE("load_config reads files and reports bad JSON") {
    vidret::testing::TempDir dir("cfg");
    {
      std::ofstream(dir / "ok.json") << R"({"train": {"seed": 9}})";
      std::ofstream(dir / "bad.json") << "{not json";
    }
    CHECK(load_config(dir / "ok.json").train.seed == 9);
    CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
    CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
  }

  TEST_CASE("synthetic corpus follows the model frame dimension") {
    Config c = vidret::testing::tiny_config();
    c.d_frame = 5;
    const Corpus corpus = corpus_from_config(c);
    CHECK(corpus.train.videos()[0].dim() == 5);
    CHECK(corpus.val.videos().size() == 4);
  }

  TEST_CASE("enum names round-trip") {
    for (auto v : {AttentionVariant::Paa, AttentionVariant::Mean, AttentionVariant::Simple,
                   AttentionVariant::ConcatSa, AttentionVariant::SumSa}) {
      CHECK(parse_attention_variant(to_string(v)) == v);
    }
    CHECK(to_string(Branches::Both) == "both");
    CHECK(to_string(Monitor::SumR) == "sumr");
  }
}
