#include <doctest.h>

#include "support.hpp"

#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

using namespace vidret;
using vidret::testing::make_caption;
using vidret::testing::random_mat;
using vidret::testing::TempDir;

namespace {

std::vector<FrameFeatureSequence> random_videos(Rng& rng, std::size_t count) {
  std::uniform_int_distribution<int> len(1, 7), dim(1, 5);
  std::vector<FrameFeatureSequence> out;
  const int d = dim(rng);
  for (std::size_t i = 0; i < count; ++i) {
    FrameFeatureSequence v;
    v.video_id = "vid" + std::to_string(i) + (i % 2 ? "_é" : "");
    v.frames = random_mat(len(rng), d, rng, -100.0, 100.0).cast<float>().cast<double>();
    out.push_back(std::move(v));
  }
  return out;
}

// Hand-assembled RIVF bytes, independent of the library writer.
std::string rivf_bytes(const std::vector<std::tuple<std::string, std::uint32_t, std::uint32_t, std::vector<float>>>& vids,
                       const char* magic = "RIVF", std::uint32_t version = 1) {
  std::string s(magic, 4);
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  u32(version);
  u32(static_cast<std::uint32_t>(vids.size()));
  for (const auto& [id, m, d, data] : vids) {
    u32(static_cast<std::uint32_t>(id.size()));
    s += id;
    u32(m);
    u32(d);
    for (float f : data) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      u32(bits);
    }
  }
  return s;
}

std::vector<Caption> captions_of(const std::vector<std::string>& texts) {
  std::vector<Caption> out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out.push_back(make_caption("s" + std::to_string(i), "v" + std::to_string(i), texts[i]));
  }
  return out;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("feature file with zero frames parses to zero vectors") {
    const auto vids = parse_frame_features(rivf_bytes({{"clip", 4, 3, std::vector<float>(12, 0.0f)}}));
    REQUIRE(vids.size() == 1);
    CHECK(vids[0].video_id == "clip");
    CHECK(vids[0].length() == 4);
    CHECK(vids[0].dim() == 3);
    CHECK(vids[0].frames.isZero(0.0));
  }

  TEST_CASE("declared frame counts are preserved in order") {
    const auto vids = parse_frame_features(
        rivf_bytes({{"a", 2, 2, std::vector<float>(4, 1.5f)}, {"b", 5, 2, std::vector<float>(10, -2.0f)}}));
    REQUIRE(vids.size() == 2);
    CHECK(vids[0].length() == 2);
    CHECK(vids[1].length() == 5);
    CHECK(vids[1].frames(4, 1) == -2.0);
  }

  TEST_CASE("write then read round-trips byte-identically on random files") {
    Rng rng(17);
    TempDir dir("rivf");
    for (int trial = 0; trial < 20; ++trial) {
      const auto vids = random_videos(rng, 1 + trial % 5);
      const std::string bytes = serialize_frame_features(vids);
      const auto path = dir / ("f" + std::to_string(trial) + ".feat");
      {
        std::ofstream out(path, std::ios::binary);
        out << bytes;
      }
      const auto loaded = load_frame_features(path);
      REQUIRE(loaded.size() == vids.size());
      for (std::size_t i = 0; i < vids.size(); ++i) {
        CHECK(loaded[i].video_id == vids[i].video_id);
        CHECK(loaded[i].frames == vids[i].frames);
      }
      const auto again = dir / "again.feat";
      write_frame_features(again, loaded);
      std::ifstream in(again, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      CHECK(ss.str() == bytes);
    }
  }

  TEST_CASE("writer output matches the documented layout") {
    FrameFeatureSequence v{"xy", Mat::Constant(2, 3, 0.25)};
    CHECK(serialize_frame_features({v}) == rivf_bytes({{"xy", 2, 3, std::vector<float>(6, 0.25f)}}));
  }

  TEST_CASE("malformed feature files are rejected with the video id") {
    CHECK_THROWS_AS(parse_frame_features(rivf_bytes({}, "RIVX")), LoadError);
    CHECK_THROWS_AS(parse_frame_features(rivf_bytes({}, "RIVF", 99)), LoadError);
    std::string truncated = rivf_bytes({{"cut", 2, 2, {1, 2, 3, 4}}});
    truncated.resize(truncated.size() - 3);
    CHECK_THROWS_AS(parse_frame_features(truncated), LoadError);
    CHECK_THROWS_AS(parse_frame_features(rivf_bytes({{"empty", 0, 2, {}}})), LoadError);

    const float nan = std::numeric_limits<float>::quiet_NaN();
    try {
      parse_frame_features(rivf_bytes({{"ok", 1, 1, {1}}, {"bad_clip", 1, 2, {1, nan}}}));
      FAIL("non-finite value accepted");
    } catch (const LoadError& e) {
      CHECK(std::string(e.what()).find("bad_clip") != std::string::npos);
    }
    try {
      parse_frame_features(rivf_bytes({{"one", 1, 2, {1, 2}}, {"two", 1, 3, {1, 2, 3}}}));
      FAIL("dimension mismatch accepted");
    } catch (const LoadError& e) {
      CHECK(std::string(e.what()).find("two") != std::string::npos);
    }
    CHECK_THROWS_AS(load_frame_features("/nonexistent/file.feat"), LoadError);
  }

  TEST_CASE("caption TSV round-trip and tokenization") {
    TempDir dir("cap");
    const auto path = dir / "c.cap";
    {
      std::ofstream out(path);
      out << "s1\tv1\tA Man IS cooking, in the kitchen!\n";
      out << "s2\tv2\tdon't stop\n";
    }
    const auto caps = load_captions(path);
    REQUIRE(caps.size() == 2);
    CHECK(caps[0].sentence_id == "s1");
    CHECK(caps[0].video_id == "v1");
    CHECK(caps[0].tokens == std::vector<std::string>{"a", "man", "is", "cooking", "in", "the", "kitchen"});
    CHECK(caps[1].tokens == std::vector<std::string>{"don't", "stop"});

    write_captions(dir / "d.cap", caps);
    const auto again = load_captions(dir / "d.cap");
    REQUIRE(again.size() == 2);
    CHECK(again[0].tokens == caps[0].tokens);

    {
      std::ofstream out(dir / "bad.cap");
      out << "only-two\tfields\n";
    }
    CHECK_THROWS_AS(load_captions(dir / "bad.cap"), LoadError);
    {
      std::ofstream out(dir / "blank.cap");
      out << "s\tv\t ,,, \n";
    }
    CHECK_THROWS_AS(load_captions(dir / "blank.cap"), LoadError);
  }

  TEST_CASE("vocabulary keeps words at or above min_count") {
    const auto caps = captions_of({"a a a a a", "a b"});
    const Vocabulary v = build_vocabulary(caps, 5);
    CHECK(v.size() == 2);  // <unk>, a
    CHECK(v.contains("a"));
    CHECK_FALSE(v.contains("b"));
    CHECK(v.index_of("b") == v.special_token_index());
    CHECK(v.index_of("a") != v.special_token_index());
    CHECK(v.min_count() == 5);

    const Vocabulary all = build_vocabulary(caps, 1);
    CHECK(all.contains("a"));
    CHECK(all.contains("b"));
    CHECK(all.size() == 3);

    const Vocabulary again = build_vocabulary(caps, 1);
    CHECK(again.words() == all.words());
    for (std::size_t i = 0; i < all.words().size(); ++i) {
      CHECK(all.index_of(all.words()[i]) == static_cast<int>(i));
    }
    CHECK_THROWS_AS(build_vocabulary({}, 1), Error);
  }

  TEST_CASE("concept vocabulary ranks by frequency with lexicographic ties") {
    std::vector<std::string> texts;
    for (int i = 0; i < 5; ++i) texts.push_back("cat");
    for (int i = 0; i < 3; ++i) texts.push_back("dog");
    for (int i = 0; i < 9; ++i) texts.push_back("a");
    const auto caps = captions_of(texts);
    const ConceptVocabulary cv = build_concept_vocabulary(caps, 2);
    CHECK(std::set<std::string>(cv.concepts().begin(), cv.concepts().end()) == std::set<std::string>{"a", "cat"});
    CHECK(build_concept_vocabulary(caps, 3).size() == 3);
    CHECK_THROWS_AS(build_concept_vocabulary(caps, 4), Error);

    const ConceptVocabulary tie = build_concept_vocabulary(captions_of({"y x", "x y"}), 1);
    CHECK(tie.concepts() == std::vector<std::string>{"x"});
  }

  TEST_CASE("concept targets mark membership only") {
    const ConceptVocabulary cv({"a", "cat", "dog"});
    const RowVec t = concept_targets(make_caption("s", "v", "a cat"), cv);
    CHECK(t.size() == 3);
    CHECK(t(0) == 1.0);
    CHECK(t(1) == 1.0);
    CHECK(t(2) == 0.0);
    CHECK(concept_targets(make_caption("s", "v", "zebra"), cv).isZero(0.0));
    CHECK(concept_targets(make_caption("s", "v", "cat cat a a cat"), cv) == t);
    CHECK(concept_targets(make_caption("s", "v", "cat a"), cv) == t);
  }

  TEST_CASE("synthetic corpora are deterministic and disjoint") {
    SyntheticSpec spec;
    spec.seed = 3;
    const Corpus a = make_synthetic_corpus(spec).corpus;
    const Corpus b = make_synthetic_corpus(spec).corpus;
    CHECK(serialize_frame_features(a.train.videos()) == serialize_frame_features(b.train.videos()));
    CHECK(serialize_frame_features(a.test.videos()) == serialize_frame_features(b.test.videos()));
    REQUIRE(a.train.captions().size() == b.train.captions().size());
    for (std::size_t i = 0; i < a.train.captions().size(); ++i) {
      CHECK(a.train.captions()[i].tokens == b.train.captions()[i].tokens);
    }
    CHECK(a.train.videos().size() == 32);
    CHECK(a.train.captions().size() == 32);
    std::set<std::size_t> paired;
    for (std::size_t c = 0; c < a.train.captions().size(); ++c) paired.insert(a.train.video_of_caption(c));
    CHECK(paired.size() == 32);
    CHECK_NOTHROW(check_disjoint(a));

    Corpus clash = a;
    clash.val = a.train;
    CHECK_THROWS_AS(check_disjoint(clash), Error);

    spec.seed = 4;
    const Corpus c = make_synthetic_corpus(spec).corpus;
    CHECK(serialize_frame_features(a.train.videos()) != serialize_frame_features(c.train.videos()));
    spec.n_videos = 0;
    CHECK_THROWS(make_synthetic_corpus(spec));
  }

  TEST_CASE("synthetic frames agree more with their own caption's topics") {
    // Agreement = mean cosine between a video's mean frame and the mean
    // prototype of a caption's content words.
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SyntheticSpec spec;
      spec.seed = seed;
      const SyntheticCorpus sc = make_synthetic_corpus(spec);
      const CorpusSplit& split = sc.corpus.train;
      auto topic = [&](const Caption& c) {
        RowVec sum = RowVec::Zero(static_cast<Eigen::Index>(spec.d_frame));
        int n = 0;
        for (const auto& w : c.tokens) {
          auto it = sc.prototypes.find(w);
          if (it == sc.prototypes.end()) continue;
          sum += it->second;
          ++n;
        }
        return RowVec(sum / std::max(1, n));
      };
      double within = 0, cross = 0;
      std::size_t nw = 0, nc = 0;
      for (std::size_t v = 0; v < split.videos().size(); ++v) {
        const RowVec mean = split.videos()[v].frames.colwise().mean();
        for (std::size_t c = 0; c < split.captions().size(); ++c) {
          const RowVec t = topic(split.captions()[c]);
          const double cos = mean.dot(t) / (mean.norm() * t.norm());
          if (split.video_of_caption(c) == v) {
            within += cos;
            ++nw;
          } else {
            cross += cos;
            ++nc;
          }
        }
      }
      wins += within / static_cast<double>(nw) > cross / static_cast<double>(nc);
    }
    CHECK(wins == 10);
  }

  TEST_CASE("batch iterator arithmetic, determinism and coverage") {
    SyntheticSpec spec;
    spec.n_videos = 10;
    const CorpusSplit split = make_synthetic_corpus(spec).corpus.train;
    const BatchIterator it(split, 4, 7);
    const auto epoch0 = it.epoch(0);
    REQUIRE(epoch0.size() == 3);
    CHECK(epoch0[0].size() == 4);
    CHECK(epoch0[1].size() == 4);
    CHECK(epoch0[2].size() == 2);

    const auto repeat = BatchIterator(split, 4, 7).epoch(0);
    for (std::size_t b = 0; b < epoch0.size(); ++b) CHECK(epoch0[b].captions == repeat[b].captions);
    CHECK(it.epoch(1)[0].captions != epoch0[0].captions);

    for (std::size_t e = 0; e < 5; ++e) {
      std::multiset<std::size_t> seen;
      for (const Batch& b : it.epoch(e)) seen.insert(b.captions.begin(), b.captions.end());
      std::multiset<std::size_t> expected;
      for (std::size_t c = 0; c < split.captions().size(); ++c) expected.insert(c);
      CHECK(seen == expected);
    }
    CHECK_THROWS_AS(BatchIterator(split, 1, 0), Error);
  }

  TEST_CASE("corpus directories round-trip with external embeddings") {
    SyntheticSpec spec;
    spec.n_videos = 6;
    spec.captions_per_video = 2;
    Corpus c = make_synthetic_corpus(spec).corpus;
    TempDir dir("corpus");
    write_corpus_dir(dir.path(), c);
    const Corpus back = load_corpus_dir(dir.path());
    CHECK(back.train.videos().size() == c.train.videos().size());
    CHECK(back.test.captions().size() == c.test.captions().size());
    CHECK(back.train.videos()[2].frames == c.train.videos()[2].frames);
    CHECK(back.val.captions()[1].tokens == c.val.captions()[1].tokens);

    std::vector<FrameFeatureSequence> ext;
    for (const auto& cap : c.train.captions()) ext.push_back({cap.sentence_id, Mat::Constant(1, 3, 0.5)});
    write_frame_features(dir / "train.ext", ext);
    std::vector<Caption> caps = c.train.captions();
    attach_external_embeddings(caps, dir / "train.ext", 3);
    REQUIRE(caps[0].external_embedding.has_value());
    CHECK(caps[0].external_embedding->size() == 3);
    CHECK_THROWS_AS(attach_external_embeddings(caps, dir / "train.ext", 4), LoadError);
    ext.pop_back();
    write_frame_features(dir / "short.ext", ext);
    std::vector<Caption> caps2 = c.train.captions();
    CHECK_THROWS_AS(attach_external_embeddings(caps2, dir / "short.ext", 3), LoadError);
  }

  TEST_CASE("captions must resolve to a video of their split") {
    FrameFeatureSequence v{"v1", Mat::Ones(2, 2)};
    CHECK_THROWS_AS(CorpusSplit({v}, {make_caption("s", "v2", "x")}), Error);
  }
}
