#include "vidret/corpus.hpp"

#include "binio.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace vidret {
namespace {

constexpr char kFeatureMagic[4] = {'R', 'I', 'V', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;

using binio::put_f32;
using binio::put_u32;

std::vector<std::pair<std::string, std::size_t>> word_counts(const std::vector<Caption>& captions) {
  std::map<std::string, std::size_t> counts;
  for (const auto& c : captions) {
    for (const auto& t : c.tokens) ++counts[t];
  }
  return {counts.begin(), counts.end()};
}

}  // namespace

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : sentence) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u) || ch == '\'' || u >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> words, int min_count) : min_count_(min_count) {
  words_.reserve(words.size() + 1);
  words_.emplace_back(kSpecialToken);
  index_.emplace(kSpecialToken, 0);
  for (auto& w : words) {
    if (index_.count(w) != 0) throw Error("duplicate vocabulary word: " + w);
    index_.emplace(w, static_cast<int>(words_.size()));
    words_.push_back(std::move(w));
  }
}

int Vocabulary::index_of(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? special_token_index() : it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(index_of(t));
  return ids;
}

ConceptVocabulary::ConceptVocabulary(std::vector<std::string> concepts) : concepts_(std::move(concepts)) {
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    if (!index_.emplace(concepts_[i], static_cast<int>(i)).second) {
      throw Error("duplicate concept: " + concepts_[i]);
    }
  }
}

int ConceptVocabulary::index_of(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? -1 : it->second;
}

// ---------------------------------------------------------------------------

CorpusSplit::CorpusSplit(std::vector<FrameFeatureSequence> videos, std::vector<Caption> captions)
    : videos_(std::move(videos)), captions_(std::move(captions)) {
  for (std::size_t i = 0; i < videos_.size(); ++i) {
    if (!video_lookup_.emplace(videos_[i].video_id, i).second) {
      throw LoadError("duplicate video id: " + videos_[i].video_id);
    }
  }
  pairing_.reserve(captions_.size());
  std::set<std::string> sentence_ids;
  for (const auto& c : captions_) {
    auto it = video_lookup_.find(c.video_id);
    if (it == video_lookup_.end()) {
      throw LoadError("caption " + c.sentence_id + " refers to unknown video " + c.video_id);
    }
    if (!sentence_ids.insert(c.sentence_id).second) throw LoadError("duplicate sentence id: " + c.sentence_id);
    if (c.tokens.empty()) throw LoadError("caption " + c.sentence_id + " has no tokens");
    pairing_.push_back(it->second);
  }
}

std::size_t CorpusSplit::video_index(const std::string& video_id) const {
  auto it = video_lookup_.find(video_id);
  if (it == video_lookup_.end()) throw Error("unknown video id: " + video_id);
  return it->second;
}

std::vector<std::vector<std::size_t>> CorpusSplit::captions_by_video() const {
  std::vector<std::vector<std::size_t>> out(videos_.size());
  for (std::size_t i = 0; i < captions_.size(); ++i) out[pairing_[i]].push_back(i);
  return out;
}

const CorpusSplit& Corpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw Error("unknown split: " + name);
}

void check_disjoint(const Corpus& corpus) {
  std::set<std::string> seen;
  for (const CorpusSplit* s : {&corpus.train, &corpus.val, &corpus.test}) {
    for (const auto& v : s->videos()) {
      if (!seen.insert(v.video_id).second) throw LoadError("video " + v.video_id + " appears in two splits");
    }
  }
}

// ---------------------------------------------------------------------------

std::string serialize_frame_features(const std::vector<FrameFeatureSequence>& videos) {
  std::string out(kFeatureMagic, 4);
  put_u32(out, kFeatureVersion);
  put_u32(out, static_cast<std::uint32_t>(videos.size()));
  for (const auto& v : videos) {
    put_u32(out, static_cast<std::uint32_t>(v.video_id.size()));
    out += v.video_id;
    put_u32(out, static_cast<std::uint32_t>(v.frames.rows()));
    put_u32(out, static_cast<std::uint32_t>(v.frames.cols()));
    for (Eigen::Index r = 0; r < v.frames.rows(); ++r) {
      for (Eigen::Index c = 0; c < v.frames.cols(); ++c) put_f32(out, static_cast<float>(v.frames(r, c)));
    }
  }
  return out;
}

std::vector<FrameFeatureSequence> parse_frame_features(const std::string& bytes) {
  binio::Reader in(bytes, "feature file");
  if (!in.has(12) || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
    throw LoadError("malformed feature header: bad magic");
  }
  in.raw(4);
  const std::uint32_t version = in.u32();
  if (version != kFeatureVersion) throw LoadError("unsupported feature file version " + std::to_string(version));
  const std::uint32_t count = in.u32();

  std::vector<FrameFeatureSequence> videos;
  videos.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string where = "record " + std::to_string(i);
    if (!in.has(4)) throw LoadError("truncated feature file at " + where);
    const std::uint32_t id_len = in.u32();
    if (!in.has(id_len + 8)) throw LoadError("truncated feature file at " + where);
    FrameFeatureSequence seq;
    seq.video_id = in.raw(id_len);
    const std::uint32_t m = in.u32();
    const std::uint32_t d = in.u32();
    if (m == 0 || d == 0) throw LoadError("video " + seq.video_id + ": empty frame sequence");
    if (!videos.empty() && static_cast<Eigen::Index>(d) != videos.front().dim()) {
      throw LoadError("video " + seq.video_id + ": frame dimension " + std::to_string(d) + " differs from " +
                      std::to_string(videos.front().dim()));
    }
    if (!in.has(static_cast<std::size_t>(m) * d * 4)) {
      throw LoadError("video " + seq.video_id + ": truncated frame data");
    }
    seq.frames.resize(m, d);
    for (std::uint32_t r = 0; r < m; ++r) {
      for (std::uint32_t c = 0; c < d; ++c) {
        const float f = in.f32();
        if (!std::isfinite(f)) throw LoadError("video " + seq.video_id + ": non-finite feature value");
        seq.frames(r, c) = f;
      }
    }
    videos.push_back(std::move(seq));
  }
  if (!in.at_end()) throw LoadError("trailing bytes after last feature record");
  return videos;
}

std::vector<FrameFeatureSequence> load_frame_features(const std::filesystem::path& path) {
  return parse_frame_features(binio::read_file(path));
}

void write_frame_features(const std::filesystem::path& path, const std::vector<FrameFeatureSequence>& videos) {
  binio::write_file(path, serialize_frame_features(videos));
}

std::vector<Caption> load_captions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::vector<Caption> captions;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw LoadError(path.string() + ":" + std::to_string(lineno) + ": expected sentence_id<TAB>video_id<TAB>text");
    }
    Caption c;
    c.sentence_id = line.substr(0, t1);
    c.video_id = line.substr(t1 + 1, t2 - t1 - 1);
    c.tokens = tokenize(std::string_view(line).substr(t2 + 1));
    if (c.tokens.empty()) throw LoadError("caption " + c.sentence_id + " has no tokens");
    captions.push_back(std::move(c));
  }
  return captions;
}

void write_captions(const std::filesystem::path& path, const std::vector<Caption>& captions) {
  std::string out;
  for (const auto& c : captions) {
    out += c.sentence_id;
    out += '\t';
    out += c.video_id;
    out += '\t';
    for (std::size_t i = 0; i < c.tokens.size(); ++i) {
      if (i) out += ' ';
      out += c.tokens[i];
    }
    out += '\n';
  }
  binio::write_file(path, out);
}

void attach_external_embeddings(std::vector<Caption>& captions, const std::filesystem::path& path,
                                Eigen::Index dim) {
  std::unordered_map<std::string, RowVec> by_id;
  for (auto& rec : load_frame_features(path)) {
    if (rec.length() != 1) throw LoadError("sentence " + rec.video_id + ": expected exactly one embedding row");
    if (rec.dim() != dim) {
      throw LoadError("sentence " + rec.video_id + ": embedding dimension " + std::to_string(rec.dim()) +
                      " != configured " + std::to_string(dim));
    }
    by_id.emplace(rec.video_id, rec.frames.row(0));
  }
  for (auto& c : captions) {
    auto it = by_id.find(c.sentence_id);
    if (it == by_id.end()) throw LoadError("no external embedding for sentence " + c.sentence_id);
    c.external_embedding = it->second;
  }
}

Corpus load_corpus_dir(const std::filesystem::path& dir, std::optional<Eigen::Index> external_dim) {
  auto load_split = [&](const std::string& name) {
    auto captions = load_captions(dir / (name + ".cap"));
    if (external_dim) attach_external_embeddings(captions, dir / (name + ".ext"), *external_dim);
    return CorpusSplit(load_frame_features(dir / (name + ".feat")), std::move(captions));
  };
  Corpus corpus{load_split("train"), load_split("val"), load_split("test")};
  check_disjoint(corpus);
  return corpus;
}

void write_corpus_dir(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, split] :
       {std::pair{"train", &corpus.train}, std::pair{"val", &corpus.val}, std::pair{"test", &corpus.test}}) {
    write_frame_features(dir / (std::string(name) + ".feat"), split->videos());
    write_captions(dir / (std::string(name) + ".cap"), split->captions());
  }
}

// ---------------------------------------------------------------------------

Vocabulary build_vocabulary(const std::vector<Caption>& captions, int min_count) {
  if (captions.empty()) throw Error("build_vocabulary: no captions");
  std::vector<std::string> kept;
  for (const auto& [word, count] : word_counts(captions)) {
    if (static_cast<long>(count) >= min_count && word != Vocabulary::kSpecialToken) kept.push_back(word);
  }
  return Vocabulary(std::move(kept), min_count);
}

ConceptVocabulary build_concept_vocabulary(const std::vector<Caption>& captions, std::size_t k_concepts) {
  auto counts = word_counts(captions);
  if (k_concepts == 0) throw Error("build_concept_vocabulary: need at least one concept");
  if (k_concepts > counts.size()) {
    throw Error("build_concept_vocabulary: requested " + std::to_string(k_concepts) + " concepts but only " +
                std::to_string(counts.size()) + " distinct words");
  }
  // counts are already in lexicographic order, so a stable sort keeps ties lexicographic
  std::stable_sort(counts.begin(), counts.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> concepts;
  for (std::size_t i = 0; i < k_concepts; ++i) concepts.push_back(counts[i].first);
  return ConceptVocabulary(std::move(concepts));
}

RowVec concept_targets(const Caption& caption, const ConceptVocabulary& concepts) {
  RowVec t = RowVec::Zero(static_cast<Eigen::Index>(concepts.size()));
  for (const auto& tok : caption.tokens) {
    const int i = concepts.index_of(tok);
    if (i >= 0) t(i) = 1.0;
  }
  return t;
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string>& content_lexicon() {
  static const std::vector<std::string> words = {
      "dog",   "cat",    "car",   "ball",  "man",    "woman", "guitar", "kitchen", "beach",  "horse",
      "bike",  "street", "piano", "food",  "river",  "snow",  "tree",   "phone",   "game",   "dance",
      "train", "boat",   "child", "field", "crowd",  "stage", "bird",   "road",    "garden", "table",
      "fire",  "water",  "plane", "book",  "camera", "mountain", "city", "robot",  "song",   "ship"};
  return words;
}

std::string content_word(std::size_t i) {
  const auto& lex = content_lexicon();
  return i < lex.size() ? lex[i] : "word" + std::to_string(i);
}

std::string video_name(std::size_t i) {
  std::string digits = std::to_string(i);
  return "video" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.n_videos == 0 || spec.captions_per_video == 0 || spec.m_min == 0 || spec.m_max < spec.m_min ||
      spec.d_frame == 0 || spec.vocab_size == 0 || spec.words_per_video == 0) {
    throw Error("make_synthetic_corpus: all sizes must be positive");
  }
  const std::size_t per_video = std::min(spec.words_per_video, spec.vocab_size);
  const std::size_t n_val = spec.n_val ? spec.n_val : std::max<std::size_t>(2, spec.n_videos / 4);
  const std::size_t n_test = spec.n_test ? spec.n_test : std::max<std::size_t>(2, spec.n_videos / 4);
  const std::size_t total = spec.n_videos + n_val + n_test;

  Rng rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticCorpus out;
  std::vector<RowVec> protos;
  for (std::size_t w = 0; w < spec.vocab_size; ++w) {
    RowVec p(static_cast<Eigen::Index>(spec.d_frame));
    for (auto& x : p) x = gauss(rng);
    out.prototypes.emplace(content_word(w), p);
    protos.push_back(std::move(p));
  }

  // Distinct word sets per video while the combinations last.
  std::set<std::vector<std::size_t>> used;
  std::vector<std::size_t> pool(spec.vocab_size);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<std::vector<std::size_t>> topics;
  for (std::size_t v = 0; v < total; ++v) {
    std::vector<std::size_t> pick;
    for (int attempt = 0; attempt < 64; ++attempt) {
      std::shuffle(pool.begin(), pool.end(), rng);
      pick.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(per_video));
      auto key = pick;
      std::sort(key.begin(), key.end());
      if (used.insert(key).second) break;
    }
    topics.push_back(std::move(pick));
  }

  static const std::vector<std::string> connectors = {"is", "with", "and", "in"};
  static const std::vector<std::string> determiners = {"a", "the"};

  std::vector<FrameFeatureSequence> videos;
  std::vector<Caption> captions;
  std::uniform_int_distribution<std::size_t> m_dist(spec.m_min, spec.m_max);
  for (std::size_t v = 0; v < total; ++v) {
    const auto& words = topics[v];
    FrameFeatureSequence seq;
    seq.video_id = video_name(v);
    const std::size_t m = m_dist(rng);
    seq.frames.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(spec.d_frame));
    RowVec background = RowVec::Zero(static_cast<Eigen::Index>(spec.d_frame));
    for (auto w : words) background += protos[w];
    background /= static_cast<double>(words.size());
    // contiguous runs, one dominant word each
    for (std::size_t t = 0; t < m; ++t) {
      const std::size_t run = std::min(words.size() - 1, t * words.size() / m);
      RowVec f = protos[words[run]] + 0.3 * background;
      for (auto& x : f) x += spec.noise * gauss(rng);
      // stored as float32 on disk; keep the in-memory copy identical
      for (auto& x : f) x = static_cast<double>(static_cast<float>(x));
      seq.frames.row(static_cast<Eigen::Index>(t)) = f;
    }
    videos.push_back(std::move(seq));

    for (std::size_t c = 0; c < spec.captions_per_video; ++c) {
      auto order = words;
      std::shuffle(order.begin(), order.end(), rng);
      Caption cap;
      cap.sentence_id = video_name(v) + "#" + std::to_string(c);
      cap.video_id = video_name(v);
      cap.tokens.push_back(determiners[rng() % determiners.size()]);
      for (std::size_t i = 0; i < order.size(); ++i) {
        if (i > 0) {
          cap.tokens.push_back(connectors[rng() % connectors.size()]);
          cap.tokens.push_back(determiners[rng() % determiners.size()]);
        }
        cap.tokens.push_back(content_word(order[i]));
      }
      captions.push_back(std::move(cap));
    }
  }

  auto take = [&](std::size_t begin, std::size_t count) {
    std::vector<FrameFeatureSequence> vs(videos.begin() + static_cast<std::ptrdiff_t>(begin),
                                         videos.begin() + static_cast<std::ptrdiff_t>(begin + count));
    const std::size_t cb = begin * spec.captions_per_video;
    const std::size_t cc = count * spec.captions_per_video;
    std::vector<Caption> cs(captions.begin() + static_cast<std::ptrdiff_t>(cb),
                            captions.begin() + static_cast<std::ptrdiff_t>(cb + cc));
    return CorpusSplit(std::move(vs), std::move(cs));
  };
  out.corpus.train = take(0, spec.n_videos);
  out.corpus.val = take(spec.n_videos, n_val);
  out.corpus.test = take(spec.n_videos + n_val, n_test);
  return out;
}

// ---------------------------------------------------------------------------

BatchIterator::BatchIterator(const CorpusSplit& split, std::size_t batch_size, std::uint64_t seed)
    : n_captions_(split.captions().size()), batch_size_(batch_size), seed_(seed) {
  if (batch_size < 2) throw Error("batch_size must be >= 2 for hardest-negative mining");
}

std::vector<Batch> BatchIterator::epoch(std::size_t epoch_index) const {
  std::vector<std::size_t> order(n_captions_);
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(epoch_index)};
  Rng rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size_) {
    Batch b;
    b.captions.assign(order.begin() + static_cast<std::ptrdiff_t>(i),
                      order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size_)));
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace vidret

namespace vidret::binio {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace vidret::binio
