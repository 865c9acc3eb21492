#pragma once

#include "vidret/params.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace vidret {

class LoadError : public Error {
 public:
  using Error::Error;
};

/// A video as m frame feature vectors, one per row (m x d_frame).
struct FrameFeatureSequence {
  std::string video_id;
  Mat frames;

  Eigen::Index length() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
};

struct Caption {
  std::string sentence_id;
  std::string video_id;
  std::vector<std::string> tokens;
  std::optional<RowVec> external_embedding;
};

/// Lowercases and splits on anything that is not a letter, digit or apostrophe.
std::vector<std::string> tokenize(std::string_view sentence);

class Vocabulary {
 public:
  static constexpr const char* kSpecialToken = "<unk>";

  Vocabulary() = default;
  /// Words must already be filtered; the special token is placed at index 0
  /// and the words follow in the given order.
  Vocabulary(std::vector<std::string> words, int min_count);

  int index_of(const std::string& word) const;
  int special_token_index() const { return 0; }
  int min_count() const { return min_count_; }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  bool contains(const std::string& word) const { return index_.count(word) != 0; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
  int min_count_ = 1;
};

class ConceptVocabulary {
 public:
  ConceptVocabulary() = default;
  explicit ConceptVocabulary(std::vector<std::string> concepts);

  std::size_t size() const { return concepts_.size(); }
  const std::vector<std::string>& concepts() const { return concepts_; }
  /// -1 when the word is not a concept.
  int index_of(const std::string& word) const;

 private:
  std::vector<std::string> concepts_;
  std::unordered_map<std::string, int> index_;
};

/// Videos plus captions; every caption points at one video of the split.
class CorpusSplit {
 public:
  CorpusSplit() = default;
  CorpusSplit(std::vector<FrameFeatureSequence> videos, std::vector<Caption> captions);

  const std::vector<FrameFeatureSequence>& videos() const { return videos_; }
  const std::vector<Caption>& captions() const { return captions_; }

  std::size_t video_of_caption(std::size_t caption_index) const { return pairing_[caption_index]; }
  std::size_t video_index(const std::string& video_id) const;
  /// Caption indices per video, in caption order.
  std::vector<std::vector<std::size_t>> captions_by_video() const;
  bool empty() const { return captions_.empty(); }

 private:
  std::vector<FrameFeatureSequence> videos_;
  std::vector<Caption> captions_;
  std::vector<std::size_t> pairing_;
  std::unordered_map<std::string, std::size_t> video_lookup_;
};

struct Corpus {
  CorpusSplit train;
  CorpusSplit val;
  CorpusSplit test;

  const CorpusSplit& split(const std::string& name) const;
};

/// Throws if any video id is shared between two splits.
void check_disjoint(const Corpus& corpus);

// ---- feature / caption files ----------------------------------------------

std::vector<FrameFeatureSequence> load_frame_features(const std::filesystem::path& path);
void write_frame_features(const std::filesystem::path& path, const std::vector<FrameFeatureSequence>& videos);
std::vector<FrameFeatureSequence> parse_frame_features(const std::string& bytes);
std::string serialize_frame_features(const std::vector<FrameFeatureSequence>& videos);

std::vector<Caption> load_captions(const std::filesystem::path& path);
void write_captions(const std::filesystem::path& path, const std::vector<Caption>& captions);

/// Attaches sentence embeddings stored in the frame-feature layout (one row
/// per sentence id). Every caption must have an entry of dimension `dim`.
void attach_external_embeddings(std::vector<Caption>& captions, const std::filesystem::path& path,
                                Eigen::Index dim);

/// Loads `<dir>/{train,val,test}.feat` and `.cap`, plus `.ext` when present.
Corpus load_corpus_dir(const std::filesystem::path& dir, std::optional<Eigen::Index> external_dim = {});
void write_corpus_dir(const std::filesystem::path& dir, const Corpus& corpus);

// ---- vocabularies ---------------------------------------------------------

Vocabulary build_vocabulary(const std::vector<Caption>& captions, int min_count = 5);
ConceptVocabulary build_concept_vocabulary(const std::vector<Caption>& captions, std::size_t k_concepts);
/// 1 x K row with a 1 for every concept among the caption's tokens.
RowVec concept_targets(const Caption& caption, const ConceptVocabulary& concepts);

// ---- synthetic data -------------------------------------------------------

struct SyntheticSpec {
  std::uint64_t seed = 0;
  std::size_t n_videos = 32;  // training videos
  std::size_t n_val = 0;      // 0 -> max(2, n_videos / 4)
  std::size_t n_test = 0;     // 0 -> max(2, n_videos / 4)
  std::size_t captions_per_video = 1;
  std::size_t m_min = 6;
  std::size_t m_max = 12;
  std::size_t d_frame = 16;
  std::size_t vocab_size = 12;     // number of content words
  std::size_t words_per_video = 3;
  double noise = 0.1;
};

struct SyntheticCorpus {
  Corpus corpus;
  /// Feature-space prototype per content word.
  std::map<std::string, RowVec> prototypes;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec);

// ---- batching -------------------------------------------------------------

struct Batch {
  std::vector<std::size_t> captions;  // caption indices into the split

  std::size_t size() const { return captions.size(); }
};

/// Seeded epochs over a split's captions. Epoch e is a permutation drawn
/// from (seed, e); the last batch may be short.
class BatchIterator {
 public:
  BatchIterator(const CorpusSplit& split, std::size_t batch_size, std::uint64_t seed);

  std::vector<Batch> epoch(std::size_t epoch_index) const;
  std::size_t batch_size() const { return batch_size_; }

 private:
  std::size_t n_captions_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

}  // namespace vidret
