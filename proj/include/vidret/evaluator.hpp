#pragma once

// Retrieval evaluation: similarity matrices, rank metrics and the
// video-to-video relevance protocol built from caption overlap.

#include "vidret/model.hpp"

#include <functional>
#include <optional>

namespace vidret {

enum class Direction { TextToVideo, VideoToVideo };
enum class BranchSel { Both, Preview, Intensive };
enum class FeatureSpace { Raw, Latent };

std::string to_string(Direction d);
std::string to_string(BranchSel b);
std::string to_string(FeatureSpace s);
Direction parse_direction(const std::string& s);
BranchSel parse_branch_sel(const std::string& s);
FeatureSpace parse_feature_space(const std::string& s);

struct SimilarityMatrix {
  Mat scores;  // queries x candidates
  std::vector<std::string> query_ids;
  std::vector<std::string> candidate_ids;
  Direction direction = Direction::TextToVideo;
};

/// Branch features and text encodings of a split. Videos and captions are
/// ordered by id.
struct EncodedSplit {
  std::vector<std::string> video_ids;
  std::vector<std::string> sentence_ids;
  std::vector<std::size_t> video_rows;    // index into split.videos()
  std::vector<std::size_t> caption_rows;  // index into split.captions()
  Mat p;     // videos x preview dim; empty without a preview branch
  Mat g;     // videos x intensive dim; empty without an intensive branch
  Mat text;  // captions x text dim
  std::vector<std::vector<Mat>> attention;  // per video, per granularity
};

EncodedSplit encode_split(const Model& model, const CorpusSplit& split, bool keep_attention = false);

/// Rows are captions, columns videos; entry = total hybrid similarity.
SimilarityMatrix text_to_video(const Model& model, const EncodedSplit& enc);
/// Cosine between video features; `Both` sums the two branch cosines.
SimilarityMatrix video_to_video(const Model& model, const EncodedSplit& enc, BranchSel branch, FeatureSpace space);

SimilarityMatrix similarity_matrix(const Model& model, const CorpusSplit& split, Direction direction,
                                   BranchSel branch = BranchSel::Both, FeatureSpace space = FeatureSpace::Raw);

/// Cosine between temporally mean-pooled raw frame features.
SimilarityMatrix mean_frame_similarity(const CorpusSplit& split);

// ---- metrics ---------------------------------------------------------------

struct QueryTruth {
  std::vector<std::size_t> relevant;   // candidate columns
  std::optional<std::size_t> exclude;  // removed from the ranking (self match)
};

struct RankMetrics {
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  double medr = 0.0;
  double map = 0.0;
  double sumr = 0.0;
  std::optional<double> ndcg;
  std::size_t queries = 0;
};

/// Candidate columns by descending score, ties by ascending column.
std::vector<std::size_t> rank_candidates(const Eigen::Ref<const RowVec>& scores,
                                         std::optional<std::size_t> exclude = {});

/// 1-based rank of the first relevant candidate for every query.
std::vector<std::size_t> first_relevant_ranks(const Mat& scores, const std::vector<QueryTruth>& truth);

RankMetrics rank_metrics(const Mat& scores, const std::vector<QueryTruth>& truth);

/// Mean nDCG with gain = relevance(q, c) and discount 1 / log2(rank + 1).
/// Queries whose relevance is all zero contribute 0.
double ndcg(const Mat& scores, const Mat& relevance, std::optional<std::size_t> cutoff = {},
            const std::vector<std::optional<std::size_t>>* exclude = nullptr);

/// Each caption's own video is its single relevant candidate.
std::vector<QueryTruth> text_to_video_truth(const CorpusSplit& split, const SimilarityMatrix& sims);

RankMetrics evaluate_t2v(const Model& model, const CorpusSplit& split);

// ---- video-to-video protocol ------------------------------------------------

using SentenceSimFn = std::function<double(const Caption&, const Caption&)>;

/// |A ∩ B| / |A ∪ B| over the two captions' token sets; 0 when both are empty.
double token_jaccard(const Caption& a, const Caption& b);
/// Same, ignoring tokens outside the vocabulary.
SentenceSimFn token_jaccard_in(const Vocabulary& vocab);

struct V2VAnnotation {
  std::vector<std::string> video_ids;  // sorted
  Mat similarity;                      // mean sentence-pair similarity
  BoolMat relevant;                    // similarity > threshold, never on the diagonal
  std::vector<std::size_t> queries;    // videos with >= 1 relevant other video
  double threshold = 0.2;
  std::string sentence_sim = "token_jaccard";
};

V2VAnnotation build_v2v_annotations(const CorpusSplit& split, const SentenceSimFn& sentence_sim = token_jaccard,
                                    double threshold = 0.2, std::string sentence_sim_name = "token_jaccard");

/// mAP and nDCG over the annotation's query videos, self excluded. With
/// `graded` the nDCG gain is the pair similarity instead of the flag.
RankMetrics evaluate_v2v(const SimilarityMatrix& sims, const V2VAnnotation& annotation, bool graded = false);

}  // namespace vidret
