#include "vidret/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace vidret {
namespace {

std::vector<std::size_t> order_by(const std::vector<std::string>& ids) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  return order;
}

Mat stack_rows(const std::vector<RowVec>& rows) {
  if (rows.empty()) return {};
  Mat out(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows[i];
  return out;
}

// Hybrid similarity of every (video, text) pair in one space, videos x texts.
Mat space_scores(const Mat& videos, const Mat& texts, const HybridSpace& space) {
  Tape tape(false);
  const Projection v = project_video(tape, tape.constant(videos), space);
  const Projection t = project_text(tape, tape.constant(texts), space);
  const Mat lat = ag::cosine_matrix(v.latent, t.latent).value();
  const Mat con = ag::jaccard_matrix(v.probs, t.probs).value();
  return space.alpha * lat + (1.0 - space.alpha) * con;
}

Mat self_cosine(const Mat& x) {
  Tape tape(false);
  const Var v = tape.constant(x);
  return ag::cosine_matrix(v, v).value();
}

Mat latent_of(const Mat& videos, const HybridSpace& space) {
  Tape tape(false);
  return space.video_latent(tape, tape.constant(videos)).value();
}

void check_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) throw Error(std::string(what) + ": non-finite similarity");
}

}  // namespace

std::string to_string(Direction d) { return d == Direction::TextToVideo ? "t2v" : "v2v"; }

std::string to_string(BranchSel b) {
  switch (b) {
    case BranchSel::Both: return "both";
    case BranchSel::Preview: return "preview";
    case BranchSel::Intensive: return "intensive";
  }
  return "?";
}

std::string to_string(FeatureSpace s) { return s == FeatureSpace::Raw ? "raw" : "latent"; }

Direction parse_direction(const std::string& s) {
  if (s == "t2v") return Direction::TextToVideo;
  if (s == "v2v") return Direction::VideoToVideo;
  throw Error("direction must be t2v or v2v, got " + s);
}

BranchSel parse_branch_sel(const std::string& s) {
  if (s == "both") return BranchSel::Both;
  if (s == "preview") return BranchSel::Preview;
  if (s == "intensive") return BranchSel::Intensive;
  throw Error("branch must be preview, intensive or both, got " + s);
}

FeatureSpace parse_feature_space(const std::string& s) {
  if (s == "raw") return FeatureSpace::Raw;
  if (s == "latent") return FeatureSpace::Latent;
  throw Error("space must be raw or latent, got " + s);
}

EncodedSplit encode_split(const Model& model, const CorpusSplit& split, bool keep_attention) {
  if (split.videos().empty() || split.captions().empty()) throw Error("cannot evaluate an empty split");
  EncodedSplit enc;
  std::vector<std::string> vids, sids;
  for (const auto& v : split.videos()) vids.push_back(v.video_id);
  for (const auto& c : split.captions()) sids.push_back(c.sentence_id);
  enc.video_rows = order_by(vids);
  enc.caption_rows = order_by(sids);

  std::vector<RowVec> p, g, text;
  for (std::size_t i : enc.video_rows) {
    Tape tape(false);
    Model::VideoEncoding e = model.encode_video(tape, split.videos()[i], keep_attention);
    enc.video_ids.push_back(vids[i]);
    if (e.p.valid()) p.push_back(e.p.value().row(0));
    if (e.g.valid()) g.push_back(e.g.value().row(0));
    if (keep_attention) enc.attention.push_back(std::move(e.attention));
  }
  for (std::size_t i : enc.caption_rows) {
    Tape tape(false);
    text.push_back(model.encode_text(tape, split.captions()[i]).value().row(0));
    enc.sentence_ids.push_back(sids[i]);
  }
  enc.p = stack_rows(p);
  enc.g = stack_rows(g);
  enc.text = stack_rows(text);
  return enc;
}

SimilarityMatrix text_to_video(const Model& model, const EncodedSplit& enc) {
  Mat total = Mat::Zero(static_cast<Eigen::Index>(enc.video_ids.size()), enc.text.rows());
  if (const HybridSpace* s = model.preview_space()) total += space_scores(enc.p, enc.text, *s);
  if (const HybridSpace* s = model.intensive_space()) total += space_scores(enc.g, enc.text, *s);
  SimilarityMatrix out;
  out.scores = total.transpose();
  out.query_ids = enc.sentence_ids;
  out.candidate_ids = enc.video_ids;
  out.direction = Direction::TextToVideo;
  check_finite(out.scores, "text_to_video");
  return out;
}

SimilarityMatrix video_to_video(const Model& model, const EncodedSplit& enc, BranchSel branch, FeatureSpace space) {
  const bool want_p = branch != BranchSel::Intensive;
  const bool want_g = branch != BranchSel::Preview;
  if (want_p && enc.p.size() == 0) throw Error("model has no preview branch");
  if (want_g && enc.g.size() == 0) throw Error("model has no intensive branch");
  const auto n = static_cast<Eigen::Index>(enc.video_ids.size());
  Mat total = Mat::Zero(n, n);
  if (want_p) {
    total += self_cosine(space == FeatureSpace::Raw ? enc.p : latent_of(enc.p, *model.preview_space()));
  }
  if (want_g) {
    total += self_cosine(space == FeatureSpace::Raw ? enc.g : latent_of(enc.g, *model.intensive_space()));
  }
  SimilarityMatrix out;
  out.scores = std::move(total);
  out.query_ids = enc.video_ids;
  out.candidate_ids = enc.video_ids;
  out.direction = Direction::VideoToVideo;
  check_finite(out.scores, "video_to_video");
  return out;
}

SimilarityMatrix similarity_matrix(const Model& model, const CorpusSplit& split, Direction direction,
                                   BranchSel branch, FeatureSpace space) {
  const EncodedSplit enc = encode_split(model, split);
  if (direction == Direction::TextToVideo) return text_to_video(model, enc);
  return video_to_video(model, enc, branch, space);
}

SimilarityMatrix mean_frame_similarity(const CorpusSplit& split) {
  if (split.videos().empty()) throw Error("cannot evaluate an empty split");
  std::vector<std::string> vids;
  for (const auto& v : split.videos()) vids.push_back(v.video_id);
  SimilarityMatrix out;
  std::vector<RowVec> rows;
  for (std::size_t i : order_by(vids)) {
    rows.push_back(split.videos()[i].frames.colwise().mean());
    out.query_ids.push_back(vids[i]);
  }
  out.candidate_ids = out.query_ids;
  out.scores = self_cosine(stack_rows(rows));
  out.direction = Direction::VideoToVideo;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> rank_candidates(const Eigen::Ref<const RowVec>& scores, std::optional<std::size_t> exclude) {
  std::vector<std::size_t> order;
  order.reserve(static_cast<std::size_t>(scores.size()));
  for (Eigen::Index c = 0; c < scores.size(); ++c) {
    if (exclude && *exclude == static_cast<std::size_t>(c)) continue;
    order.push_back(static_cast<std::size_t>(c));
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(b));
  });
  return order;
}

namespace {

struct QueryRanking {
  std::size_t first = 0;
  double ap = 0.0;
};

QueryRanking rank_query(const Eigen::Ref<const RowVec>& scores, const QueryTruth& truth, std::size_t q) {
  if (truth.relevant.empty()) throw Error("query " + std::to_string(q) + " has no relevant candidate");
  std::vector<char> is_rel(static_cast<std::size_t>(scores.size()), 0);
  for (std::size_t c : truth.relevant) {
    if (c >= is_rel.size()) throw Error("relevant candidate index out of range");
    if (truth.exclude && *truth.exclude == c) throw Error("excluded candidate marked relevant");
    is_rel[c] = 1;
  }
  std::size_t n_rel = 0;
  for (char r : is_rel) n_rel += static_cast<std::size_t>(r);

  QueryRanking out;
  std::size_t hits = 0, pos = 0;
  for (std::size_t c : rank_candidates(scores, truth.exclude)) {
    ++pos;
    if (!is_rel[c]) continue;
    ++hits;
    if (out.first == 0) out.first = pos;
    out.ap += static_cast<double>(hits) / static_cast<double>(pos);
    if (hits == n_rel) break;
  }
  out.ap /= static_cast<double>(n_rel);
  return out;
}

}  // namespace

std::vector<std::size_t> first_relevant_ranks(const Mat& scores, const std::vector<QueryTruth>& truth) {
  if (static_cast<std::size_t>(scores.rows()) != truth.size()) throw Error("ground truth size != query count");
  std::vector<std::size_t> ranks;
  ranks.reserve(truth.size());
  for (std::size_t q = 0; q < truth.size(); ++q) {
    ranks.push_back(rank_query(scores.row(static_cast<Eigen::Index>(q)), truth[q], q).first);
  }
  return ranks;
}

RankMetrics rank_metrics(const Mat& scores, const std::vector<QueryTruth>& truth) {
  if (static_cast<std::size_t>(scores.rows()) != truth.size()) throw Error("ground truth size != query count");
  if (truth.empty()) throw Error("rank_metrics: no queries");
  check_finite(scores, "rank_metrics");
  std::vector<std::size_t> firsts;
  double ap_sum = 0.0;
  std::size_t at1 = 0, at5 = 0, at10 = 0;
  for (std::size_t q = 0; q < truth.size(); ++q) {
    const QueryRanking r = rank_query(scores.row(static_cast<Eigen::Index>(q)), truth[q], q);
    firsts.push_back(r.first);
    ap_sum += r.ap;
    at1 += r.first <= 1;
    at5 += r.first <= 5;
    at10 += r.first <= 10;
  }
  const double n = static_cast<double>(truth.size());
  RankMetrics m;
  m.queries = truth.size();
  m.r1 = 100.0 * static_cast<double>(at1) / n;
  m.r5 = 100.0 * static_cast<double>(at5) / n;
  m.r10 = 100.0 * static_cast<double>(at10) / n;
  m.sumr = m.r1 + m.r5 + m.r10;
  m.map = ap_sum / n;
  std::sort(firsts.begin(), firsts.end());
  m.medr = static_cast<double>(firsts[(firsts.size() - 1) / 2]);
  return m;
}

double ndcg(const Mat& scores, const Mat& relevance, std::optional<std::size_t> cutoff,
            const std::vector<std::optional<std::size_t>>* exclude) {
  if (scores.rows() != relevance.rows() || scores.cols() != relevance.cols()) {
    throw Error("ndcg: relevance shape differs from scores");
  }
  if (exclude != nullptr && exclude->size() != static_cast<std::size_t>(scores.rows())) {
    throw Error("ndcg: exclusion list size != query count");
  }
  if (scores.rows() == 0) throw Error("ndcg: no queries");
  double total = 0.0;
  for (Eigen::Index q = 0; q < scores.rows(); ++q) {
    const std::optional<std::size_t> ex = exclude ? (*exclude)[static_cast<std::size_t>(q)] : std::nullopt;
    const std::vector<std::size_t> order = rank_candidates(scores.row(q), ex);
    const std::size_t depth = cutoff ? std::min(*cutoff, order.size()) : order.size();

    std::vector<double> gains;
    for (std::size_t c : order) gains.push_back(relevance(q, static_cast<Eigen::Index>(c)));
    double dcg = 0.0;
    for (std::size_t k = 0; k < depth; ++k) dcg += gains[k] / std::log2(static_cast<double>(k) + 2.0);
    std::sort(gains.begin(), gains.end(), std::greater<>());
    double ideal = 0.0;
    for (std::size_t k = 0; k < depth; ++k) ideal += gains[k] / std::log2(static_cast<double>(k) + 2.0);
    if (ideal > 0.0) total += dcg / ideal;
  }
  return total / static_cast<double>(scores.rows());
}

std::vector<QueryTruth> text_to_video_truth(const CorpusSplit& split, const SimilarityMatrix& sims) {
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < sims.candidate_ids.size(); ++i) column.emplace(sims.candidate_ids[i], i);
  std::unordered_map<std::string, std::string> video_of;
  for (const auto& c : split.captions()) video_of.emplace(c.sentence_id, c.video_id);
  std::vector<QueryTruth> truth;
  truth.reserve(sims.query_ids.size());
  for (const auto& sid : sims.query_ids) {
    auto v = video_of.find(sid);
    if (v == video_of.end()) throw Error("unknown sentence id " + sid);
    auto c = column.find(v->second);
    if (c == column.end()) throw Error("video " + v->second + " is not a candidate");
    truth.push_back({{c->second}, std::nullopt});
  }
  return truth;
}

RankMetrics evaluate_t2v(const Model& model, const CorpusSplit& split) {
  const SimilarityMatrix s = similarity_matrix(model, split, Direction::TextToVideo);
  return rank_metrics(s.scores, text_to_video_truth(split, s));
}

// ---------------------------------------------------------------------------

double token_jaccard(const Caption& a, const Caption& b) {
  const std::set<std::string> sa(a.tokens.begin(), a.tokens.end());
  const std::set<std::string> sb(b.tokens.begin(), b.tokens.end());
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

SentenceSimFn token_jaccard_in(const Vocabulary& vocab) {
  return [&vocab](const Caption& a, const Caption& b) {
    auto keep = [&vocab](const Caption& c) {
      Caption out;
      for (const auto& t : c.tokens) {
        if (vocab.contains(t) && t != Vocabulary::kSpecialToken) out.tokens.push_back(t);
      }
      return out;
    };
    return token_jaccard(keep(a), keep(b));
  };
}

V2VAnnotation build_v2v_annotations(const CorpusSplit& split, const SentenceSimFn& sentence_sim, double threshold,
                                    std::string sentence_sim_name) {
  std::vector<std::string> vids;
  for (const auto& v : split.videos()) vids.push_back(v.video_id);
  const std::vector<std::size_t> order = order_by(vids);
  const auto by_video = split.captions_by_video();
  for (std::size_t i = 0; i < by_video.size(); ++i) {
    if (by_video[i].empty()) throw Error("video " + vids[i] + " has no caption");
  }

  V2VAnnotation a;
  a.threshold = threshold;
  a.sentence_sim = std::move(sentence_sim_name);
  const auto n = static_cast<Eigen::Index>(order.size());
  a.similarity = Mat::Zero(n, n);
  a.relevant = BoolMat::Constant(n, n, false);
  for (std::size_t i : order) a.video_ids.push_back(vids[i]);

  const auto& caps = split.captions();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& ci = by_video[order[static_cast<std::size_t>(i)]];
      const auto& cj = by_video[order[static_cast<std::size_t>(j)]];
      double sum = 0.0;
      for (std::size_t x : ci) {
        for (std::size_t y : cj) sum += sentence_sim(caps[x], caps[y]);
      }
      a.similarity(i, j) = sum / static_cast<double>(ci.size() * cj.size());
      a.relevant(i, j) = i != j && a.similarity(i, j) > threshold;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a.relevant.row(i).any()) a.queries.push_back(static_cast<std::size_t>(i));
  }
  return a;
}

RankMetrics evaluate_v2v(const SimilarityMatrix& sims, const V2VAnnotation& annotation, bool graded) {
  if (sims.query_ids != annotation.video_ids || sims.candidate_ids != annotation.video_ids) {
    throw Error("evaluate_v2v: similarity matrix and annotation cover different videos");
  }
  if (annotation.queries.empty()) throw Error("evaluate_v2v: no query video has a relevant video");
  const auto nq = static_cast<Eigen::Index>(annotation.queries.size());
  const Eigen::Index n = sims.scores.cols();
  Mat scores(nq, n), relevance(nq, n);
  std::vector<QueryTruth> truth;
  std::vector<std::optional<std::size_t>> exclude;
  for (Eigen::Index k = 0; k < nq; ++k) {
    const auto q = static_cast<Eigen::Index>(annotation.queries[static_cast<std::size_t>(k)]);
    scores.row(k) = sims.scores.row(q);
    QueryTruth t;
    t.exclude = static_cast<std::size_t>(q);
    for (Eigen::Index c = 0; c < n; ++c) {
      if (annotation.relevant(q, c)) t.relevant.push_back(static_cast<std::size_t>(c));
      relevance(k, c) = c == q ? 0.0 : (graded ? annotation.similarity(q, c) : (annotation.relevant(q, c) ? 1.0 : 0.0));
    }
    truth.push_back(std::move(t));
    exclude.push_back(static_cast<std::size_t>(q));
  }
  RankMetrics m = rank_metrics(scores, truth);
  m.ndcg = ndcg(scores, relevance, std::nullopt, &exclude);
  return m;
}

}  // namespace vidret
