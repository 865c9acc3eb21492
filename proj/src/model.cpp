#include "vidret/model.hpp"

#include <map>

namespace vidret {

Model::Model(Config config, Vocabulary vocab, ConceptVocabulary concepts, std::uint64_t seed)
    : config_(std::move(config)), vocab_(std::move(vocab)), concepts_(std::move(concepts)) {
  validate(config_);
  if (static_cast<int>(concepts_.size()) != config_.hybrid.k_concepts) {
    throw ConfigError("concept vocabulary has " + std::to_string(concepts_.size()) + " entries but hybrid.k_concepts = " +
                      std::to_string(config_.hybrid.k_concepts));
  }
  Rng rng(seed);
  text_ = TextEncoder(config_.text, &vocab_, TextEncoderParams::create(params_, config_.text, vocab_.size(), rng));

  const bool want_preview = config_.branches != Branches::Intensive;
  const bool want_intensive = config_.branches != Branches::Preview;
  if (want_preview) preview_ = PreviewParams::create(params_, config_.preview, config_.d_frame, rng);
  if (want_intensive) {
    intensive_ = IntensiveParams::create(params_, config_.intensive, config_.d_frame, config_.preview.output_dim(), rng);
  }

  const int d_text = text_.output_dim();
  if (want_preview) {
    preview_space_ = HybridSpace::create(params_, "hybrid.preview", preview_dim(), d_text, config_.hybrid, rng);
  }
  if (want_intensive) {
    const HybridSpace* shared =
        config_.hybrid.share_text_proj && preview_space_ ? &*preview_space_ : nullptr;
    intensive_space_ =
        HybridSpace::create(params_, "hybrid.intensive", intensive_dim(), d_text, config_.hybrid, rng, shared);
  }
}

Model::VideoEncoding Model::encode_video(Tape& tape, const FrameFeatureSequence& video, bool keep_attention) const {
  if (video.dim() != config_.d_frame) {
    throw Error("video " + video.video_id + ": frame dimension " + std::to_string(video.dim()) +
                " != model.d_frame " + std::to_string(config_.d_frame));
  }
  VideoEncoding out;
  const Var frames = tape.constant(video.frames);
  if (preview_) out.p = preview_encode(tape, frames, *preview_);
  if (intensive_) {
    out.g = intensive_encode(tape, frames, out.p, *intensive_, keep_attention ? &out.attention : nullptr);
  }
  return out;
}

Var Model::encode_text(Tape& tape, const Caption& caption) const { return text_.encode(tape, caption); }

Model::BatchLoss Model::batch_loss(Tape& tape, const CorpusSplit& split, const Batch& batch) const {
  const std::size_t b = batch.size();
  if (b < 2) throw Error("batch_loss: batch size must be >= 2");

  std::map<std::size_t, VideoEncoding> encoded;
  std::vector<Var> p_rows, g_rows, text_rows;
  Mat targets(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(concepts_.size()));
  BoolMat positive(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b));
  std::vector<std::size_t> video_of(b);
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t c = batch.captions[i];
    const std::size_t v = split.video_of_caption(c);
    video_of[i] = v;
    auto it = encoded.find(v);
    if (it == encoded.end()) it = encoded.emplace(v, encode_video(tape, split.videos()[v])).first;
    if (preview_space_) p_rows.push_back(it->second.p);
    if (intensive_space_) g_rows.push_back(it->second.g);
    const Caption& caption = split.captions()[c];
    text_rows.push_back(encode_text(tape, caption));
    targets.row(static_cast<Eigen::Index>(i)) = concept_targets(caption, concepts_);
  }
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      positive(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = video_of[i] == video_of[j];
    }
  }

  const Var texts = ag::concat_rows(text_rows);
  BatchLoss out;
  std::vector<Var> terms;
  if (preview_space_) {
    SpaceLoss l = space_loss(tape, ag::concat_rows(p_rows), texts, targets, *preview_space_, config_.loss, &positive);
    out.preview = l.parts;
    terms.push_back(l.value);
  }
  if (intensive_space_) {
    SpaceLoss l =
        space_loss(tape, ag::concat_rows(g_rows), texts, targets, *intensive_space_, config_.loss, &positive);
    out.intensive = l.parts;
    terms.push_back(l.value);
  }
  out.total = terms.size() == 1 ? terms[0] : ag::add(terms[0], terms[1]);
  return out;
}

std::unique_ptr<Model> build_model(const Config& config, const CorpusSplit& train, std::uint64_t seed) {
  Vocabulary vocab = build_vocabulary(train.captions(), config.text.min_count);
  ConceptVocabulary concepts =
      build_concept_vocabulary(train.captions(), static_cast<std::size_t>(config.hybrid.k_concepts));
  return std::make_unique<Model>(config, std::move(vocab), std::move(concepts), seed);
}

}  // namespace vidret
