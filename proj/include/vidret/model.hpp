#pragma once

#include "vidret/config.hpp"
#include "vidret/corpus.hpp"
#include "vidret/hybrid.hpp"
#include "vidret/intensive.hpp"
#include "vidret/preview.hpp"
#include "vidret/textenc.hpp"

#include <optional>

namespace vidret {

/// Two-branch video encoder, multi-level text encoder and one hybrid space
/// per active branch. Parameters live in params(); the model is pinned in
/// memory because its encoders point into it.
class Model {
 public:
  Model(Config config, Vocabulary vocab, ConceptVocabulary concepts, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const Config& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const ConceptVocabulary& concepts() const { return concepts_; }

  int text_dim() const { return text_.output_dim(); }
  int preview_dim() const { return config_.preview.output_dim(); }
  int intensive_dim() const { return config_.intensive.output_dim(); }

  bool has_preview_branch() const { return preview_.has_value(); }
  bool has_intensive_branch() const { return intensive_.has_value(); }
  const PreviewParams& preview_params() const { return *preview_; }
  const IntensiveParams& intensive_params() const { return *intensive_; }
  const TextEncoder& text_encoder() const { return text_; }

  /// Null when that space is disabled by model.branches.
  const HybridSpace* preview_space() const { return preview_space_ ? &*preview_space_ : nullptr; }
  const HybridSpace* intensive_space() const { return intensive_space_ ? &*intensive_space_ : nullptr; }

  struct VideoEncoding {
    Var p;  // invalid without a preview branch
    Var g;  // invalid without an intensive branch
    std::vector<Mat> attention;  // per granularity, when requested
  };
  VideoEncoding encode_video(Tape& tape, const FrameFeatureSequence& video, bool keep_attention = false) const;
  Var encode_text(Tape& tape, const Caption& caption) const;

  struct BatchLoss {
    Var total;
    LossValue preview;
    LossValue intensive;
  };
  /// Total objective over a batch: previewing-space loss + intensive-space loss.
  BatchLoss batch_loss(Tape& tape, const CorpusSplit& split, const Batch& batch) const;

 private:
  Config config_;
  Vocabulary vocab_;
  ConceptVocabulary concepts_;
  ParamStore params_;
  TextEncoder text_;
  std::optional<PreviewParams> preview_;
  std::optional<IntensiveParams> intensive_;
  std::optional<HybridSpace> preview_space_;
  std::optional<HybridSpace> intensive_space_;
};

/// Vocabularies from the training split, then a freshly initialized model.
std::unique_ptr<Model> build_model(const Config& config, const CorpusSplit& train, std::uint64_t seed);

}  // namespace vidret
