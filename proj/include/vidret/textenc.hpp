#pragma once

// Multi-level sentence encoding: bag-of-words counts, the temporal mean of a
// biGRU over word embeddings, and max-pooled 1-D convolutions over the biGRU
// states, concatenated (optionally followed by a frozen external embedding).

#include "vidret/config.hpp"
#include "vidret/corpus.hpp"
#include "vidret/layers.hpp"

#include <vector>

namespace vidret {

struct TextEncoderParams {
  Parameter* embedding = nullptr;  // vocab_size x d_word
  BiGru gru;
  std::vector<int> windows;
  std::vector<Affine> convs;  // one per window: (window * 2h) -> r_text

  static TextEncoderParams create(ParamStore& store, const TextConfig& config, std::size_t vocab_size, Rng& rng);

  int hidden() const { return gru.hidden(); }
  int filters() const { return convs.empty() ? 0 : convs.front().out(); }
};

/// Count of every vocabulary word; out-of-vocabulary tokens count at the special index.
RowVec encode_bow(const Caption& caption, const Vocabulary& vocab);

/// biGRU states over the caption's word embeddings (length x 2h).
Var bigru_states(Tape& tape, const std::vector<int>& word_ids, const TextEncoderParams& params);

/// Temporal mean of the biGRU states (1 x 2h).
Var encode_bigru(Tape& tape, const std::vector<int>& word_ids, const TextEncoderParams& params);

/// Conv + ReLU + max-over-time per window, concatenated (1 x windows * r_text).
Var encode_bigru_cnn(Tape& tape, const Var& states, const TextEncoderParams& params);

class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const TextConfig& config, const Vocabulary* vocab, TextEncoderParams params);

  int output_dim() const;
  int bow_dim() const { return static_cast<int>(vocab_->size()); }

  /// [BoW | biGRU | biGRU-CNN | external?] as a 1 x d_text row.
  Var encode(Tape& tape, const Caption& caption) const;

  const TextEncoderParams& params() const { return params_; }

 private:
  TextConfig config_;
  const Vocabulary* vocab_ = nullptr;
  TextEncoderParams params_;
};

}  // namespace vidret
