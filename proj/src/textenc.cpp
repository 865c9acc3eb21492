#include "vidret/textenc.hpp"

#include <array>

namespace vidret {

TextEncoderParams TextEncoderParams::create(ParamStore& store, const TextConfig& config, std::size_t vocab_size,
                                            Rng& rng) {
  TextEncoderParams p;
  p.embedding = &store.add("text.embedding", static_cast<Eigen::Index>(vocab_size), config.d_word);
  init_fan_in(*p.embedding, static_cast<std::size_t>(config.d_word), rng);
  p.gru = BiGru::create(store, "text.gru", config.d_word, config.h_text, rng);
  p.windows = config.windows;
  for (int w : config.windows) {
    p.convs.push_back(
        Affine::create(store, "text.conv" + std::to_string(w), w * 2 * config.h_text, config.r_text, rng));
  }
  return p;
}

RowVec encode_bow(const Caption& caption, const Vocabulary& vocab) {
  RowVec bow = RowVec::Zero(static_cast<Eigen::Index>(vocab.size()));
  for (const auto& tok : caption.tokens) bow(vocab.index_of(tok)) += 1.0;
  return bow;
}

Var bigru_states(Tape& tape, const std::vector<int>& word_ids, const TextEncoderParams& params) {
  if (word_ids.empty()) throw Error("cannot encode an empty sentence");
  const Var embedded = ag::gather_rows(tape.param(*params.embedding), word_ids);
  return params.gru.run(tape, embedded);
}

Var encode_bigru(Tape& tape, const std::vector<int>& word_ids, const TextEncoderParams& params) {
  return ag::mean_rows(bigru_states(tape, word_ids, params));
}

Var encode_bigru_cnn(Tape& tape, const Var& states, const TextEncoderParams& params) {
  std::vector<Var> pooled;
  pooled.reserve(params.convs.size());
  for (std::size_t i = 0; i < params.convs.size(); ++i) {
    const Var windows = ag::unfold(states, params.windows[i], 1);
    pooled.push_back(ag::max_rows(ag::relu(params.convs[i](tape, windows))));
  }
  return ag::concat_cols(pooled);
}

TextEncoder::TextEncoder(const TextConfig& config, const Vocabulary* vocab, TextEncoderParams params)
    : config_(config), vocab_(vocab), params_(std::move(params)) {}

int TextEncoder::output_dim() const {
  int d = bow_dim() + 2 * params_.hidden() + static_cast<int>(params_.convs.size()) * params_.filters();
  if (config_.external_enabled) d += config_.external_dim;
  return d;
}

Var TextEncoder::encode(Tape& tape, const Caption& caption) const {
  const std::vector<int> ids = vocab_->encode(caption.tokens);
  const Var states = bigru_states(tape, ids, params_);
  std::vector<Var> parts{tape.constant(encode_bow(caption, *vocab_)), ag::mean_rows(states),
                         encode_bigru_cnn(tape, states, params_)};
  if (config_.external_enabled) {
    if (!caption.external_embedding) {
      throw Error("external text features enabled but sentence " + caption.sentence_id + " has none");
    }
    if (caption.external_embedding->size() != config_.external_dim) {
      throw Error("sentence " + caption.sentence_id + ": external embedding has the wrong dimension");
    }
    parts.push_back(tape.constant(Mat(*caption.external_embedding)));
  }
  return ag::concat_cols(parts);
}

}  // namespace vidret
