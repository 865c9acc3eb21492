#include "vidret/preview.hpp"

namespace vidret {

PreviewParams PreviewParams::create(ParamStore& store, const PreviewConfig& config, int d_frame, Rng& rng) {
  PreviewParams p;
  p.kind = config.kind;
  if (config.kind == PreviewKind::BiGru) {
    p.gru = BiGru::create(store, "preview.gru", d_frame, config.hidden, rng);
  } else {
    p.fc = Affine::create(store, "preview.fc", d_frame, config.output_dim(), rng);
  }
  return p;
}

int PreviewParams::output_dim() const { return kind == PreviewKind::BiGru ? 2 * gru.hidden() : fc.out(); }

Var bigru_forward(Tape& tape, const Var& frames, const BiGru& gru) {
  if (frames.rows() < 1) throw Error("preview: video has no frames");
  return gru.run(tape, frames);
}

Var preview_encode(Tape& tape, const Var& frames, const BiGru& gru) {
  return ag::mean_rows(bigru_forward(tape, frames, gru));
}

Var preview_encode_fc(Tape& tape, const Var& frames, const Affine& fc) {
  if (frames.rows() < 1) throw Error("preview: video has no frames");
  return ag::mean_rows(fc(tape, frames));
}

Var preview_encode(Tape& tape, const Var& frames, const PreviewParams& params) {
  return params.kind == PreviewKind::BiGru ? preview_encode(tape, frames, params.gru)
                                           : preview_encode_fc(tape, frames, params.fc);
}

}  // namespace vidret
