#pragma once

// Previewing branch: a light encoder whose temporal mean is the video overview p.

#include "vidret/config.hpp"
#include "vidret/layers.hpp"

namespace vidret {

struct PreviewParams {
  PreviewKind kind = PreviewKind::BiGru;
  BiGru gru;  // kind == BiGru
  Affine fc;  // kind == Fc, d_frame -> 2 * hidden

  static PreviewParams create(ParamStore& store, const PreviewConfig& config, int d_frame, Rng& rng);
  int output_dim() const;
};

/// Hidden sequence H (m x 2h).
Var bigru_forward(Tape& tape, const Var& frames, const BiGru& gru);

/// p = mean over t of H.
Var preview_encode(Tape& tape, const Var& frames, const BiGru& gru);

/// p = mean over t of (v_t W + b).
Var preview_encode_fc(Tape& tape, const Var& frames, const Affine& fc);

Var preview_encode(Tape& tape, const Var& frames, const PreviewParams& params);

}  // namespace vidret
