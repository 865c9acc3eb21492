#pragma once

// Intensive-reading branch.
//
// Frames are mapped by an FC layer, aggregated into segments by one strided
// 1-D convolution per window size, and each granularity is pooled by a
// single-head attention whose query comes from the previewing feature p:
//
//   o   = W4 . Attention(p W1, C W2, C W3)
//   o'  = LN(o + maxpool(C))
//   out = LN(o' + MLP(o'))
//
// The branch output g concatenates the per-granularity outputs in ascending
// window order.

#include "vidret/config.hpp"
#include "vidret/layers.hpp"

#include <vector>

namespace vidret {

struct PaaParams {
  AttentionVariant variant = AttentionVariant::Paa;
  Affine w1;  // d -> d_k (query from p)
  Affine w2;  // r -> d_k (keys)
  Affine w3;  // r -> d_v (values)
  Affine w4;  // d_v -> d_v (output projection)
  Affine mlp_in;   // d_v -> d_ff
  Affine mlp_out;  // d_ff -> d_v
  LayerNorm ln_residual;
  LayerNorm ln_out;

  Affine score;    // simple: (d + r) -> 1
  Affine fuse;     // concat_sa: (d + r) -> r, sum_sa: d -> r
  Affine w_query;  // concat_sa / sum_sa: r -> d_k (self-attention queries)

  static PaaParams create(ParamStore& store, const std::string& name, const IntensiveConfig& config, int query_dim,
                          Rng& rng);
  int d_k() const;
};

/// Softmax(q K^T / sqrt(d_k)) V. Each query row yields one output row; the
/// weight matrix (queries x keys) is copied to `weights` when non-null.
Var scaled_dot_attention(const Var& queries, const Var& keys, const Var& values, Mat* weights = nullptr);

/// m x d_map mapped frames -> m_n x r segment features, ReLU applied.
/// m_n = floor((max(m, n) - n) / stride) + 1.
Var segment_conv(Tape& tape, const Var& mapped, int window, int stride, const Affine& conv);

Eigen::Index segment_count(Eigen::Index m, int window, int stride);

/// Previewing-aware attention over one granularity; `query_source` is p (1 x d).
Var paa(Tape& tape, const Var& segments, const Var& query_source, const PaaParams& params, Mat* weights = nullptr);

/// Attention pooling selected by params.variant, followed by the shared
/// residual / LN / MLP tail.
Var paa_variant(Tape& tape, const Var& segments, const Var& query_source, const PaaParams& params,
                Mat* weights = nullptr);

struct IntensiveParams {
  Affine frame_map;  // d_frame -> d_map
  std::vector<int> windows;  // ascending
  int stride = 2;
  std::vector<Affine> convs;  // (n * d_map) -> r
  std::vector<PaaParams> attention;
  Parameter* constant_query = nullptr;  // 1 x d, used when the branch is independent of p

  static IntensiveParams create(ParamStore& store, const IntensiveConfig& config, int d_frame, int query_dim,
                                Rng& rng);
  int output_dim() const;
};

/// V' = V W + b per frame.
Var map_frames(Tape& tape, const Var& frames, const Affine& frame_map);

/// g for one video. `p` is ignored (and may be invalid) when the params carry
/// a constant query. Per-granularity attention weights go to `weights`.
Var intensive_encode(Tape& tape, const Var& frames, const Var& p, const IntensiveParams& params,
                     std::vector<Mat>* weights = nullptr);

}  // namespace vidret
