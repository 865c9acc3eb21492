#include "vidret/intensive.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace vidret {
namespace {

// Stacks `row` (1 x c) `count` times.
Var repeat_row(Tape& tape, const Var& row, Eigen::Index count) {
  return ag::matmul(tape.constant(Mat::Ones(count, 1)), row);
}

Var attention_tail(Tape& tape, const Var& attended, const Var& segments, const PaaParams& params) {
  const Var o = params.w4(tape, attended);
  const Var o_res = params.ln_residual(tape, ag::add(o, ag::max_rows(segments)));
  const Var ff = params.mlp_out(tape, ag::relu(params.mlp_in(tape, o_res)));
  return params.ln_out(tape, ag::add(o_res, ff));
}

}  // namespace

PaaParams PaaParams::create(ParamStore& store, const std::string& name, const IntensiveConfig& config,
                            int query_dim, Rng& rng) {
  const int r = config.filters;
  PaaParams p;
  p.variant = config.variant;
  switch (config.variant) {
    case AttentionVariant::Paa:
      p.w1 = Affine::create(store, name + ".w1", query_dim, config.d_k, rng);
      p.w2 = Affine::create(store, name + ".w2", r, config.d_k, rng);
      break;
    case AttentionVariant::Mean:
      break;
    case AttentionVariant::Simple:
      p.score = Affine::create(store, name + ".score", query_dim + r, 1, rng);
      break;
    case AttentionVariant::ConcatSa:
      p.fuse = Affine::create(store, name + ".fuse", query_dim + r, r, rng);
      p.w_query = Affine::create(store, name + ".wq", r, config.d_k, rng);
      p.w2 = Affine::create(store, name + ".w2", r, config.d_k, rng);
      break;
    case AttentionVariant::SumSa:
      p.fuse = Affine::create(store, name + ".fuse", query_dim, r, rng);
      p.w_query = Affine::create(store, name + ".wq", r, config.d_k, rng);
      p.w2 = Affine::create(store, name + ".w2", r, config.d_k, rng);
      break;
  }
  p.w3 = Affine::create(store, name + ".w3", r, config.d_v, rng);
  p.w4 = Affine::create(store, name + ".w4", config.d_v, config.d_v, rng);
  p.mlp_in = Affine::create(store, name + ".mlp_in", config.d_v, config.d_ff(), rng);
  p.mlp_out = Affine::create(store, name + ".mlp_out", config.d_ff(), config.d_v, rng);
  p.ln_residual = LayerNorm::create(store, name + ".ln1", config.d_v, config.ln_eps);
  p.ln_out = LayerNorm::create(store, name + ".ln2", config.d_v, config.ln_eps);
  return p;
}

int PaaParams::d_k() const { return w2.valid() ? w2.out() : 0; }

Var scaled_dot_attention(const Var& queries, const Var& keys, const Var& values, Mat* weights) {
  if (queries.cols() != keys.cols()) throw Error("attention: query and key dimensions differ");
  if (keys.rows() != values.rows()) throw Error("attention: key and value counts differ");
  const double scale = 1.0 / std::sqrt(static_cast<double>(keys.cols()));
  const Var w = ag::softmax_rows(ag::scale(ag::matmul(queries, ag::transpose(keys)), scale));
  if (weights != nullptr) *weights = w.value();
  return ag::matmul(w, values);
}

Eigen::Index segment_count(Eigen::Index m, int window, int stride) {
  return (std::max<Eigen::Index>(m, window) - window) / stride + 1;
}

Var segment_conv(Tape& tape, const Var& mapped, int window, int stride, const Affine& conv) {
  if (mapped.rows() < 1) throw Error("segment_conv: empty input");
  return ag::relu(conv(tape, ag::unfold(mapped, window, stride)));
}

Var paa(Tape& tape, const Var& segments, const Var& query_source, const PaaParams& params, Mat* weights) {
  if (segments.rows() < 1) throw Error("paa: no segments");
  if (segments.cols() != params.w4.out()) {
    throw Error("paa: segment dimension r must equal d_v for the max-pool residual");
  }
  const Var attended = scaled_dot_attention(params.w1(tape, query_source), params.w2(tape, segments),
                                            params.w3(tape, segments), weights);
  return attention_tail(tape, attended, segments, params);
}

Var paa_variant(Tape& tape, const Var& segments, const Var& query_source, const PaaParams& params, Mat* weights) {
  if (segments.rows() < 1) throw Error("paa: no segments");
  if (segments.cols() != params.w4.out()) {
    throw Error("paa: segment dimension r must equal d_v for the max-pool residual");
  }
  const Eigen::Index m = segments.rows();
  switch (params.variant) {
    case AttentionVariant::Paa:
      return paa(tape, segments, query_source, params, weights);
    case AttentionVariant::Mean: {
      if (weights != nullptr) *weights = Mat::Constant(1, m, 1.0 / static_cast<double>(m));
      return attention_tail(tape, ag::mean_rows(params.w3(tape, segments)), segments, params);
    }
    case AttentionVariant::Simple: {
      const std::array<Var, 2> joined{repeat_row(tape, query_source, m), segments};
      const Var scores = ag::transpose(params.score(tape, ag::concat_cols(joined)));
      const Var w = ag::softmax_rows(scores);
      if (weights != nullptr) *weights = w.value();
      return attention_tail(tape, ag::matmul(w, params.w3(tape, segments)), segments, params);
    }
    case AttentionVariant::ConcatSa:
    case AttentionVariant::SumSa: {
      Var fused;
      if (params.variant == AttentionVariant::ConcatSa) {
        const std::array<Var, 2> joined{repeat_row(tape, query_source, m), segments};
        fused = params.fuse(tape, ag::concat_cols(joined));
      } else {
        fused = ag::add_row(segments, params.fuse(tape, query_source));
      }
      const Var attended = scaled_dot_attention(params.w_query(tape, fused), params.w2(tape, fused),
                                                params.w3(tape, fused), weights);
      return attention_tail(tape, ag::mean_rows(attended), segments, params);
    }
  }
  throw Error("paa: unknown attention variant");
}

IntensiveParams IntensiveParams::create(ParamStore& store, const IntensiveConfig& config, int d_frame,
                                        int query_dim, Rng& rng) {
  IntensiveParams p;
  p.frame_map = Affine::create(store, "intensive.map", d_frame, config.d_map, rng);
  p.windows = config.windows;
  std::sort(p.windows.begin(), p.windows.end());
  p.windows.erase(std::unique(p.windows.begin(), p.windows.end()), p.windows.end());
  p.stride = config.stride;
  for (int n : p.windows) {
    p.convs.push_back(Affine::create(store, "intensive.conv" + std::to_string(n), n * config.d_map,
                                     config.filters, rng));
    p.attention.push_back(
        PaaParams::create(store, "intensive.attn" + std::to_string(n), config, query_dim, rng));
  }
  if (!config.dependent) {
    p.constant_query = &store.add("intensive.query", 1, query_dim);
    init_fan_in(*p.constant_query, static_cast<std::size_t>(query_dim), rng);
  }
  return p;
}

int IntensiveParams::output_dim() const {
  return static_cast<int>(attention.size()) * attention.front().w4.out();
}

Var map_frames(Tape& tape, const Var& frames, const Affine& frame_map) { return frame_map(tape, frames); }

Var intensive_encode(Tape& tape, const Var& frames, const Var& p, const IntensiveParams& params,
                     std::vector<Mat>* weights) {
  const Var query = params.constant_query != nullptr ? tape.param(*params.constant_query) : p;
  if (!query.valid()) throw Error("intensive branch needs the previewing feature p");
  const Var mapped = map_frames(tape, frames, params.frame_map);
  std::vector<Var> outputs;
  outputs.reserve(params.windows.size());
  if (weights != nullptr) weights->assign(params.windows.size(), Mat());
  for (std::size_t i = 0; i < params.windows.size(); ++i) {
    const Var segments = segment_conv(tape, mapped, params.windows[i], params.stride, params.convs[i]);
    outputs.push_back(paa_variant(tape, segments, query, params.attention[i],
                                  weights != nullptr ? &(*weights)[i] : nullptr));
  }
  return ag::concat_cols(outputs);
}

}  // namespace vidret
