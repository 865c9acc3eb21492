#pragma once

#include "vidret/autograd.hpp"

#include <string>

namespace vidret {

/// y = x W + b, W: in x out, b: 1 x out.
struct Affine {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static Affine create(ParamStore& store, const std::string& name, int in, int out, Rng& rng);

  Var operator()(Tape& tape, const Var& x) const;
  int in() const { return static_cast<int>(weight->value.rows()); }
  int out() const { return static_cast<int>(weight->value.cols()); }
  bool valid() const { return weight != nullptr; }
};

struct LayerNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  double eps = 1e-5;

  static LayerNorm create(ParamStore& store, const std::string& name, int dim, double eps);
  Var operator()(Tape& tape, const Var& x) const;
};

/// Gated recurrent unit with sigmoid update/reset gates and a tanh candidate;
/// the reset gate scales the previous state before its recurrent transform:
///   z = s(x Wz + h Uz + bz), r = s(x Wr + h Ur + br)
///   n = tanh(x Wn + (r * h) Un + bn),  h' = z * h + (1 - z) * n
struct Gru {
  Parameter* w_in = nullptr;  // in x 3h, gate order [z r n]
  Parameter* u_zr = nullptr;  // h x 2h
  Parameter* u_n = nullptr;   // h x h
  Parameter* bias = nullptr;  // 1 x 3h

  static Gru create(ParamStore& store, const std::string& name, int in, int hidden, Rng& rng);

  int hidden() const { return static_cast<int>(u_n->value.rows()); }
  int in() const { return static_cast<int>(w_in->value.rows()); }

  /// Hidden states (m x h) in input order. With `reverse` the sequence is
  /// consumed from the last row to the first, so row t summarizes rows t..m-1.
  Var run(Tape& tape, const Var& x, bool reverse) const;
};

struct BiGru {
  Gru forward;
  Gru backward;

  static BiGru create(ParamStore& store, const std::string& name, int in, int hidden, Rng& rng);
  int hidden() const { return forward.hidden(); }

  /// m x 2h, row t = [forward state t | backward state t].
  Var run(Tape& tape, const Var& x) const;
};

}  // namespace vidret
