#include "vidret/layers.hpp"

#include <array>

namespace vidret {

Affine Affine::create(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
  Affine a;
  a.weight = &store.add(name + ".weight", in, out);
  a.bias = &store.add(name + ".bias", 1, out);
  init_fan_in(*a.weight, static_cast<std::size_t>(in), rng);
  return a;
}

Var Affine::operator()(Tape& tape, const Var& x) const {
  if (x.cols() != weight->value.rows()) {
    throw Error(weight->name + ": input dimension " + std::to_string(x.cols()) + " != expected " +
                std::to_string(weight->value.rows()));
  }
  return ag::affine(x, tape.param(*weight), tape.param(*bias));
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, int dim, double eps) {
  LayerNorm ln;
  ln.gamma = &store.add(name + ".gamma", 1, dim);
  ln.beta = &store.add(name + ".beta", 1, dim);
  init_constant(*ln.gamma, 1.0);
  ln.eps = eps;
  return ln;
}

Var LayerNorm::operator()(Tape& tape, const Var& x) const {
  return ag::layer_norm_rows(x, tape.param(*gamma), tape.param(*beta), eps);
}

Gru Gru::create(ParamStore& store, const std::string& name, int in, int hidden, Rng& rng) {
  Gru g;
  g.w_in = &store.add(name + ".w_in", in, 3 * hidden);
  g.u_zr = &store.add(name + ".u_zr", hidden, 2 * hidden);
  g.u_n = &store.add(name + ".u_n", hidden, hidden);
  g.bias = &store.add(name + ".bias", 1, 3 * hidden);
  init_fan_in(*g.w_in, static_cast<std::size_t>(in), rng);
  init_fan_in(*g.u_zr, static_cast<std::size_t>(hidden), rng);
  init_fan_in(*g.u_n, static_cast<std::size_t>(hidden), rng);
  return g;
}

Var Gru::run(Tape& tape, const Var& x, bool reverse) const {
  if (x.cols() != w_in->value.rows()) {
    throw Error(w_in->name + ": input dimension " + std::to_string(x.cols()) + " != expected " +
                std::to_string(w_in->value.rows()));
  }
  const Eigen::Index m = x.rows();
  const Eigen::Index h = hidden();
  if (m < 1) throw Error("GRU needs at least one time step");

  const Var projected = ag::affine(x, tape.param(*w_in), tape.param(*bias));
  const Var u_zr_v = tape.param(*u_zr);
  const Var u_n_v = tape.param(*u_n);

  Var state = tape.constant(Mat::Zero(1, h));
  std::vector<Var> states(static_cast<std::size_t>(m));
  for (Eigen::Index step = 0; step < m; ++step) {
    const Eigen::Index t = reverse ? m - 1 - step : step;
    const Var xt = ag::slice_rows(projected, t, 1);
    const Var gates = ag::sigmoid(ag::add(ag::slice_cols(xt, 0, 2 * h), ag::matmul(state, u_zr_v)));
    const Var z = ag::slice_cols(gates, 0, h);
    const Var r = ag::slice_cols(gates, h, h);
    const Var cand = ag::tanh(ag::add(ag::slice_cols(xt, 2 * h, h), ag::matmul(ag::mul(r, state), u_n_v)));
    state = ag::add(ag::mul(z, state), ag::mul(ag::one_minus(z), cand));
    states[static_cast<std::size_t>(t)] = state;
  }
  return ag::concat_rows(states);
}

BiGru BiGru::create(ParamStore& store, const std::string& name, int in, int hidden, Rng& rng) {
  BiGru b;
  b.forward = Gru::create(store, name + ".fwd", in, hidden, rng);
  b.backward = Gru::create(store, name + ".bwd", in, hidden, rng);
  return b;
}

Var BiGru::run(Tape& tape, const Var& x) const {
  const std::array<Var, 2> halves{forward.run(tape, x, false), backward.run(tape, x, true)};
  return ag::concat_cols(halves);
}

}  // namespace vidret
