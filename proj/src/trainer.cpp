#include "vidret/trainer.hpp"

#include "vidret/checkpoint.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace vidret {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string rng_to_string(const Rng& rng) {
  std::ostringstream ss;
  ss << rng;
  return ss.str();
}

void rng_from_string(Rng& rng, const std::string& s) {
  std::istringstream ss(s);
  ss >> rng;
  if (!ss) throw Error("corrupt RNG state in checkpoint");
}

constexpr std::uint64_t kBatchStream = 0x6261746368ULL;

}  // namespace

OptimizerState make_optimizer_state(const ParamStore& params, double beta1, double beta2, double eps) {
  OptimizerState s;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  for (const auto& p : params.all()) {
    s.names.push_back(p->name);
    s.m.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    s.v.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
  return s;
}

OptimizerState make_optimizer_state(const ParamStore& params, const TrainConfig& config) {
  return make_optimizer_state(params, config.beta1, config.beta2, config.adam_eps);
}

void adam_step(ParamStore& params, OptimizerState& state, double lr) {
  const auto& all = params.all();
  if (all.size() != state.names.size()) throw Error("optimizer state does not match the parameter set");
  for (std::size_t i = 0; i < all.size(); ++i) {
    const Parameter& p = *all[i];
    if (p.name != state.names[i] || p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols() ||
        state.m[i].rows() != p.value.rows() || state.m[i].cols() != p.value.cols()) {
      throw Error("optimizer state does not match parameter " + p.name);
    }
    if (p.trainable && !p.grad.allFinite()) throw Error("non-finite gradient in " + p.name);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < all.size(); ++i) {
    Parameter& p = *all[i];
    if (!p.trainable) continue;
    Mat& m = state.m[i];
    Mat& v = state.v[i];
    m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
    v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  }
}

// ---------------------------------------------------------------------------

PlateauSchedule::PlateauSchedule(int lr_patience, int stop_patience)
    : lr_patience_(lr_patience), stop_patience_(stop_patience) {
  if (lr_patience <= 0 || stop_patience <= lr_patience) {
    throw ConfigError("plateau schedule needs 0 < lr_patience < stop_patience");
  }
}

PlateauSchedule::Decision PlateauSchedule::observe(double objective) {
  Decision d;
  if (objective > best_) {
    best_ = objective;
    since_improve_ = 0;
    since_lr_ = 0;
    d.improved = true;
    return d;
  }
  ++since_improve_;
  ++since_lr_;
  if (since_lr_ == lr_patience_) {
    d.halve_lr = true;
    since_lr_ = 0;
  }
  d.stop = since_improve_ >= stop_patience_;
  return d;
}

void PlateauSchedule::restore(double best, int since_improve, int since_lr) {
  best_ = best;
  since_improve_ = since_improve;
  since_lr_ = since_lr;
}

// ---------------------------------------------------------------------------

double validation_loss(const Model& model, const CorpusSplit& split, std::size_t batch_size, std::uint64_t seed) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const Batch& b : BatchIterator(split, batch_size, seed).epoch(0)) {
    if (b.size() < 2) continue;
    Tape tape(false);
    sum += model.batch_loss(tape, split, b).total.scalar();
    ++n;
  }
  if (n == 0) throw Error("validation split has fewer than two captions");
  return sum / static_cast<double>(n);
}

TrainResult train(Model& model, const Corpus& corpus, const TrainOptions& options) {
  const TrainConfig& tc = model.config().train;
  if (corpus.train.empty() || corpus.val.empty()) throw Error("training needs non-empty train and val splits");
  if (corpus.train.captions().size() < 2) throw Error("training split needs at least two captions");

  TrainResult res;
  TrainingLog& log = res.log;
  TrainingState& state = res.state;
  res.optimizer = make_optimizer_state(model.params(), tc);
  PlateauSchedule schedule(tc.lr_patience, tc.early_stop_patience);
  Rng rng(tc.seed ^ kBatchStream);
  state.lr = tc.lr;

  if (options.resume != nullptr) {
    const Checkpoint& ck = *options.resume;
    load_parameters(model, ck);
    if (ck.optimizer) res.optimizer = *ck.optimizer;
    state = ck.state;
    if (!state.rng_state.empty()) rng_from_string(rng, state.rng_state);
    schedule.restore(state.best_objective, state.since_improve, state.since_lr);
    log.best_epoch = state.best_epoch;
    log.best_objective = state.best_objective;
  }

  const bool persist = !options.out_dir.empty();
  if (persist) std::filesystem::create_directories(options.out_dir);
  if (persist) res.best_checkpoint = options.out_dir / "best.ckpt";

  auto abort_run = [&](const std::string& why) {
    std::filesystem::path snap = persist ? options.out_dir / "nonfinite.ckpt"
                                         : std::filesystem::temp_directory_path() /
                                               ("vidret-nonfinite-" + config_hash(model.config()) + ".ckpt");
    save_checkpoint(snap, model, &res.optimizer, state);
    throw TrainingError(why + "; parameter snapshot written to " + snap.string(), snap);
  };

  std::vector<Mat> best_values;
  auto snapshot_values = [&] {
    best_values.clear();
    for (const auto& p : model.params().all()) best_values.push_back(p->value);
  };
  if (options.restore_best) snapshot_values();

  for (int epoch = state.epoch + 1; epoch <= tc.max_epochs; ++epoch) {
    const auto t0 = Clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = state.lr;

    const std::uint64_t batch_seed = rng();
    const auto batches = BatchIterator(corpus.train, static_cast<std::size_t>(tc.batch_size), batch_seed)
                             .epoch(static_cast<std::size_t>(epoch - 1));
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (const Batch& b : batches) {
      if (b.size() < 2) continue;
      Tape tape;
      model.params().zero_grad();
      const Model::BatchLoss bl = model.batch_loss(tape, corpus.train, b);
      const double loss = bl.total.scalar();
      if (!std::isfinite(loss)) abort_run("non-finite loss at epoch " + std::to_string(epoch));
      tape.backward(bl.total);
      try {
        adam_step(model.params(), res.optimizer, state.lr);
      } catch (const Error& e) {
        abort_run(std::string(e.what()) + " at epoch " + std::to_string(epoch));
      }
      loss_sum += loss;
      ++steps;
    }
    rec.train_loss = loss_sum / static_cast<double>(steps);

    if (options.objective) {
      rec.objective = options.objective(epoch, model);
    } else if (tc.monitor == Monitor::SumR) {
      rec.val_metrics = evaluate_t2v(model, corpus.val);
      rec.objective = rec.val_metrics->sumr;
    } else {
      rec.objective = -validation_loss(model, corpus.val, static_cast<std::size_t>(tc.batch_size), tc.seed);
    }

    const PlateauSchedule::Decision d = schedule.observe(rec.objective);
    rec.improved = d.improved;
    rec.lr_halved = d.halve_lr;
    state.epoch = epoch;
    state.best_objective = schedule.best();
    state.since_improve = schedule.since_improvement();
    state.since_lr = schedule.since_halving();
    state.rng_state = rng_to_string(rng);
    if (d.improved) {
      log.best_epoch = state.best_epoch = epoch;
      log.best_objective = rec.objective;
      if (options.restore_best) snapshot_values();
    }
    if (d.halve_lr) {
      state.lr *= 0.5;
      log.lr_halvings.push_back(epoch);
    }
    if (persist) {
      if (d.improved) save_checkpoint(res.best_checkpoint, model, &res.optimizer, state);
      save_checkpoint(options.out_dir / "last.ckpt", model, &res.optimizer, state);
    }
    rec.seconds = seconds_since(t0);
    log.epochs.push_back(rec);

    const bool keep_going = !options.on_epoch || options.on_epoch(rec);
    if (d.stop && tc.early_stop) {
      log.early_stopped = true;
      break;
    }
    if (!keep_going) break;
  }
  if (options.restore_best) {
    const auto& all = model.params().all();
    for (std::size_t i = 0; i < all.size(); ++i) all[i]->value = best_values[i];
  }
  return res;
}

// ---------------------------------------------------------------------------

GradCheckReport gradient_check(ParamStore& params, const LossFn& loss, double eps, double floor) {
  const auto t0 = Clock::now();
  params.zero_grad();
  {
    Tape tape(true);
    const Var l = loss(tape);
    tape.backward(l);
  }
  auto eval = [&] {
    Tape tape(false);
    return loss(tape).scalar();
  };

  GradCheckReport report;
  double rel_sum = 0.0;
  for (const auto& ptr : params.all()) {
    Parameter& p = *ptr;
    if (!p.trainable) continue;
    GradCheckGroup g;
    g.name = p.name;
    double group_sum = 0.0;
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& x = p.value.data()[i];
      const double orig = x;
      x = orig + eps;
      const double fp = eval();
      x = orig - eps;
      const double fm = eval();
      x = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double analytic = p.grad.data()[i];
      const double abs_err = std::abs(analytic - numeric);
      const double rel = abs_err / std::max({std::abs(analytic), std::abs(numeric), floor});
      g.max_rel = std::max(g.max_rel, rel);
      g.max_abs = std::max(g.max_abs, abs_err);
      group_sum += rel;
      ++g.coords;
    }
    if (g.coords > 0) g.mean_rel = group_sum / static_cast<double>(g.coords);
    report.max_rel = std::max(report.max_rel, g.max_rel);
    report.coords += g.coords;
    rel_sum += group_sum;
    report.groups.push_back(std::move(g));
  }
  if (report.coords > 0) report.mean_rel = rel_sum / static_cast<double>(report.coords);
  report.seconds = seconds_since(t0);
  return report;
}

LossFn batch_loss_fn(const Model& model, const CorpusSplit& split, std::size_t pairs) {
  if (pairs < 2 || pairs > split.captions().size()) throw Error("gradient check batch needs 2..n captions");
  Batch batch;
  for (std::size_t i = 0; i < pairs; ++i) batch.captions.push_back(i);
  return [&model, &split, batch](Tape& tape) { return model.batch_loss(tape, split, batch).total; };
}

}  // namespace vidret
