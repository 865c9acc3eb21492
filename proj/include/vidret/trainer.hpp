#pragma once

#include "vidret/evaluator.hpp"
#include "vidret/model.hpp"

#include <filesystem>
#include <functional>
#include <limits>

namespace vidret {

struct Checkpoint;

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::filesystem::path snapshot)
      : Error(what), snapshot_(std::move(snapshot)) {}
  const std::filesystem::path& snapshot() const { return snapshot_; }

 private:
  std::filesystem::path snapshot_;
};

// ---- optimizer -------------------------------------------------------------

struct OptimizerState {
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::string> names;  // parameter order
  std::vector<Mat> m;
  std::vector<Mat> v;
};

OptimizerState make_optimizer_state(const ParamStore& params, double beta1 = 0.9, double beta2 = 0.999,
                                    double eps = 1e-8);
OptimizerState make_optimizer_state(const ParamStore& params, const TrainConfig& config);

/// One bias-corrected Adam update from Parameter::grad. Throws on a
/// non-finite gradient before touching any parameter.
void adam_step(ParamStore& params, OptimizerState& state, double lr);

// ---- schedule --------------------------------------------------------------

/// Maximize-style plateau tracking: the learning rate halves on every
/// `lr_patience`-th consecutive epoch without strict improvement and training
/// stops on the `stop_patience`-th.
class PlateauSchedule {
 public:
  PlateauSchedule(int lr_patience, int stop_patience);

  struct Decision {
    bool improved = false;
    bool halve_lr = false;
    bool stop = false;
  };
  Decision observe(double objective);

  double best() const { return best_; }
  int since_improvement() const { return since_improve_; }
  int since_halving() const { return since_lr_; }
  void restore(double best, int since_improve, int since_lr);

 private:
  int lr_patience_;
  int stop_patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  int since_improve_ = 0;
  int since_lr_ = 0;
};

// ---- training --------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double objective = 0.0;  // maximized
  std::optional<RankMetrics> val_metrics;
  double lr = 0.0;  // used during this epoch
  bool improved = false;
  bool lr_halved = false;
  double seconds = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::vector<int> lr_halvings;  // epochs whose end triggered a halving
  int best_epoch = 0;
  double best_objective = -std::numeric_limits<double>::infinity();
  bool early_stopped = false;
};

/// Resumable trainer state stored next to the parameters in a checkpoint.
struct TrainingState {
  int epoch = 0;  // last completed epoch
  double lr = 0.0;
  double best_objective = -std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int since_improve = 0;
  int since_lr = 0;
  std::string rng_state;
};

struct TrainOptions {
  /// Checkpoints (best.ckpt, last.ckpt) and snapshots go here; empty keeps
  /// everything in memory.
  std::filesystem::path out_dir;
  /// Replaces the validation objective (larger is better).
  std::function<double(int epoch, const Model& model)> objective;
  /// Called after every epoch; returning false ends training.
  std::function<bool(const EpochRecord&)> on_epoch;
  /// Continue from a previous run.
  const Checkpoint* resume = nullptr;
  /// Leave the model at its best-objective parameters instead of the last ones.
  bool restore_best = false;
};

struct TrainResult {
  TrainingLog log;
  std::filesystem::path best_checkpoint;  // empty without out_dir
  OptimizerState optimizer;
  TrainingState state;
};

TrainResult train(Model& model, const Corpus& corpus, const TrainOptions& options = {});

/// Mean loss over the split's batches without updating anything.
double validation_loss(const Model& model, const CorpusSplit& split, std::size_t batch_size, std::uint64_t seed);

// ---- gradient check --------------------------------------------------------

struct GradCheckGroup {
  std::string name;
  std::size_t coords = 0;
  double max_rel = 0.0;
  double mean_rel = 0.0;
  double max_abs = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  std::size_t coords = 0;
  double max_rel = 0.0;
  double mean_rel = 0.0;
  double seconds = 0.0;
};

using LossFn = std::function<Var(Tape&)>;

/// Central differences on every trainable coordinate against the taped
/// gradient. Relative error = |a - n| / max(|a|, |n|, floor).
GradCheckReport gradient_check(ParamStore& params, const LossFn& loss, double eps = 1e-5, double floor = 1e-6);

/// Loss of the model on the first `pairs` captions of a split.
LossFn batch_loss_fn(const Model& model, const CorpusSplit& split, std::size_t pairs);

}  // namespace vidret
