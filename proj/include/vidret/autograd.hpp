#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records every intermediate value produced by the ops below together
// with a closure that pushes the output gradient back to the inputs. Values
// are row-oriented: a sequence of feature vectors is a (length x dim) matrix.

#include "vidret/params.hpp"

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

namespace vidret {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat&)>;

  /// With grad disabled no closures are kept and backward() is an error.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Mat value);
  /// Leaf bound to a parameter. Reusing a parameter yields the same node.
  Var param(Parameter& p);

  /// Records an op output. `inputs` decides whether the node needs a gradient.
  Var record(Mat value, std::initializer_list<Var> inputs, Backward fn);
  Var record(Mat value, std::span<const Var> inputs, Backward fn);

  const Mat& value(const Var& v) const { return nodes_[v.id()].value; }
  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }

  /// Adds g into the gradient of v (no-op for constants).
  void accumulate(const Var& v, const Mat& g);

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates to all leaves;
  /// parameter leaves add their gradient into Parameter::grad.
  void backward(const Var& out);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

namespace ag {

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
/// 1 - a
Var one_minus(const Var& a);
/// Adds a 1 x cols row to every row of a.
Var add_row(const Var& a, const Var& row);
/// x W + b with b broadcast over rows.
Var affine(const Var& x, const Var& w, const Var& b);

Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var softmax_rows(const Var& a);

Var sum(const Var& a);
Var mean_rows(const Var& a);
/// Column-wise max over rows; gradient flows to the first maximizing row.
Var max_rows(const Var& a);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);

Var gather_rows(const Var& table, std::span<const int> indices);

/// Sliding windows of `window` consecutive rows with the given stride, each
/// flattened to one row (tap-major). Inputs shorter than the window are
/// zero-padded up to it.
Var unfold(const Var& a, Eigen::Index window, Eigen::Index stride);

/// Row-wise layer normalization followed by per-column scale and shift.
Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps);

/// Scales each row to unit L2 norm; rows with norm < 1e-12 become zero.
Var normalize_rows(const Var& a);

/// S(i, j) = cosine(a_i, b_j).
Var cosine_matrix(const Var& a, const Var& b);
/// S(i, j) = sum_k min(a_ik, b_jk) / sum_k max(a_ik, b_jk); 0 when the
/// denominator vanishes.
Var jaccard_matrix(const Var& a, const Var& b);

/// Hardest-negative bidirectional hinge over a square similarity matrix whose
/// rows are videos and columns captions. `positive(i, j)` marks pairs that
/// must not be used as negatives; the diagonal is always positive.
Var triplet_hardest(const Var& sims, double margin,
                    const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>* positive = nullptr);

/// Mean binary cross entropy; probabilities are clamped to [1e-7, 1 - 1e-7].
Var bce(const Var& probs, const Mat& targets);

}  // namespace ag
}  // namespace vidret
