#include "vidret/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>

namespace vidret {

const Mat& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = grad_enabled_ && p.trainable;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Mat value, std::initializer_list<Var> inputs, Backward fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(Mat value, std::span<const Var> inputs, Backward fn) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const auto& v : inputs) {
      if (nodes_[v.id()].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(const Var& v, const Mat& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& out) {
  if (!grad_enabled_) throw Error("backward() on a tape with gradients disabled");
  if (out.rows() != 1 || out.cols() != 1) throw Error("backward() needs a scalar output");
  if (!nodes_[out.id()].requires_grad) return;
  nodes_[out.id()].grad = Mat::Ones(1, 1);
  for (std::size_t i = out.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) {
      // The closure may only touch nodes with smaller ids, so `n` stays valid.
      n.backward(*this, n.grad);
    } else if (n.param != nullptr) {
      n.param->grad += n.grad;
    }
  }
}

namespace ag {
namespace {

Tape& tape_of(const Var& v) { return *v.tape(); }

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()) + ")");
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw Error("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                std::to_string(b.rows()) + ")");
  }
  return tape_of(a).record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g * b.value().transpose());
    t.accumulate(b, a.value().transpose() * g);
  });
}

Var transpose(const Var& a) {
  return tape_of(a).record(a.value().transpose(), {a},
                           [a](Tape& t, const Mat& g) { t.accumulate(a, g.transpose()); });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return tape_of(a).record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return tape_of(a).record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return tape_of(a).record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g.cwiseProduct(b.value()));
    t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var scale(const Var& a, double c) {
  return tape_of(a).record(a.value() * c, {a}, [a, c](Tape& t, const Mat& g) { t.accumulate(a, g * c); });
}

Var one_minus(const Var& a) {
  Mat v = (1.0 - a.value().array()).matrix();
  return tape_of(a).record(std::move(v), {a}, [a](Tape& t, const Mat& g) { t.accumulate(a, -g); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw Error("add_row: bias shape mismatch");
  Mat v = a.value().rowwise() + row.value().row(0);
  return tape_of(a).record(std::move(v), {a, row}, [a, row](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(row, g.colwise().sum());
  });
}

Var affine(const Var& x, const Var& w, const Var& b) { return add_row(matmul(x, w), b); }

Var sigmoid(const Var& a) {
  Mat y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  Mat y_copy = y;
  return tape_of(a).record(std::move(y), {a}, [a, y = std::move(y_copy)](Tape& t, const Mat& g) {
    t.accumulate(a, (g.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var tanh(const Var& a) {
  Mat y = a.value().array().tanh().matrix();
  Mat y_copy = y;
  return tape_of(a).record(std::move(y), {a}, [a, y = std::move(y_copy)](Tape& t, const Mat& g) {
    t.accumulate(a, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var relu(const Var& a) {
  Mat y = a.value().cwiseMax(0.0);
  return tape_of(a).record(std::move(y), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var softmax_rows(const Var& a) {
  Mat y(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double mx = a.value().row(r).maxCoeff();
    y.row(r) = (a.value().row(r).array() - mx).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  Mat y_copy = y;
  return tape_of(a).record(std::move(y), {a}, [a, y = std::move(y_copy)](Tape& t, const Mat& g) {
    Mat dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      dx.row(r) = (y.row(r).array() * (g.row(r).array() - dot)).matrix();
    }
    t.accumulate(a, dx);
  });
}

Var sum(const Var& a) {
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  return tape_of(a).record(std::move(v), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, Mat::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean_rows(const Var& a) {
  const double n = static_cast<double>(a.rows());
  Mat v = a.value().colwise().sum() / n;
  return tape_of(a).record(std::move(v), {a}, [a, n](Tape& t, const Mat& g) {
    t.accumulate(a, g.replicate(a.rows(), 1) / n);
  });
}

Var max_rows(const Var& a) {
  const Eigen::Index cols = a.cols();
  Mat v(1, cols);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(cols));
  for (Eigen::Index c = 0; c < cols; ++c) {
    Eigen::Index r = 0;
    v(0, c) = a.value().col(c).maxCoeff(&r);
    arg[static_cast<std::size_t>(c)] = r;
  }
  return tape_of(a).record(std::move(v), {a}, [a, arg = std::move(arg)](Tape& t, const Mat& g) {
    Mat dx = Mat::Zero(a.rows(), a.cols());
    for (Eigen::Index c = 0; c < a.cols(); ++c) dx(arg[static_cast<std::size_t>(c)], c) = g(0, c);
    t.accumulate(a, dx);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw Error("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Mat v(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape_of(parts[0]).record(std::move(v), parts, [inputs](Tape& t, const Mat& g) {
    Eigen::Index o = 0;
    for (const auto& p : inputs) {
      t.accumulate(p, g.middleCols(o, p.cols()));
      o += p.cols();
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw Error("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Mat v(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape_of(parts[0]).record(std::move(v), parts, [inputs](Tape& t, const Mat& g) {
    Eigen::Index o = 0;
    for (const auto& p : inputs) {
      t.accumulate(p, g.middleRows(o, p.rows()));
      o += p.rows();
    }
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw Error("slice_rows: out of range");
  Mat v = a.value().middleRows(start, count);
  return tape_of(a).record(std::move(v), {a}, [a, start, count](Tape& t, const Mat& g) {
    Mat dx = Mat::Zero(a.rows(), a.cols());
    dx.middleRows(start, count) = g;
    t.accumulate(a, dx);
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw Error("slice_cols: out of range");
  Mat v = a.value().middleCols(start, count);
  return tape_of(a).record(std::move(v), {a}, [a, start, count](Tape& t, const Mat& g) {
    Mat dx = Mat::Zero(a.rows(), a.cols());
    dx.middleCols(start, count) = g;
    t.accumulate(a, dx);
  });
}

Var gather_rows(const Var& table, std::span<const int> indices) {
  Mat v(static_cast<Eigen::Index>(indices.size()), table.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= table.rows()) throw Error("gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(indices[i]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return tape_of(table).record(std::move(v), {table}, [table, idx = std::move(idx)](Tape& t, const Mat& g) {
    Mat dx = Mat::Zero(table.rows(), table.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) dx.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(table, dx);
  });
}

Var unfold(const Var& a, Eigen::Index window, Eigen::Index stride) {
  if (window < 1 || stride < 1) throw Error("unfold: window and stride must be >= 1");
  const Eigen::Index m = a.rows();
  const Eigen::Index c = a.cols();
  const Eigen::Index padded = std::max(m, window);
  const Eigen::Index out_rows = (padded - window) / stride + 1;
  Mat v = Mat::Zero(out_rows, window * c);
  for (Eigen::Index o = 0; o < out_rows; ++o) {
    for (Eigen::Index k = 0; k < window; ++k) {
      const Eigen::Index src = o * stride + k;
      if (src < m) v.block(o, k * c, 1, c) = a.value().row(src);
    }
  }
  return tape_of(a).record(std::move(v), {a}, [a, window, stride, out_rows](Tape& t, const Mat& g) {
    const Eigen::Index rows = a.rows();
    const Eigen::Index cols = a.cols();
    Mat dx = Mat::Zero(rows, cols);
    for (Eigen::Index o = 0; o < out_rows; ++o) {
      for (Eigen::Index k = 0; k < window; ++k) {
        const Eigen::Index src = o * stride + k;
        if (src < rows) dx.row(src) += g.block(o, k * cols, 1, cols);
      }
    }
    t.accumulate(a, dx);
  });
}

Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index rows = a.rows();
  const Eigen::Index cols = a.cols();
  if (gamma.rows() != 1 || gamma.cols() != cols || beta.rows() != 1 || beta.cols() != cols) {
    throw Error("layer_norm_rows: scale/shift shape mismatch");
  }
  Mat xhat(rows, cols);
  Vec inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mu = a.value().row(r).mean();
    const double var = (a.value().row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (a.value().row(r).array() - mu) * inv_std(r);
  }
  Mat y = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  return tape_of(a).record(
      std::move(y), {a, gamma, beta},
      [a, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Mat& g) {
        const Eigen::Index n = xhat.cols();
        t.accumulate(gamma, (g.array() * xhat.array()).colwise().sum().matrix());
        t.accumulate(beta, g.colwise().sum());
        Mat dxhat = (g.array().rowwise() * gamma.value().row(0).array()).matrix();
        Mat dx(xhat.rows(), n);
        for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
          const double mean_d = dxhat.row(r).mean();
          const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / static_cast<double>(n);
          dx.row(r) = ((dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx) * inv_std(r)).matrix();
        }
        t.accumulate(a, dx);
      });
}

Var normalize_rows(const Var& a) {
  static std::atomic<bool> warned{false};
  const Eigen::Index rows = a.rows();
  Vec norms(rows);
  Mat y = Mat::Zero(rows, a.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    norms(r) = a.value().row(r).norm();
    if (norms(r) < 1e-12) {
      if (!warned.exchange(true)) {
        std::cerr << "vidret: degenerate (near-zero) embedding; cosine similarity set to 0\n";
      }
      continue;
    }
    y.row(r) = a.value().row(r) / norms(r);
  }
  Mat y_copy = y;
  return tape_of(a).record(std::move(y), {a},
                           [a, y = std::move(y_copy), norms = std::move(norms)](Tape& t, const Mat& g) {
                             Mat dx = Mat::Zero(y.rows(), y.cols());
                             for (Eigen::Index r = 0; r < y.rows(); ++r) {
                               if (norms(r) < 1e-12) continue;
                               const double dot = g.row(r).dot(y.row(r));
                               dx.row(r) = (g.row(r) - dot * y.row(r)) / norms(r);
                             }
                             t.accumulate(a, dx);
                           });
}

Var cosine_matrix(const Var& a, const Var& b) {
  return matmul(normalize_rows(a), transpose(normalize_rows(b)));
}

Var jaccard_matrix(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw Error("jaccard_matrix: dimension mismatch");
  const Eigen::Index na = a.rows();
  const Eigen::Index nb = b.rows();
  Mat num(na, nb);
  Mat den(na, nb);
  for (Eigen::Index i = 0; i < na; ++i) {
    for (Eigen::Index j = 0; j < nb; ++j) {
      num(i, j) = a.value().row(i).cwiseMin(b.value().row(j)).sum();
      den(i, j) = a.value().row(i).cwiseMax(b.value().row(j)).sum();
    }
  }
  Mat s = (den.array() > 0.0).select(num.array() / den.array(), 0.0).matrix();
  return tape_of(a).record(
      std::move(s), {a, b}, [a, b, num = std::move(num), den = std::move(den)](Tape& t, const Mat& g) {
        const Mat& av = a.value();
        const Mat& bv = b.value();
        Mat da = Mat::Zero(av.rows(), av.cols());
        Mat db = Mat::Zero(bv.rows(), bv.cols());
        for (Eigen::Index i = 0; i < av.rows(); ++i) {
          for (Eigen::Index j = 0; j < bv.rows(); ++j) {
            const double d = den(i, j);
            if (d <= 0.0 || g(i, j) == 0.0) continue;
            const double dnum = g(i, j) / d;                // dS/dN
            const double dden = -g(i, j) * num(i, j) / (d * d);  // dS/dD
            for (Eigen::Index k = 0; k < av.cols(); ++k) {
              const double x = av(i, k);
              const double y = bv(j, k);
              if (x < y) {
                da(i, k) += dnum;
                db(j, k) += dden;
              } else if (x > y) {
                da(i, k) += dden;
                db(j, k) += dnum;
              } else {
                // tie: split the subgradient evenly
                da(i, k) += 0.5 * (dnum + dden);
                db(j, k) += 0.5 * (dnum + dden);
              }
            }
          }
        }
        t.accumulate(a, da);
        t.accumulate(b, db);
      });
}

Var triplet_hardest(const Var& sims, double margin,
                    const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>* positive) {
  const Eigen::Index n = sims.rows();
  if (sims.cols() != n) throw Error("triplet_hardest: similarity matrix must be square");
  if (n < 2) throw Error("triplet_hardest: batch size must be >= 2");
  if (positive != nullptr && (positive->rows() != n || positive->cols() != n)) {
    throw Error("triplet_hardest: positive mask shape mismatch");
  }
  const Mat& s = sims.value();
  auto is_pos = [&](Eigen::Index i, Eigen::Index j) {
    return i == j || (positive != nullptr && (*positive)(i, j));
  };
  // (anchor, hardest index, active) per direction
  std::vector<Eigen::Index> hard_caption(static_cast<std::size_t>(n), -1);
  std::vector<Eigen::Index> hard_video(static_cast<std::size_t>(n), -1);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!is_pos(i, j) && s(i, j) > best) {
        best = s(i, j);
        hard_caption[static_cast<std::size_t>(i)] = j;
      }
    }
    if (hard_caption[static_cast<std::size_t>(i)] >= 0) {
      const double h = margin + best - s(i, i);
      if (h > 0.0) total += h; else hard_caption[static_cast<std::size_t>(i)] = -1;
    }
    best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) {
      if (!is_pos(k, i) && s(k, i) > best) {
        best = s(k, i);
        hard_video[static_cast<std::size_t>(i)] = k;
      }
    }
    if (hard_video[static_cast<std::size_t>(i)] >= 0) {
      const double h = margin + best - s(i, i);
      if (h > 0.0) total += h; else hard_video[static_cast<std::size_t>(i)] = -1;
    }
  }
  Mat v(1, 1);
  v(0, 0) = total / static_cast<double>(n);
  return tape_of(sims).record(
      std::move(v), {sims},
      [sims, n, hard_caption = std::move(hard_caption), hard_video = std::move(hard_video)](Tape& t, const Mat& g) {
        const double w = g(0, 0) / static_cast<double>(n);
        Mat ds = Mat::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
          const Eigen::Index j = hard_caption[static_cast<std::size_t>(i)];
          if (j >= 0) {
            ds(i, j) += w;
            ds(i, i) -= w;
          }
          const Eigen::Index k = hard_video[static_cast<std::size_t>(i)];
          if (k >= 0) {
            ds(k, i) += w;
            ds(i, i) -= w;
          }
        }
        t.accumulate(sims, ds);
      });
}

Var bce(const Var& probs, const Mat& targets) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols()) {
    throw Error("bce: prediction/target shape mismatch");
  }
  static constexpr double lo = 1e-7;
  static constexpr double hi = 1.0 - 1e-7;
  const Mat& p = probs.value();
  Mat pc = p.cwiseMax(lo).cwiseMin(hi);
  const double count = static_cast<double>(p.size());
  const double loss =
      -(targets.array() * pc.array().log() + (1.0 - targets.array()) * (1.0 - pc.array()).log()).sum() / count;
  Mat v(1, 1);
  v(0, 0) = loss;
  return tape_of(probs).record(
      std::move(v), {probs}, [probs, targets, pc = std::move(pc), count](Tape& t, const Mat& g) {
        const Mat& raw = probs.value();
        Mat dp = (-(targets.array() / pc.array()) + (1.0 - targets.array()) / (1.0 - pc.array())) *
                 (g(0, 0) / count);
        dp = ((raw.array() < lo) || (raw.array() > hi)).select(0.0, dp.array()).matrix();
        t.accumulate(probs, dp);
      });
}

}  // namespace ag
}  // namespace vidret
