#pragma once

// Shared fixtures and reference implementations for the test binaries. The
// reference code is deliberately naive: plain loops, full sorts, no Eigen
// expressions beyond element access.

#include "vidret/config.hpp"
#include "vidret/corpus.hpp"
#include "vidret/evaluator.hpp"
#include "vidret/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace vidret::testing {

inline Mat random_mat(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = d(rng);
  }
  return m;
}

inline RowVec random_row(Eigen::Index n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return random_mat(1, n, rng, lo, hi);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("vidret-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

/// Desk config shrunk further for fast unit tests.
inline Config tiny_config() {
  Config c = desk_profile();
  c.text.min_count = 1;
  c.data.synth.n_videos = 8;
  c.data.synth.n_val = 4;
  c.data.synth.n_test = 4;
  c.data.synth.m_min = 3;
  c.data.synth.m_max = 6;
  c.train.batch_size = 4;
  c.train.max_epochs = 3;
  c.train.lr = 1e-3;
  return c;
}

inline Caption make_caption(std::string sid, std::string vid, const std::string& text) {
  Caption c;
  c.sentence_id = std::move(sid);
  c.video_id = std::move(vid);
  c.tokens = tokenize(text);
  return c;
}

// ---- reference implementations ----------------------------------------------

/// Valid strided cross-correlation of `x` (m x d) with a bank of filters
/// `w` ((n*d) x r, tap-major rows) plus bias, then ReLU; zero-pads m up to n.
inline Mat naive_segment_conv(const Mat& x, int n, int stride, const Mat& w, const RowVec& b) {
  const Eigen::Index m = x.rows(), d = x.cols(), r = w.cols();
  const Eigen::Index padded = std::max<Eigen::Index>(m, n);
  const Eigen::Index count = (padded - n) / stride + 1;
  Mat out(count, r);
  for (Eigen::Index s = 0; s < count; ++s) {
    for (Eigen::Index f = 0; f < r; ++f) {
      double acc = b(f);
      for (int tap = 0; tap < n; ++tap) {
        const Eigen::Index t = s * stride + tap;
        for (Eigen::Index k = 0; k < d; ++k) {
          const double v = t < m ? x(t, k) : 0.0;
          acc += v * w(tap * d + k, f);
        }
      }
      out(s, f) = acc > 0.0 ? acc : 0.0;
    }
  }
  return out;
}

/// Enumerates every negative explicitly; rows are videos, columns captions.
inline double brute_force_triplet(const Mat& s, double margin) {
  const Eigen::Index b = s.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    double worst_caption = 0.0, worst_video = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == i) continue;
      worst_caption = std::max(worst_caption, std::max(0.0, margin + s(i, j) - s(i, i)));
      worst_video = std::max(worst_video, std::max(0.0, margin + s(j, i) - s(i, i)));
    }
    total += worst_caption + worst_video;
  }
  return total / static_cast<double>(b);
}

struct OracleMetrics {
  double r1, r5, r10, medr, map;
};

/// Full sort of (score desc, column asc) pairs and a linear scan per query.
inline OracleMetrics brute_force_rank_metrics(const Mat& scores, const std::vector<std::vector<bool>>& relevant) {
  const Eigen::Index q = scores.rows(), n = scores.cols();
  std::vector<double> firsts;
  double hits1 = 0, hits5 = 0, hits10 = 0, ap_sum = 0;
  for (Eigen::Index i = 0; i < q; ++i) {
    std::vector<std::pair<double, Eigen::Index>> items;
    for (Eigen::Index j = 0; j < n; ++j) items.emplace_back(scores(i, j), j);
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    double first = 0, found = 0, precision_sum = 0, total_rel = 0;
    for (Eigen::Index j = 0; j < n; ++j) total_rel += relevant[i][j] ? 1 : 0;
    for (std::size_t k = 0; k < items.size(); ++k) {
      if (!relevant[i][items[k].second]) continue;
      found += 1;
      if (first == 0) first = static_cast<double>(k + 1);
      precision_sum += found / static_cast<double>(k + 1);
    }
    firsts.push_back(first);
    hits1 += first <= 1;
    hits5 += first <= 5;
    hits10 += first <= 10;
    ap_sum += precision_sum / total_rel;
  }
  std::sort(firsts.begin(), firsts.end());
  const double nq = static_cast<double>(q);
  return {100.0 * hits1 / nq, 100.0 * hits5 / nq, 100.0 * hits10 / nq, firsts[(firsts.size() - 1) / 2],
          ap_sum / nq};
}

/// Parameter count of a freshly built model from its config alone.
inline std::size_t expected_parameter_count(const Config& c, std::size_t vocab_size) {
  auto affine = [](std::size_t in, std::size_t out) { return in * out + out; };
  auto gru = [](std::size_t in, std::size_t h) { return in * 3 * h + h * 2 * h + h * h + 3 * h; };
  const std::size_t dw = c.text.d_word, ht = c.text.h_text, rt = c.text.r_text;
  std::size_t text = vocab_size * dw + 2 * gru(dw, ht);
  for (int w : c.text.windows) text += affine(static_cast<std::size_t>(w) * 2 * ht, rt);
  std::size_t d_text = vocab_size + 2 * ht + c.text.windows.size() * rt;
  if (c.text.external_enabled) d_text += static_cast<std::size_t>(c.text.external_dim);

  const std::size_t d = 2 * static_cast<std::size_t>(c.preview.hidden);
  const std::size_t df = c.d_frame;
  std::size_t preview = 0;
  if (c.branches != Branches::Intensive) {
    preview = c.preview.kind == PreviewKind::BiGru ? 2 * gru(df, d / 2) : affine(df, d);
  }

  std::size_t intensive = 0;
  const std::size_t dm = c.intensive.d_map, r = c.intensive.filters, dk = c.intensive.d_k, dv = c.intensive.d_v;
  if (c.branches != Branches::Preview) {
    intensive += affine(df, dm);
    for (int n : c.intensive.windows) {
      intensive += affine(static_cast<std::size_t>(n) * dm, r);
      switch (c.intensive.variant) {
        case AttentionVariant::Paa: intensive += affine(d, dk) + affine(r, dk); break;
        case AttentionVariant::Mean: break;
        case AttentionVariant::Simple: intensive += affine(d + r, 1); break;
        case AttentionVariant::ConcatSa: intensive += affine(d + r, r) + 2 * affine(r, dk); break;
        case AttentionVariant::SumSa: intensive += affine(d, r) + 2 * affine(r, dk); break;
      }
      intensive += affine(r, dv) + affine(dv, dv) + affine(dv, 2 * dv) + affine(2 * dv, dv) + 4 * dv;
    }
    if (!c.intensive.dependent) intensive += d;
  }

  const std::size_t lat = c.hybrid.d_lat, k = c.hybrid.k_concepts;
  auto space = [&](std::size_t video_dim, bool text_side) {
    return affine(video_dim, lat) + affine(video_dim, k) + (text_side ? affine(d_text, lat) + affine(d_text, k) : 0);
  };
  std::size_t hybrid = 0;
  const bool both = c.branches == Branches::Both;
  if (c.branches != Branches::Intensive) hybrid += space(d, true);
  if (c.branches != Branches::Preview) {
    hybrid += space(c.intensive.windows.size() * dv, !(both && c.hybrid.share_text_proj));
  }
  return text + preview + intensive + hybrid;
}

}  // namespace vidret::testing
