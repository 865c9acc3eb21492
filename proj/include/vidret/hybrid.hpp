#pragma once

// Hybrid spaces: a latent space scored by cosine similarity and a concept
// space (sigmoid probabilities) scored by generalized Jaccard similarity,
// blended as alpha * latent + (1 - alpha) * concept. One space is learned per
// video branch and the retrieval score sums the two.

#include "vidret/config.hpp"
#include "vidret/layers.hpp"

#include <span>

namespace vidret {

using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

double cosine_sim(std::span<const double> a, std::span<const double> b);
double jaccard_sim(std::span<const double> a, std::span<const double> b);

inline double cosine_sim(const RowVec& a, const RowVec& b) {
  return cosine_sim(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                    std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}
inline double jaccard_sim(const RowVec& a, const RowVec& b) {
  return jaccard_sim(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                     std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

/// Bidirectional hardest-negative hinge, rows = videos, columns = captions.
double triplet_loss(const Mat& sims, double margin, const BoolMat* positive = nullptr);
double bce_loss(const Mat& probs, const Mat& targets);

struct HybridSpace {
  double alpha = 0.6;
  Affine video_latent;
  Affine video_concept;
  Affine text_latent;
  Affine text_concept;

  /// `shared_text` reuses another space's text projections.
  static HybridSpace create(ParamStore& store, const std::string& name, int video_dim, int text_dim,
                            const HybridConfig& config, Rng& rng, const HybridSpace* shared_text = nullptr);
};

struct Projection {
  Var latent;   // rows x d_lat
  Var probs;    // rows x K, in (0, 1)
};

Projection project_video(Tape& tape, const Var& video, const HybridSpace& space);
Projection project_text(Tape& tape, const Var& text, const HybridSpace& space);

/// alpha * cos(f(v), f(s)) + (1 - alpha) * jaccard(g(v), g(s)) for one pair.
double hybrid_sim(const RowVec& video, const RowVec& text, const HybridSpace& space);

/// Sum of the per-space hybrid similarities; a null space is skipped.
double total_sim(const RowVec& p, const RowVec& g, const RowVec& text, const HybridSpace* preview_space,
                 const HybridSpace* intensive_space);

struct LossValue {
  double triplet_lat = 0.0;
  double triplet_con = 0.0;
  double bce_con = 0.0;

  double total() const { return triplet_lat + triplet_con + bce_con; }
  LossValue& operator+=(const LossValue& o) {
    triplet_lat += o.triplet_lat;
    triplet_con += o.triplet_con;
    bce_con += o.bce_con;
    return *this;
  }
};

struct SpaceLoss {
  Var value;        // weighted sum, 1 x 1
  LossValue parts;  // unweighted terms
};

/// Loss of one hybrid space on a batch: latent triplet + concept triplet +
/// BCE of the video-side and text-side concept probabilities.
SpaceLoss space_loss(Tape& tape, const Var& videos, const Var& texts, const Mat& concept_targets,
                     const HybridSpace& space, const LossConfig& config, const BoolMat* positive = nullptr);

}  // namespace vidret
