#include "vidret/hybrid.hpp"

#include <atomic>
#include <cmath>
#include <iostream>

namespace vidret {

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  static std::atomic<bool> warned{false};
  if (a.size() != b.size()) throw Error("cosine_sim: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) {
    if (!warned.exchange(true)) std::cerr << "vidret: degenerate (near-zero) embedding; cosine similarity set to 0\n";
    return 0.0;
  }
  return dot / (na * nb);
}

double jaccard_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("jaccard_sim: dimension mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0.0 || b[i] < 0.0) throw Error("jaccard_sim: components must be non-negative");
    num += std::min(a[i], b[i]);
    den += std::max(a[i], b[i]);
  }
  return den > 0.0 ? num / den : 0.0;
}

double triplet_loss(const Mat& sims, double margin, const BoolMat* positive) {
  Tape tape(false);
  return ag::triplet_hardest(tape.constant(sims), margin, positive).scalar();
}

double bce_loss(const Mat& probs, const Mat& targets) {
  Tape tape(false);
  return ag::bce(tape.constant(probs), targets).scalar();
}

HybridSpace HybridSpace::create(ParamStore& store, const std::string& name, int video_dim, int text_dim,
                                const HybridConfig& config, Rng& rng, const HybridSpace* shared_text) {
  HybridSpace s;
  s.alpha = config.alpha;
  s.video_latent = Affine::create(store, name + ".video_latent", video_dim, config.d_lat, rng);
  s.video_concept = Affine::create(store, name + ".video_concept", video_dim, config.k_concepts, rng);
  if (shared_text != nullptr) {
    s.text_latent = shared_text->text_latent;
    s.text_concept = shared_text->text_concept;
  } else {
    s.text_latent = Affine::create(store, name + ".text_latent", text_dim, config.d_lat, rng);
    s.text_concept = Affine::create(store, name + ".text_concept", text_dim, config.k_concepts, rng);
  }
  return s;
}

Projection project_video(Tape& tape, const Var& video, const HybridSpace& space) {
  return {space.video_latent(tape, video), ag::sigmoid(space.video_concept(tape, video))};
}

Projection project_text(Tape& tape, const Var& text, const HybridSpace& space) {
  return {space.text_latent(tape, text), ag::sigmoid(space.text_concept(tape, text))};
}

double hybrid_sim(const RowVec& video, const RowVec& text, const HybridSpace& space) {
  Tape tape(false);
  const Projection v = project_video(tape, tape.constant(video), space);
  const Projection t = project_text(tape, tape.constant(text), space);
  const RowVec vl = v.latent.value().row(0), tl = t.latent.value().row(0);
  const RowVec vc = v.probs.value().row(0), tc = t.probs.value().row(0);
  return space.alpha * cosine_sim(vl, tl) + (1.0 - space.alpha) * jaccard_sim(vc, tc);
}

double total_sim(const RowVec& p, const RowVec& g, const RowVec& text, const HybridSpace* preview_space,
                 const HybridSpace* intensive_space) {
  double s = 0.0;
  if (preview_space != nullptr) s += hybrid_sim(p, text, *preview_space);
  if (intensive_space != nullptr) s += hybrid_sim(g, text, *intensive_space);
  return s;
}

SpaceLoss space_loss(Tape& tape, const Var& videos, const Var& texts, const Mat& concept_targets,
                     const HybridSpace& space, const LossConfig& config, const BoolMat* positive) {
  if (videos.rows() != texts.rows()) throw Error("space_loss: video and text batch sizes differ");
  if (videos.rows() < 2) throw Error("space_loss: batch size must be >= 2");
  const Projection v = project_video(tape, videos, space);
  const Projection t = project_text(tape, texts, space);

  const Var lat = ag::triplet_hardest(ag::cosine_matrix(v.latent, t.latent), config.margin, positive);
  SpaceLoss out;
  out.parts.triplet_lat = lat.scalar();
  out.value = ag::scale(lat, config.w_lat);
  if (!config.concept_terms) return out;

  const Var con = ag::triplet_hardest(ag::jaccard_matrix(v.probs, t.probs), config.margin, positive);
  const Var bce = ag::add(ag::bce(v.probs, concept_targets), ag::bce(t.probs, concept_targets));
  out.parts.triplet_con = con.scalar();
  out.parts.bce_con = bce.scalar();
  out.value = ag::add(out.value, ag::add(ag::scale(con, config.w_con_trip), ag::scale(bce, config.w_bce)));
  return out;
}

}  // namespace vidret
