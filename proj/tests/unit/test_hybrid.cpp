#include <doctest.h>

#include "support.hpp"
#include "vidret/hybrid.hpp"
#include "vidret/trainer.hpp"

using namespace vidret;
using vidret::testing::brute_force_triplet;
using vidret::testing::random_mat;
using vidret::testing::random_row;

namespace {

RowVec row(std::initializer_list<double> v) {
  RowVec r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r(i++) = x;
  return r;
}

struct SpaceFixture {
  ParamStore store;
  HybridSpace space;
  SpaceFixture(int video_dim, int text_dim, double alpha = 0.6, std::uint64_t seed = 1) {
    HybridConfig cfg;
    cfg.alpha = alpha;
    cfg.d_lat = 5;
    cfg.k_concepts = 4;
    Rng rng(seed);
    space = HybridSpace::create(store, "h", video_dim, text_dim, cfg, rng);
  }
};

RowVec latent(const RowVec& x, const Affine& a) { return x * a.weight->value + a.bias->value; }
RowVec probs(const RowVec& x, const Affine& a) {
  return latent(x, a).unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
}

}  // namespace

TEST_SUITE("hybrid") {
  TEST_CASE("cosine examples") {
    const RowVec a = row({1, 2});
    CHECK(cosine_sim(a, a) == doctest::Approx(1.0));
    CHECK(cosine_sim(row({1, 0}), row({0, 3})) == 0.0);
    CHECK(cosine_sim(a, row({2, 1})) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(cosine_sim(row({0, 0}), a) == 0.0);
    CHECK_THROWS_AS(cosine_sim(a, row({1, 2, 3})), Error);
  }

  TEST_CASE("cosine is scale invariant") {
    Rng rng(1);
    std::uniform_real_distribution<double> scale(1e-3, 1e3);
    for (int i = 0; i < 1000; ++i) {
      const RowVec a = random_row(6, rng), b = random_row(6, rng);
      const double c = scale(rng);
      CHECK(std::abs(cosine_sim(RowVec(c * a), b) - cosine_sim(a, b)) < 1e-9);
    }
  }

  TEST_CASE("generalized Jaccard examples") {
    const RowVec a = row({0.2, 0.8});
    CHECK(jaccard_sim(a, a) == 1.0);
    CHECK(jaccard_sim(row({1, 0}), row({0, 2})) == 0.0);
    CHECK(jaccard_sim(a, row({0.8, 0.2})) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(jaccard_sim(row({0, 0}), row({0, 0})) == 0.0);
    CHECK_THROWS_AS(jaccard_sim(row({-1, 0}), row({0, 0})), Error);
  }

  TEST_CASE("Jaccard is bounded, symmetric and monotone in overlap") {
    Rng rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
      const RowVec a = random_row(7, rng, 0.0, 2.0), b = random_row(7, rng, 0.0, 2.0);
      const double j = jaccard_sim(a, b);
      CHECK(j >= 0.0);
      CHECK(j <= 1.0);
      CHECK(j == jaccard_sim(b, a));
      // raise the smaller side of one coordinate towards the larger
      RowVec a2 = a, b2 = b;
      const Eigen::Index k = static_cast<Eigen::Index>(i % 7);
      if (a2(k) < b2(k)) {
        a2(k) += u(rng) * (b2(k) - a2(k));
      } else {
        b2(k) += u(rng) * (a2(k) - b2(k));
      }
      CHECK(jaccard_sim(a2, b2) >= j - 1e-15);
    }
  }

  TEST_CASE("hybrid similarity blends latent cosine and concept Jaccard") {
    Rng rng(3);
    const RowVec v = random_row(6, rng), t = random_row(9, rng);
    SpaceFixture one(6, 9, 1.0), zero(6, 9, 0.0), mid(6, 9, 0.6);
    const auto& s1 = one.space;
    CHECK(hybrid_sim(v, t, s1) ==
          doctest::Approx(cosine_sim(latent(v, s1.video_latent), latent(t, s1.text_latent))).epsilon(1e-14));
    const auto& s0 = zero.space;
    CHECK(hybrid_sim(v, t, s0) ==
          doctest::Approx(jaccard_sim(probs(v, s0.video_concept), probs(t, s0.text_concept))).epsilon(1e-14));
    const auto& s = mid.space;
    const double want = 0.6 * cosine_sim(latent(v, s.video_latent), latent(t, s.text_latent)) +
                        0.4 * jaccard_sim(probs(v, s.video_concept), probs(t, s.text_concept));
    CHECK(hybrid_sim(v, t, s) == doctest::Approx(want).epsilon(1e-14));
  }

  TEST_CASE("alpha 0.6 with both similarities at 1 gives 1") {
    SpaceFixture f(4, 4, 0.6);
    f.space.text_latent.weight->value = f.space.video_latent.weight->value;
    f.space.text_latent.bias->value = f.space.video_latent.bias->value;
    f.space.text_concept.weight->value = f.space.video_concept.weight->value;
    f.space.text_concept.bias->value = f.space.video_concept.bias->value;
    Rng rng(4);
    const RowVec x = random_row(4, rng);
    CHECK(hybrid_sim(x, x, f.space) == doctest::Approx(1.0).epsilon(1e-14));
  }

  TEST_CASE("total similarity sums the two spaces") {
    Rng rng(5);
    SpaceFixture a(3, 5, 0.6, 1), b(4, 5, 0.6, 2);
    const RowVec p = random_row(3, rng), g = random_row(4, rng), t = random_row(5, rng);
    const double sp = hybrid_sim(p, t, a.space), sg = hybrid_sim(g, t, b.space);
    CHECK(total_sim(p, g, t, &a.space, &b.space) == doctest::Approx(sp + sg).epsilon(1e-15));
    CHECK(total_sim(p, g, t, &a.space, nullptr) == sp);
    CHECK(total_sim(p, g, t, nullptr, &b.space) == sg);
    // swapping which space is first
    CHECK(total_sim(g, p, t, &b.space, &a.space) == doctest::Approx(sp + sg).epsilon(1e-15));
  }

  TEST_CASE("triplet loss examples") {
    Mat s = Mat::Constant(4, 4, -1.0);
    s.diagonal().setConstant(1.0);
    CHECK(triplet_loss(s, 0.2) == 0.0);
    CHECK(triplet_loss(Mat::Constant(5, 5, 0.3), 0.2) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK_THROWS_AS(triplet_loss(Mat::Zero(1, 1), 0.2), Error);
  }

  TEST_CASE("triplet loss matches negative enumeration") {
    Rng rng(6);
    for (int i = 0; i < 100; ++i) {
      const Eigen::Index b = 2 + i % 9;
      const Mat s = random_mat(b, b, rng);
      CHECK(std::abs(triplet_loss(s, 0.2) - brute_force_triplet(s, 0.2)) < 1e-8);
    }
  }

  TEST_CASE("positive mask removes pairs from the negatives") {
    Mat s(3, 3);
    s << 0.5, 0.9, 0.0,
         0.9, 0.5, 0.0,
         0.0, 0.0, 0.5;
    BoolMat pos = BoolMat::Identity(3, 3);
    pos(0, 1) = pos(1, 0) = true;
    // with the mask, the hardest negatives of rows 0 and 1 are the zeros
    CHECK(triplet_loss(s, 0.2, &pos) == 0.0);
    CHECK(triplet_loss(s, 0.2) > 0.0);
    const BoolMat all = BoolMat::Constant(3, 3, true);
    CHECK(triplet_loss(s, 0.2, &all) == 0.0);
  }

  TEST_CASE("binary cross entropy examples") {
    Mat t(2, 3);
    t << 1, 0, 1, 0, 0, 1;
    const Mat perfect = t.unaryExpr([](double x) { return x > 0.5 ? 1.0 - 1e-7 : 1e-7; });
    CHECK(bce_loss(perfect, t) <= 1e-6);
    CHECK(bce_loss(t, t) <= 1e-6);
    CHECK(bce_loss(Mat::Constant(2, 3, 0.5), t) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    Rng rng(7);
    const Mat p = random_mat(2, 3, rng, 0.01, 0.99);
    CHECK(bce_loss(p, t) == doctest::Approx(bce_loss(Mat(1.0 - p.array()), Mat(1.0 - t.array()))).epsilon(1e-14));
    CHECK_THROWS_AS(bce_loss(p, Mat::Zero(3, 2)), Error);
  }

  TEST_CASE("space loss decomposition") {
    SpaceFixture f(4, 6);
    Rng rng(8);
    const Mat videos = random_mat(3, 4, rng), texts = random_mat(3, 6, rng);
    const Mat targets = (random_mat(3, 4, rng).array() > 0).cast<double>();
    LossConfig cfg;
    Tape tape(false);
    const SpaceLoss full = space_loss(tape, tape.constant(videos), tape.constant(texts), targets, f.space, cfg);
    CHECK(std::isfinite(full.value.scalar()));
    CHECK(full.value.scalar() == doctest::Approx(full.parts.total()).epsilon(1e-14));

    // independent recomputation of the three terms
    Mat lat(3, 3), con(3, 3);
    Mat vp(3, 4), tp(3, 4);
    for (Eigen::Index i = 0; i < 3; ++i) {
      vp.row(i) = probs(videos.row(i), f.space.video_concept);
      tp.row(i) = probs(texts.row(i), f.space.text_concept);
    }
    for (Eigen::Index i = 0; i < 3; ++i) {
      for (Eigen::Index j = 0; j < 3; ++j) {
        lat(i, j) = cosine_sim(latent(videos.row(i), f.space.video_latent), latent(texts.row(j), f.space.text_latent));
        con(i, j) = jaccard_sim(RowVec(vp.row(i)), RowVec(tp.row(j)));
      }
    }
    CHECK(full.parts.triplet_lat == doctest::Approx(brute_force_triplet(lat, 0.2)).epsilon(1e-12));
    CHECK(full.parts.triplet_con == doctest::Approx(brute_force_triplet(con, 0.2)).epsilon(1e-12));
    CHECK(full.parts.bce_con == doctest::Approx(bce_loss(vp, targets) + bce_loss(tp, targets)).epsilon(1e-12));

    cfg.concept_terms = false;
    const SpaceLoss lat_only = space_loss(tape, tape.constant(videos), tape.constant(texts), targets, f.space, cfg);
    CHECK(lat_only.value.scalar() == full.parts.triplet_lat);
    CHECK(lat_only.parts.triplet_con == 0.0);

    CHECK_THROWS_AS(space_loss(tape, tape.constant(videos.topRows(1)), tape.constant(texts.topRows(1)),
                               targets.topRows(1), f.space, cfg),
                    Error);
  }

  TEST_CASE("identical pairs with perfect concept predictions") {
    SpaceFixture f(4, 4);
    f.space.video_concept.weight->value.setZero();
    f.space.text_concept.weight->value.setZero();
    f.space.video_concept.bias->value.setConstant(40.0);
    f.space.text_concept.bias->value.setConstant(40.0);
    Rng rng(9);
    const RowVec v = random_row(4, rng), t = random_row(4, rng);
    const Mat videos = v.replicate(3, 1), texts = t.replicate(3, 1);
    const Mat targets = Mat::Ones(3, 4);
    LossConfig cfg;
    Tape tape(false);
    // every pair belongs to the same video: no negatives, only BCE remains
    const BoolMat shared = BoolMat::Constant(3, 3, true);
    const SpaceLoss same = space_loss(tape, tape.constant(videos), tape.constant(texts), targets, f.space, cfg, &shared);
    CHECK(same.parts.bce_con <= 1e-6);
    CHECK(same.value.scalar() <= 2 * cfg.margin + 1e-6);
    // treated as distinct videos, each triplet term sits exactly at 2 * margin
    const SpaceLoss distinct = space_loss(tape, tape.constant(videos), tape.constant(texts), targets, f.space, cfg);
    CHECK(distinct.parts.triplet_lat == doctest::Approx(2 * cfg.margin).epsilon(1e-12));
    CHECK(distinct.parts.triplet_con == doctest::Approx(2 * cfg.margin).epsilon(1e-12));
  }

  TEST_CASE("gradient of a sum of space losses is the sum of gradients") {
    ParamStore store;
    HybridConfig hc;
    hc.d_lat = 4;
    hc.k_concepts = 3;
    Rng rng(10);
    const HybridSpace a = HybridSpace::create(store, "a", 3, 5, hc, rng);
    const HybridSpace b = HybridSpace::create(store, "b", 4, 5, hc, rng);
    const Mat p = random_mat(3, 3, rng), g = random_mat(3, 4, rng), t = random_mat(3, 5, rng);
    const Mat targets = (random_mat(3, 3, rng).array() > 0).cast<double>();
    LossConfig cfg;
    auto grads = [&](bool use_a, bool use_b) {
      store.zero_grad();
      Tape tape;
      Var total;
      if (use_a) total = space_loss(tape, tape.constant(p), tape.constant(t), targets, a, cfg).value;
      if (use_b) {
        const Var lb = space_loss(tape, tape.constant(g), tape.constant(t), targets, b, cfg).value;
        total = total.valid() ? ag::add(total, lb) : lb;
      }
      tape.backward(total);
      std::vector<Mat> out;
      for (const auto& prm : store.all()) out.push_back(prm->grad);
      return out;
    };
    const auto both = grads(true, true), only_a = grads(true, false), only_b = grads(false, true);
    for (std::size_t i = 0; i < both.size(); ++i) {
      CHECK((both[i] - only_a[i] - only_b[i]).cwiseAbs().maxCoeff() < 1e-14);
    }

    const auto report = gradient_check(store, [&](Tape& tape) {
      return ag::add(space_loss(tape, tape.constant(p), tape.constant(t), targets, a, cfg).value,
                     space_loss(tape, tape.constant(g), tape.constant(t), targets, b, cfg).value);
    });
    CHECK(report.max_rel < 1e-4);
  }

  TEST_CASE("shared text projections reuse the first space") {
    ParamStore store;
    HybridConfig hc;
    Rng rng(11);
    const HybridSpace a = HybridSpace::create(store, "a", 3, 5, hc, rng);
    const HybridSpace b = HybridSpace::create(store, "b", 4, 5, hc, rng, &a);
    CHECK(b.text_latent.weight == a.text_latent.weight);
    CHECK_FALSE(store.contains("b.text_latent.weight"));
  }

  TEST_CASE("adding a constant to a query row keeps its ranking") {
    Rng rng(12);
    for (int i = 0; i < 50; ++i) {
      const RowVec s = random_row(30, rng);
      const RowVec shifted = (s.array() + 3.5).matrix();
      CHECK(rank_candidates(s) == rank_candidates(shifted));
    }
  }
}
