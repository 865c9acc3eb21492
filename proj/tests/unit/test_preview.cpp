#include <doctest.h>

#include "support.hpp"
#include "vidret/preview.hpp"
#include "vidret/trainer.hpp"

using namespace vidret;
using vidret::testing::random_mat;

namespace {

BiGru make_gru(ParamStore& store, int in, int hidden, std::uint64_t seed) {
  Rng rng(seed);
  BiGru g = BiGru::create(store, "preview.gru", in, hidden, rng);
  store.get("preview.gru.fwd.bias").value = random_mat(1, 3 * hidden, rng, -0.5, 0.5);
  store.get("preview.gru.bwd.bias").value = random_mat(1, 3 * hidden, rng, -0.5, 0.5);
  return g;
}

Mat reversed(const Mat& x) { return x.colwise().reverse(); }

}  // namespace

TEST_SUITE("preview") {
  TEST_CASE("zero parameters give zero states and zero p") {
    ParamStore store;
    const BiGru gru = make_gru(store, 3, 4, 1);
    for (const auto& p : store.all()) p->value.setZero();
    Rng rng(2);
    Tape tape(false);
    const Var frames = tape.constant(random_mat(5, 3, rng));
    CHECK(bigru_forward(tape, frames, gru).value().isZero(0.0));
    CHECK(preview_encode(tape, frames, gru).value().isZero(0.0));
  }

  TEST_CASE("single frame feeds both directions") {
    ParamStore store;
    const BiGru gru = make_gru(store, 3, 4, 3);
    Rng rng(4);
    Tape tape(false);
    const Var frame = tape.constant(random_mat(1, 3, rng));
    const Mat h = bigru_forward(tape, frame, gru).value();
    CHECK(h.rows() == 1);
    CHECK(h.block(0, 0, 1, 4) == gru.forward.run(tape, frame, false).value());
    CHECK(h.block(0, 4, 1, 4) == gru.backward.run(tape, frame, false).value());
    CHECK(preview_encode(tape, frame, gru).value() == h);
  }

  TEST_CASE("reversing frames mirrors and swaps the halves") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      ParamStore store;
      const BiGru gru = make_gru(store, 3, 4, static_cast<std::uint64_t>(trial));
      // mirror the two directions so a reversed pass is a pure relabelling
      store.get("preview.gru.bwd.w_in").value = store.get("preview.gru.fwd.w_in").value;
      store.get("preview.gru.bwd.u_zr").value = store.get("preview.gru.fwd.u_zr").value;
      store.get("preview.gru.bwd.u_n").value = store.get("preview.gru.fwd.u_n").value;
      store.get("preview.gru.bwd.bias").value = store.get("preview.gru.fwd.bias").value;
      const Mat x = random_mat(2 + trial % 5, 3, rng);
      Tape tape(false);
      const Mat h = bigru_forward(tape, tape.constant(x), gru).value();
      const Mat hr = bigru_forward(tape, tape.constant(reversed(x)), gru).value();
      const Eigen::Index m = x.rows();
      for (Eigen::Index t = 0; t < m; ++t) {
        CHECK((hr.block(t, 0, 1, 4) - h.block(m - 1 - t, 4, 1, 4)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((hr.block(t, 4, 1, 4) - h.block(m - 1 - t, 0, 1, 4)).cwiseAbs().maxCoeff() < 1e-12);
      }
    }
  }

  TEST_CASE("general parameters: reversed input equals the direction-swapped model") {
    ParamStore a;
    const BiGru gru = make_gru(a, 3, 4, 9);
    ParamStore b;
    BiGru swapped = make_gru(b, 3, 4, 10);
    for (const char* part : {"w_in", "u_zr", "u_n", "bias"}) {
      b.get(std::string("preview.gru.fwd.") + part).value = a.get(std::string("preview.gru.bwd.") + part).value;
      b.get(std::string("preview.gru.bwd.") + part).value = a.get(std::string("preview.gru.fwd.") + part).value;
    }
    Rng rng(6);
    const Mat x = random_mat(6, 3, rng);
    Tape tape(false);
    const Mat h = bigru_forward(tape, tape.constant(x), gru).value();
    const Mat hr = bigru_forward(tape, tape.constant(reversed(x)), swapped).value();
    for (Eigen::Index t = 0; t < 6; ++t) {
      CHECK((hr.block(t, 0, 1, 4) - h.block(5 - t, 4, 1, 4)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((hr.block(t, 4, 1, 4) - h.block(5 - t, 0, 1, 4)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("p is the mean of the hidden sequence with dimension 2h") {
    ParamStore store;
    const BiGru gru = make_gru(store, 3, 5, 7);
    Rng rng(8);
    for (int m = 1; m <= 6; ++m) {
      Tape tape(false);
      const Var frames = tape.constant(random_mat(m, 3, rng));
      const Mat h = bigru_forward(tape, frames, gru).value();
      const Mat p = preview_encode(tape, frames, gru).value();
      CHECK(p.cols() == 10);
      CHECK((p - h.colwise().mean()).cwiseAbs().maxCoeff() < 1e-15);
    }
  }

  TEST_CASE("mean pooling of hand-set rows") {
    Tape tape(false);
    Mat h(2, 3);
    h << 1, 2, 3, 5, 6, 7;
    const Mat p = ag::mean_rows(tape.constant(h)).value();
    CHECK(p(0, 0) == 3.0);
    CHECK(p(0, 1) == 4.0);
    CHECK(p(0, 2) == 5.0);
    const Mat same = ag::mean_rows(tape.constant(Mat::Constant(4, 3, 0.7))).value();
    CHECK((same.array() - 0.7).abs().maxCoeff() < 1e-15);
  }

  TEST_CASE("FC variant: identity, zero weights and permutation invariance") {
    ParamStore store;
    Rng rng(9);
    const Affine fc = Affine::create(store, "preview.fc", 4, 4, rng);
    const Mat x = random_mat(5, 4, rng);
    fc.weight->value = Mat::Identity(4, 4);
    fc.bias->value.setZero();
    Tape tape(false);
    CHECK((preview_encode_fc(tape, tape.constant(x), fc).value() - x.colwise().mean()).cwiseAbs().maxCoeff() <
          1e-15);
    fc.weight->value.setZero();
    fc.bias->value = random_mat(1, 4, rng);
    Tape zero(false);
    CHECK(preview_encode_fc(zero, zero.constant(x), fc).value() == fc.bias->value);

    fc.weight->value = random_mat(4, 4, rng);
    Tape tape2(false);
    Mat perm = x;
    perm.row(0).swap(perm.row(3));
    perm.row(1).swap(perm.row(4));
    const Mat a = preview_encode_fc(tape2, tape2.constant(x), fc).value();
    const Mat b = preview_encode_fc(tape2, tape2.constant(perm), fc).value();
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("GRU preview is order sensitive") {
    ParamStore store;
    const BiGru gru = make_gru(store, 3, 4, 12);
    Rng rng(13);
    const Mat x = random_mat(5, 3, rng);
    Mat perm = x;
    perm.row(0).swap(perm.row(2));
    Tape tape(false);
    const Mat a = preview_encode(tape, tape.constant(x), gru).value();
    const Mat b = preview_encode(tape, tape.constant(perm), gru).value();
    CHECK((a - b).cwiseAbs().maxCoeff() > 1e-8);
  }

  TEST_CASE("frame dimension mismatch and empty video are errors") {
    ParamStore store;
    const BiGru gru = make_gru(store, 3, 4, 1);
    Tape tape(false);
    CHECK_THROWS_AS(bigru_forward(tape, tape.constant(Mat::Zero(4, 5)), gru), Error);
    CHECK_THROWS_AS(bigru_forward(tape, tape.constant(Mat::Zero(0, 3)), gru), Error);
  }

  TEST_CASE("gradients of p against every GRU parameter") {
    Rng rng(14);
    for (int trial = 0; trial < 5; ++trial) {
      ParamStore store;
      const BiGru gru = make_gru(store, 3, 4, 20 + static_cast<std::uint64_t>(trial));
      std::uniform_int_distribution<int> len(2, 6);
      const Mat x = random_mat(len(rng), 3, rng);
      const Mat w = random_mat(1, 8, rng);
      const auto report = gradient_check(store, [&](Tape& t) {
        return ag::sum(ag::mul(preview_encode(t, t.constant(x), gru), t.constant(w)));
      });
      CHECK(report.max_rel < 1e-4);
    }
  }

  TEST_CASE("params factory honours the kind") {
    ParamStore store;
    Rng rng(1);
    PreviewConfig cfg;
    cfg.kind = PreviewKind::Fc;
    cfg.hidden = 6;
    const PreviewParams p = PreviewParams::create(store, cfg, 5, rng);
    CHECK(p.output_dim() == 12);
    CHECK(store.contains("preview.fc.weight"));
    CHECK_FALSE(store.contains("preview.gru.fwd.w_in"));
  }
}
