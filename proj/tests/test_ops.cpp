#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mer/ops.hpp"
#include "mer/util.hpp"
#include "support/oracles.hpp"
#include "support/synth.hpp"

using namespace mer;

TEST_CASE("grad: constant, single step edge, loop oracle") {
  TensorF flat = TensorF::full(4, 5, 2, 0.7f);
  auto g = grad(flat);
  for (size_t i = 0; i < flat.size(); ++i) {
    CHECK(g.horizontal.data()[i] == 0.0f);
    CHECK(g.vertical.data()[i] == 0.0f);
  }

  TensorF step(1, 2, 1);
  step.at(0, 0, 0) = 0.0f;
  step.at(0, 1, 0) = 1.0f;
  g = grad(step);
  CHECK(g.horizontal.at(0, 0, 0) == 1.0f);
  CHECK(g.horizontal.at(0, 1, 0) == 0.0f);

  TensorF rnd = synth::make_random(9, 3, 3, 1);
  g = grad(rnd);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      CHECK(g.horizontal.at(y, x, 0) ==
            doctest::Approx(oracle::fwd_diff(rnd, y, x, 0, true)).epsilon(1e-7));
      CHECK(g.vertical.at(y, x, 0) ==
            doctest::Approx(oracle::fwd_diff(rnd, y, x, 0, false)).epsilon(1e-7));
    }
}

TEST_CASE("grad is linear") {
  TensorF a = synth::make_random(21, 5, 6, 3);
  TensorF b = synth::make_random(22, 5, 6, 3);
  TensorF mix(5, 6, 3);
  const float ca = 1.7f, cb = -0.6f;
  for (size_t i = 0; i < mix.size(); ++i) mix.data()[i] = ca * a.data()[i] + cb * b.data()[i];
  auto gm = grad(mix), ga = grad(a), gb = grad(b);
  for (size_t i = 0; i < mix.size(); ++i) {
    CHECK(gm.horizontal.data()[i] ==
          doctest::Approx(ca * ga.horizontal.data()[i] + cb * gb.horizontal.data()[i]).epsilon(1e-4));
    CHECK(gm.vertical.data()[i] ==
          doctest::Approx(ca * ga.vertical.data()[i] + cb * gb.vertical.data()[i]).epsilon(1e-4));
  }
}

TEST_CASE("tv_l1: zero on constants, hand value, checkerboard oracle") {
  CHECK(tv_l1(TensorF::full(6, 6, 3, 0.4f)) == 0.0f);

  TensorF step(1, 2, 1);
  step.at(0, 1, 0) = 1.0f;
  CHECK(tv_l1(step) == doctest::Approx(0.5));

  TensorF board(2, 2, 1);
  board.at(0, 0, 0) = 0;
  board.at(0, 1, 0) = 1;
  board.at(1, 0, 0) = 1;
  board.at(1, 1, 0) = 0;
  CHECK(tv_l1(board) == doctest::Approx(oracle::tv(board)));

  TensorF rnd = synth::make_random(23, 6, 7, 3);
  CHECK(tv_l1(rnd) == doctest::Approx(oracle::tv(rnd)).epsilon(1e-6));
  CHECK(tv_l1(rnd) > 0.0f);
}

TEST_CASE("hist_equalize: degenerate, two-level and uniform histograms") {
  TensorF flat = TensorF::full(4, 4, 1, 0.3f);
  TensorF eq = hist_equalize(flat);
  for (size_t i = 0; i < eq.size(); ++i) CHECK(eq.data()[i] == 0.0f);

  TensorF twol(2, 2, 1);
  twol.at(0, 0, 0) = 0.0f;
  twol.at(0, 1, 0) = 0.0f;
  twol.at(1, 0, 0) = 1.0f;
  twol.at(1, 1, 0) = 1.0f;
  eq = hist_equalize(twol);
  CHECK(eq.at(0, 0, 0) == 0.0f);
  CHECK(eq.at(1, 0, 0) == 1.0f);

  // one pixel in each of the 256 bins -> the map is the identity within 1/255
  TensorF uniform(16, 16, 1);
  for (int i = 0; i < 256; ++i) uniform.data()[i] = i / 255.0f;
  eq = hist_equalize(uniform);
  for (int i = 0; i < 256; ++i)
    CHECK(std::abs(eq.data()[i] - uniform.data()[i]) <= 1.0f / 255.0f + 1e-6f);

  CHECK_THROWS_AS(hist_equalize(TensorF()), std::invalid_argument);
}

TEST_CASE("hist_equalize preserves rank and saturates the range") {
  TensorF img = synth::make_random(31, 24, 24, 1);
  auto lut = hist_equalize_lut(img);
  for (int b = 1; b < 256; ++b) CHECK(lut[b] >= lut[b - 1]);

  TensorF eq = hist_equalize(img);
  float lo = 1.0f, hi = 0.0f;
  for (size_t i = 0; i < eq.size(); ++i) {
    lo = std::min(lo, eq.data()[i]);
    hi = std::max(hi, eq.data()[i]);
  }
  CHECK(lo == 0.0f);
  CHECK(hi == 1.0f);
}

TEST_CASE("structure_weight: identity at zero gradient, known decay, bounds") {
  TensorF flat = TensorF::full(3, 3, 3, 0.5f);
  auto w = structure_weight(grad(flat), 10.0f);
  for (size_t i = 0; i < w.horizontal.size(); ++i) {
    CHECK(w.horizontal.data()[i] == 1.0f);
    CHECK(w.vertical.data()[i] == 1.0f);
  }

  // collapsed gradient of exactly 0.1 with lambda3=10 -> e^-1
  GradientPairT<float> gp{TensorF::full(1, 1, 3, 0.1f), TensorF::full(1, 1, 3, 0.0f)};
  auto w2 = structure_weight(gp, 10.0f);
  CHECK(w2.horizontal.at(0, 0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-6));
  CHECK(w2.vertical.at(0, 0, 0) == 1.0f);

  GradientPairT<float> big{TensorF::full(1, 1, 3, 1.0f), TensorF::full(1, 1, 3, 2.0f)};
  auto w3 = structure_weight(big, 10.0f);
  CHECK(w3.horizontal.at(0, 0, 0) <= std::exp(-10.0f) + 1e-12f);

  TensorF rnd = synth::make_random(41, 5, 5, 3);
  auto wr = structure_weight(grad(rnd), 10.0f);
  for (size_t i = 0; i < wr.horizontal.size(); ++i) {
    CHECK(wr.horizontal.data()[i] > 0.0f);
    CHECK(wr.horizontal.data()[i] <= 1.0f);
  }
}
