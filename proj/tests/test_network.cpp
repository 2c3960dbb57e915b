#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mer/loss.hpp"
#include "mer/network.hpp"
#include "mer/util.hpp"
#include "support/synth.hpp"

using namespace mer;
namespace fs = std::filesystem;

TEST_CASE("parameter shapes follow the published table") {
  ModelState m = build_network(NetworkSpec::standard(), 1);
  REQUIRE(m.params.size() == 9);
  // first block: 3x3 over the 4-channel input into 32 maps
  CHECK(m.params[0].name == "Conv0");
  CHECK(m.params[0].w.size() + m.params[0].b.size() == 3 * 3 * 4 * 32 + 32);  // 1184

  // hand-computed total over all rows
  size_t expect = 0;
  auto add = [&](int k, int ic, int oc) { expect += size_t(k) * k * ic * oc + oc; };
  add(3, 4, 32);    // Conv0
  add(9, 4, 64);    // Conv
  add(3, 64, 64);   // Conv1
  add(3, 64, 128);  // Conv2
  add(3, 128, 128); // Conv3
  add(3, 128, 64);  // Conv4
  add(3, 128, 64);  // Conv6
  add(3, 96, 64);   // Conv8
  add(3, 64, 4);    // Conv9
  CHECK(parameter_count(m) == expect);
}

TEST_CASE("same seed gives identical parameters, different seeds differ") {
  ModelState a = build_network(NetworkSpec::standard(), 7);
  ModelState b = build_network(NetworkSpec::standard(), 7);
  ModelState c = build_network(NetworkSpec::standard(), 8);
  bool same = true, differ = false;
  for (size_t li = 0; li < a.params.size(); ++li) {
    for (size_t i = 0; i < a.params[li].w.size(); ++i) {
      same &= a.params[li].w[i] == b.params[li].w[i];
      differ |= a.params[li].w[i] != c.params[li].w[i];
    }
  }
  CHECK(same);
  CHECK(differ);
}

TEST_CASE("spec validation rejects inconsistent graphs") {
  NetworkSpec bad = NetworkSpec::standard();
  for (auto& l : bad.layers)
    if (l.name == "Conv5") l.out_channels = 120;  // concat really carries 128
  try {
    bad.validate();
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("Conv5") != std::string::npos);
  }

  NetworkSpec unknown = NetworkSpec::standard();
  unknown.layers[2].inputs = {"nope"};
  CHECK_THROWS_AS(unknown.validate(), std::invalid_argument);
}

TEST_CASE("forward keeps spatial size and the sigmoid range") {
  ModelState m = build_network(NetworkSpec::standard(), 3);
  for (auto [h, w] : {std::pair{48, 48}, std::pair{32, 20}, std::pair{31, 45}}) {
    TensorF img = synth::make_random(99, h, w, 3);
    DecompositionT<float> d = forward(m, img);
    CHECK(d.reflectance.height() == h);
    CHECK(d.reflectance.width() == w);
    CHECK(d.reflectance.channels() == 3);
    CHECK(d.illumination.height() == h);
    CHECK(d.illumination.channels() == 1);
    for (size_t i = 0; i < d.reflectance.size(); ++i) {
      CHECK(d.reflectance.data()[i] > 0.0f);
      CHECK(d.reflectance.data()[i] < 1.0f);
    }
  }
}

TEST_CASE("forward is deterministic") {
  ModelState m = build_network(NetworkSpec::standard(), 4);
  TensorF img = synth::make_random(5, 24, 26, 3);
  auto a = forward(m, img);
  auto b = forward(m, img);
  for (size_t i = 0; i < a.reflectance.size(); ++i)
    CHECK(a.reflectance.data()[i] == b.reflectance.data()[i]);
}

TEST_CASE("network parameter gradients match finite differences") {
  ModelState m = build_network(NetworkSpec::standard(), 11);
  ParamSet<double> params = cast_params(m.params);
  NetworkSpec spec = m.spec;

  TensorF Sf = synth::make_random(21, 8, 8, 3);
  TensorD in4(8, 8, 4);
  {
    TensorF in4f = assemble_input(Sf);
    for (size_t i = 0; i < in4.size(); ++i) in4.data()[i] = in4f.data()[i];
  }
  // random linear objective on the head keeps the check independent of the loss
  Rng rng(31);
  std::vector<TensorD> outs;
  NetWorkspace<double> ws;
  run_forward(spec, params, in4, outs, ws);
  TensorD G(outs.back().height(), outs.back().width(), 4);
  for (size_t i = 0; i < G.size(); ++i) G.data()[i] = rng.next_normal();

  auto objective = [&]() {
    run_forward(spec, params, in4, outs, ws);
    const TensorD& head = outs.back();
    double acc = 0;
    for (size_t i = 0; i < head.size(); ++i) acc += head.data()[i] * G.data()[i];
    return acc;
  };

  ParamSet<double> grads = zeros_like_t(params);
  objective();  // fills outs
  run_backward(spec, params, in4, outs, G, grads, ws);

  const double step = 1e-6;
  Rng pick(17);
  int checked = 0;
  for (size_t li = 0; li < params.size(); ++li) {
    for (int t = 0; t < 6; ++t) {
      size_t i = pick.next_below(static_cast<uint32_t>(params[li].w.size()));
      double keep = params[li].w[i];
      params[li].w[i] = keep + step;
      double fp = objective();
      params[li].w[i] = keep - step;
      double fm = objective();
      params[li].w[i] = keep;
      double fd = (fp - fm) / (2 * step);
      double a = grads[li].w[i];
      if (std::max(std::abs(a), std::abs(fd)) < 1e-9) continue;  // ReLU-dead path
      CHECK(a == doctest::Approx(fd).epsilon(2e-4));
      ++checked;
    }
    size_t bi = pick.next_below(static_cast<uint32_t>(params[li].b.size()));
    double keep = params[li].b[bi];
    params[li].b[bi] = keep + step;
    double fp = objective();
    params[li].b[bi] = keep - step;
    double fm = objective();
    params[li].b[bi] = keep;
    double fd = (fp - fm) / (2 * step);
    CHECK(grads[li].b[bi] == doctest::Approx(fd).epsilon(2e-4));
    ++checked;
  }
  CHECK(checked > 40);
}

TEST_CASE("every parameter tensor receives gradient from the training loss") {
  // Individual ReLU units can be dead for a single input at init; the wiring
  // check is that every tensor carries signal and that coverage over a handful
  // of inputs is near-total.
  ModelState m = build_network(NetworkSpec::standard(), 5);
  ParamSet<float> grads = zeros_like(m.params);
  std::vector<TensorF> outs;
  NetWorkspace<float> ws;
  LossWeights w;

  for (uint64_t s = 0; s < 6; ++s) {
    TensorF S = synth::make_random(77 + s, 24, 24, 3);
    TensorF target = hist_equalize(max_channel(S));
    TensorF in4 = assemble_input(S);
    run_forward(m.spec, m.params, in4, outs, ws);
    const TensorF& head = outs.back();
    TensorF R(24, 24, 3), I(24, 24, 1);
    for (size_t i = 0; i < I.size(); ++i) {
      for (int c = 0; c < 3; ++c) R.data()[3 * i + c] = head.data()[4 * i + c];
      I.data()[i] = head.data()[4 * i + 3];
    }
    TensorF dR, dI;
    total_loss_backward(S, R, I, target, w, dR, dI);
    TensorF dfinal(24, 24, 4);
    for (size_t i = 0; i < I.size(); ++i) {
      for (int c = 0; c < 3; ++c) dfinal.data()[4 * i + c] = dR.data()[3 * i + c];
      dfinal.data()[4 * i + 3] = dI.data()[i];
    }
    ParamSet<float> g1 = zeros_like(m.params);
    run_backward(m.spec, m.params, in4, outs, dfinal, g1, ws);
    if (s == 0)
      for (const auto& g : g1) {
        double wmax = 0, bmax = 0;
        for (float v : g.w) wmax = std::max(wmax, std::abs(double(v)));
        for (float v : g.b) bmax = std::max(bmax, std::abs(double(v)));
        INFO("layer ", g.name);
        CHECK(wmax > 0.0);  // single generic input reaches every tensor
        CHECK(bmax > 0.0);
      }
    for (size_t li = 0; li < grads.size(); ++li) {
      for (size_t i = 0; i < grads[li].w.size(); ++i) grads[li].w[i] += std::abs(g1[li].w[i]);
      for (size_t i = 0; i < grads[li].b.size(); ++i) grads[li].b[i] += std::abs(g1[li].b[i]);
    }
  }
  // a few percent of units sit dead at init (their weights keep the ReLU off
  // for any input); a wiring bug would instead zero out an entire tensor
  for (const auto& g : grads) {
    size_t w_nonzero = 0;
    for (float v : g.w) w_nonzero += v != 0.0f;
    size_t b_nonzero = 0;
    for (float v : g.b) b_nonzero += v != 0.0f;
    INFO("layer ", g.name);
    CHECK(double(w_nonzero) / double(g.w.size()) > 0.75);
    CHECK(double(b_nonzero) / double(g.b.size()) > 0.75);
  }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  auto dir = fs::temp_directory_path() / "mer_test_net";
  fs::create_directories(dir);
  ModelState m = build_network(NetworkSpec::standard(), 123);
  m.step = 41;
  m.epoch = 7;
  m.sampler_rng = Rng(9).serialize();
  for (auto& mo : m.moments)
    for (auto& v : mo.mw) v = 0.25f;

  std::string p1 = (dir / "a.ckpt").string(), p2 = (dir / "b.ckpt").string();
  save_checkpoint(m, p1);
  ModelState back = load_checkpoint(p1);
  CHECK(back.step == 41);
  CHECK(back.epoch == 7);
  CHECK(back.seed == 123);
  CHECK(back.sampler_rng == m.sampler_rng);
  for (size_t li = 0; li < m.params.size(); ++li) {
    CHECK(back.params[li].w == m.params[li].w);
    CHECK(back.params[li].b == m.params[li].b);
    CHECK(back.moments[li].mw == m.moments[li].mw);
    CHECK(back.moments[li].vb == m.moments[li].vb);
  }
  save_checkpoint(back, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string c1((std::istreambuf_iterator<char>(f1)), {});
  std::string c2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(c1 == c2);
}

TEST_CASE("final-relu switch changes the head wiring") {
  NetworkSpec with = NetworkSpec::standard(true);
  NetworkSpec without = NetworkSpec::standard();  // plain sigmoid head by default
  bool found = false;
  for (size_t i = 0; i < with.layers.size(); ++i)
    if (with.layers[i].name == "Conv9") {
      CHECK(with.layers[i].relu);
      CHECK_FALSE(without.layers[i].relu);
      found = true;
    }
  CHECK(found);

  // the table-literal ReLU head cannot emit below 0.5 (why it is off by default)
  ModelState m = build_network(with, 2);
  TensorF img = synth::make_random(8, 16, 16, 3);
  auto d = forward(m, img);
  for (size_t i = 0; i < d.reflectance.size(); ++i) CHECK(d.reflectance.data()[i] >= 0.5f);

  ModelState m2 = build_network(without, 2);
  auto d2 = forward(m2, img);
  bool below = false;
  for (size_t i = 0; i < d2.reflectance.size(); ++i) below |= d2.reflectance.data()[i] < 0.5f;
  CHECK(below);
}
