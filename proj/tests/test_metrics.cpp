#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "mer/color.hpp"
#include "mer/image_io.hpp"
#include "mer/metrics.hpp"
#include "mer/ops.hpp"
#include "support/oracles.hpp"
#include "support/synth.hpp"

using namespace mer;
namespace fs = std::filesystem;

TEST_CASE("gray entropy: constant, exactly uniform, rich image") {
  CHECK(gray_entropy(TensorF::full(8, 8, 3, 0.5f)) == 0.0);

  TensorF uniform(16, 16, 1);
  for (int i = 0; i < 256; ++i) uniform.data()[i] = i / 255.0f;
  CHECK(gray_entropy(uniform) == 8.0);

  TensorF scene = synth::make_scene(1, 96, 96);
  double ge = gray_entropy(scene);
  CHECK(ge > 4.0);
  CHECK(ge <= 8.0);
}

TEST_CASE("color entropy: constants and identical channels") {
  CHECK(color_entropy(TensorF::full(6, 6, 3, 0.2f)) == 0.0);

  TensorF gray3(12, 12, 3);
  Rng rng(5);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) {
      float v = static_cast<float>(rng.next_unit());
      for (int c = 0; c < 3; ++c) gray3.at(y, x, c) = v;
    }
  TensorF one(12, 12, 1);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) one.at(y, x, 0) = gray3.at(y, x, 0);
  CHECK(color_entropy(gray3) == doctest::Approx(3.0 * gray_entropy(one)).epsilon(1e-12));
  CHECK_THROWS_AS(color_entropy(one), std::invalid_argument);
}

TEST_CASE("gray mean illumination and gradient") {
  TensorF half = TensorF::full(4, 4, 3, 0.5f);
  CHECK(gray_mean_illumination(half) == 128.0);  // round(127.5) on every pixel
  CHECK(gray_mean_gradient(half) == 0.0);

  TensorF step(1, 2, 1);
  step.at(0, 1, 0) = 1.0f;
  // pixel 0 sees |255|/2, pixel 1 is the trailing edge
  CHECK(gray_mean_gradient(step) == doctest::Approx((255.0 / 2.0) / 2.0));
}

TEST_CASE("loe: identity, monotone remaps, order reversal") {
  TensorF img = synth::make_scene(3, 40, 52);
  CHECK(loe(img, img) == 0.0);

  TensorF remap(40, 52, 3);
  for (size_t i = 0; i < img.size(); ++i) {
    float v = img.data()[i];
    remap.data()[i] = 0.1f + 0.4f * v + 0.5f * v * v * v;  // strictly increasing
  }
  CHECK(loe(img, remap) == 0.0);

  // 3x3 with distinct lightness values, inverted: every strict pair flips
  TensorF small(3, 3, 3), inv(3, 3, 3);
  for (int i = 0; i < 9; ++i)
    for (int c = 0; c < 3; ++c) {
      small.data()[3 * i + c] = (i + 1) / 10.0f;
      inv.data()[3 * i + c] = 1.0f - (i + 1) / 10.0f;
    }
  double m = 9.0;
  CHECK(loe(small, inv) == doctest::Approx(1000.0 * (m * m - m) / (m * m)));
}

TEST_CASE("psnr: caps, zero-signal case, monotonicity in noise") {
  TensorF img = synth::make_scene(7, 32, 32);
  CHECK(psnr(img, img) == 99.0);

  TensorF black = TensorF::full(8, 8, 3, 0.0f);
  TensorF white = TensorF::full(8, 8, 3, 1.0f);
  CHECK(psnr(black, white) == doctest::Approx(0.0).epsilon(1e-9));

  Rng rng(9);
  double prev = 1e9;
  for (double amp : {0.02, 0.08, 0.25}) {
    TensorF noisy = img;
    Rng r2(11);
    for (size_t i = 0; i < noisy.size(); ++i)
      noisy.data()[i] = std::clamp(
          noisy.data()[i] + static_cast<float>(r2.next_normal() * amp), 0.0f, 1.0f);
    double p = psnr(img, noisy);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim: exact self-similarity and symmetry") {
  TensorF img = synth::make_scene(13, 24, 24);
  CHECK(ssim(img, img) == 1.0);

  TensorF other = synth::make_scene(14, 24, 24);
  CHECK(std::abs(ssim(img, other) - ssim(other, img)) <= 1e-12);
  CHECK(ssim(img, other) < 1.0);
  CHECK_THROWS_AS(ssim(img, synth::make_scene(2, 25, 24)), std::invalid_argument);
}

TEST_CASE("psnr and ssim match the direct-formula oracles") {
  for (uint64_t s = 0; s < 10; ++s) {
    TensorF a = synth::make_random(1000 + s, 16, 16, 1);
    TensorF b = synth::make_random(2000 + s, 16, 16, 1);
    TensorD ad = a.cast<double>(), bd = b.cast<double>();
    CHECK(std::abs(psnr(a, b) - oracle::psnr_direct(ad, bd)) < 1e-9);
    CHECK(std::abs(ssim(a, b) - oracle::ssim_direct(ad, bd)) < 1e-9);
  }
}

TEST_CASE("he baseline: degenerate input, idempotence within quantization") {
  TensorF flat = TensorF::full(6, 6, 3, 0.4f);
  TensorF out = he_baseline(flat);
  for (size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == 0.0f);

  TensorF scene = synth::make_scene(17, 96, 128);
  TensorF once = he_baseline(scene);
  TensorF twice = he_baseline(once);
  double mean_diff = 0, max_diff = 0;
  for (size_t i = 0; i < once.size(); ++i) {
    double d = std::abs(double(once.data()[i]) - double(twice.data()[i]));
    mean_diff += d;
    max_diff = std::max(max_diff, d);
  }
  mean_diff /= double(once.size());
  CHECK(mean_diff < 0.01);
  CHECK(max_diff < 0.06);
}

TEST_CASE("equalization does not lose more entropy than merge slack") {
  for (uint64_t s = 0; s < 4; ++s) {
    TensorF scene = synth::make_scene(50 + s, 80, 80);
    TensorF gray = to_gray(scene);
    // count occupied bins
    std::array<int, 256> hist{};
    for (size_t i = 0; i < gray.size(); ++i)
      ++hist[std::min(255, std::max(0, int(std::lround(gray.data()[i] * 255.0))))];
    int occupied = 0;
    for (int c : hist) occupied += c > 0;
    if (occupied < 32) continue;
    CHECK(gray_entropy(hist_equalize(gray)) >= gray_entropy(gray) - 0.1);
  }
}

TEST_CASE("evaluate_set: identity pipeline and degenerate input") {
  auto dir = fs::temp_directory_path() / "mer_test_metrics";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> lows;
  for (int i = 0; i < 3; ++i) {
    TensorF img = synth::make_scene(60 + i, 40, 40);
    std::string p = (dir / ("im" + std::to_string(i) + ".png")).string();
    save_image(img, p);
    lows.push_back(p);
  }
  SetEvaluation ev = evaluate_set([](const TensorF& x) { return x; }, lows, lows);
  CHECK(ev.per_image.size() == 3);
  CHECK(*ev.mean.psnr == 99.0);
  CHECK(*ev.mean.ssim == doctest::Approx(1.0));
  CHECK(ev.mean.loe_low == 0.0);
  CHECK(*ev.mean.loe_high == 0.0);

  CHECK_THROWS_AS(evaluate_set([](const TensorF& x) { return x; }, {}, {}),
                  std::invalid_argument);

  // no references: optional fields stay empty
  SetEvaluation noref = evaluate_set([](const TensorF& x) { return x; }, lows, {});
  CHECK_FALSE(noref.mean.psnr.has_value());
  CHECK_FALSE(noref.mean.loe_high.has_value());

  std::string table = format_report_table(ev);
  CHECK(table.find("Mean") != std::string::npos);
  CHECK(table.find("GE") != std::string::npos);
  write_report_json(ev, (dir / "rep.json").string());
  CHECK(fs::exists(dir / "rep.json"));
}
