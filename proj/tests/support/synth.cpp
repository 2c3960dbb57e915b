#include "support/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "mer/image_io.hpp"
#include "mer/util.hpp"

namespace fs = std::filesystem;
using mer::Rng;
using mer::TensorF;

namespace synth {
namespace {

// bilinear value noise, one octave
void add_octave(std::vector<float>& field, int h, int w, Rng& rng, int cell, float amp) {
  int gh = h / cell + 2, gw = w / cell + 2;
  std::vector<float> lattice(static_cast<size_t>(gh) * gw);
  for (auto& v : lattice) v = static_cast<float>(rng.next_unit());
  for (int y = 0; y < h; ++y) {
    float fy = static_cast<float>(y) / cell;
    int y0 = static_cast<int>(fy);
    float ty = fy - y0;
    for (int x = 0; x < w; ++x) {
      float fx = static_cast<float>(x) / cell;
      int x0 = static_cast<int>(fx);
      float tx = fx - x0;
      const float* row0 = lattice.data() + static_cast<size_t>(y0) * gw;
      const float* row1 = row0 + gw;
      float v = (row0[x0] * (1 - tx) + row0[x0 + 1] * tx) * (1 - ty) +
                (row1[x0] * (1 - tx) + row1[x0 + 1] * tx) * ty;
      field[static_cast<size_t>(y) * w + x] += amp * v;
    }
  }
}

std::vector<float> fractal_field(int h, int w, Rng& rng, int base_cell, int octaves) {
  std::vector<float> f(static_cast<size_t>(h) * w, 0.0f);
  float amp = 1.0f, total = 0.0f;
  int cell = base_cell;
  for (int o = 0; o < octaves; ++o) {
    add_octave(f, h, w, rng, std::max(1, cell), amp);
    total += amp;
    amp *= 0.55f;
    cell /= 2;
  }
  for (auto& v : f) v /= total;
  return f;
}

void stamp_shapes(TensorF& img, Rng& rng, int count) {
  const int h = img.height(), w = img.width();
  for (int s = 0; s < count; ++s) {
    bool ellipse = rng.next_below(2) == 0;
    int cx = static_cast<int>(rng.next_below(w));
    int cy = static_cast<int>(rng.next_below(h));
    int rx = 4 + static_cast<int>(rng.next_below(w / 4));
    int ry = 4 + static_cast<int>(rng.next_below(h / 4));
    float tint[3] = {static_cast<float>(0.1 + 0.8 * rng.next_unit()),
                     static_cast<float>(0.1 + 0.8 * rng.next_unit()),
                     static_cast<float>(0.1 + 0.8 * rng.next_unit())};
    float alpha = static_cast<float>(0.45 + 0.45 * rng.next_unit());
    int y0 = std::max(0, cy - ry), y1 = std::min(h - 1, cy + ry);
    int x0 = std::max(0, cx - rx), x1 = std::min(w - 1, cx + rx);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        if (ellipse) {
          float dy = float(y - cy) / ry, dx = float(x - cx) / rx;
          if (dy * dy + dx * dx > 1.0f) continue;
        }
        for (int c = 0; c < 3; ++c)
          img.at(y, x, c) = (1 - alpha) * img.at(y, x, c) + alpha * tint[c];
      }
  }
}

}  // namespace

TensorF make_scene(uint64_t seed, int h, int w) {
  Rng rng(seed);
  auto luma = fractal_field(h, w, rng, std::max(8, h / 3), 5);
  TensorF img(h, w, 3);
  for (int c = 0; c < 3; ++c) {
    auto chroma = fractal_field(h, w, rng, std::max(8, h / 4), 4);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float v = 0.65f * luma[static_cast<size_t>(y) * w + x] +
                  0.35f * chroma[static_cast<size_t>(y) * w + x];
        img.at(y, x, c) = 0.08f + 0.88f * v;
      }
  }
  stamp_shapes(img, rng, 10 + static_cast<int>(rng.next_below(8)));
  // fine texture so histograms stay dense
  auto grain = fractal_field(h, w, rng, 2, 2);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float g = 0.12f * (grain[static_cast<size_t>(y) * w + x] - 0.5f);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(img.at(y, x, c) + g, 0.0f, 1.0f);
    }
  return img;
}

TensorF make_random(uint64_t seed, int h, int w, int c) {
  Rng rng(seed);
  TensorF t(h, w, c);
  for (size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<float>(rng.next_unit());
  return t;
}

ScenePair make_pair(uint64_t seed, int h, int w) {
  Rng rng(seed * 1000003u + 17u);
  TensorF albedo = make_scene(seed, h, w);

  // smooth bright illumination for the reference rendering
  auto illum = fractal_field(h, w, rng, std::max(16, h / 2), 3);
  ScenePair p{TensorF(h, w, 3), TensorF(h, w, 3)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float il = 0.55f + 0.45f * illum[static_cast<size_t>(y) * w + x];
      for (int c = 0; c < 3; ++c)
        p.ref.at(y, x, c) = std::clamp(albedo.at(y, x, c) * il, 0.0f, 1.0f);
    }
  // push the reference toward a well-exposed mean
  {
    double mean = 0;
    for (size_t i = 0; i < p.ref.size(); ++i) mean += p.ref.data()[i];
    mean /= double(p.ref.size());
    float gain = static_cast<float>(std::clamp(0.47 / std::max(0.05, mean), 0.8, 2.2));
    for (size_t i = 0; i < p.ref.size(); ++i)
      p.ref.data()[i] = std::clamp(p.ref.data()[i] * gain, 0.0f, 1.0f);
  }

  // underexposure: global gain, mild vignette, read+shot noise, 8-bit quantization
  float dark = static_cast<float>(0.05 + 0.10 * rng.next_unit());
  float vig = static_cast<float>(0.25 + 0.35 * rng.next_unit());
  const float cy = h / 2.0f, cx = w / 2.0f;
  const float rmax = std::sqrt(cy * cy + cx * cx);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float r = std::sqrt((y - cy) * (y - cy) + (x - cx) * (x - cx)) / rmax;
      float fall = 1.0f - vig * r * r;
      for (int c = 0; c < 3; ++c) {
        float v = p.ref.at(y, x, c) * dark * fall;
        float shot = std::sqrt(std::max(v, 0.0f)) * 0.012f;
        float noise = static_cast<float>(rng.next_normal()) * (1.2f / 255.0f) +
                      static_cast<float>(rng.next_normal()) * shot;
        float q = std::round(std::clamp(v + noise, 0.0f, 1.0f) * 255.0f) / 255.0f;
        p.low.at(y, x, c) = q;
      }
    }
  return p;
}

DatasetPaths write_dataset(const std::string& dir, uint64_t seed, int n, int h, int w) {
  fs::create_directories(fs::path(dir) / "low");
  fs::create_directories(fs::path(dir) / "high");
  DatasetPaths out;
  for (int i = 0; i < n; ++i) {
    ScenePair p = make_pair(seed + static_cast<uint64_t>(i), h, w);
    char name[32];
    std::snprintf(name, sizeof name, "%03d.png", i);
    std::string low = (fs::path(dir) / "low" / name).string();
    std::string ref = (fs::path(dir) / "high" / name).string();
    mer::save_image(p.low, low);
    mer::save_image(p.ref, ref);
    out.lows.push_back(low);
    out.refs.push_back(ref);
  }
  return out;
}

}  // namespace synth
