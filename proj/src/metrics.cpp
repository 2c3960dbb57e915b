#include "mer/metrics.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mer/color.hpp"
#include "mer/image_io.hpp"
#include "mer/ops.hpp"

namespace mer {
namespace {

int quantize255(float v) {
  int b = static_cast<int>(std::lround(double(v) * 255.0));
  return std::min(255, std::max(0, b));
}

TensorF gray_of(const TensorF& img) {
  if (img.channels() == 1) return img;
  return to_gray(img);
}

double entropy_of_channel(const float* p, size_t n) {
  std::array<int64_t, 256> hist{};
  for (size_t i = 0; i < n; ++i) ++hist[quantize255(p[i])];
  double h = 0.0;
  for (int b = 0; b < 256; ++b) {
    if (hist[b] == 0) continue;
    double prob = double(hist[b]) / double(n);
    h -= prob * std::log2(prob);
  }
  return h;
}

std::vector<int> grid_indices(int extent, int max_samples) {
  int n = std::min(extent, max_samples);
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i)
    idx[i] = std::min(extent - 1, static_cast<int>((i + 0.5) * extent / n));
  return idx;
}

}  // namespace

double gray_entropy(const TensorF& img) {
  require(!img.empty(), "gray_entropy: empty image");
  TensorF g = gray_of(img);
  return entropy_of_channel(g.data(), g.size());
}

double color_entropy(const TensorF& img) {
  require(img.channels() == 3, "color_entropy: expects HxWx3");
  const size_t n = static_cast<size_t>(img.height()) * img.width();
  std::vector<float> ch(n);
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    const float* p = img.data();
    for (size_t i = 0; i < n; ++i) ch[i] = p[3 * i + c];
    total += entropy_of_channel(ch.data(), n);
  }
  return total;
}

double gray_mean_illumination(const TensorF& img) {
  require(!img.empty(), "gray_mean_illumination: empty image");
  TensorF g = gray_of(img);
  double acc = 0.0;
  const float* p = g.data();
  for (size_t i = 0; i < g.size(); ++i) acc += quantize255(p[i]);
  return acc / double(g.size());
}

double gray_mean_gradient(const TensorF& img) {
  require(!img.empty(), "gray_mean_gradient: empty image");
  TensorF g = gray_of(img);
  const int h = g.height(), w = g.width();
  double acc = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = quantize255(g.at(y, x, 0));
      double gh = x + 1 < w ? quantize255(g.at(y, x + 1, 0)) - v : 0.0;
      double gv = y + 1 < h ? quantize255(g.at(y + 1, x, 0)) - v : 0.0;
      acc += (std::abs(gh) + std::abs(gv)) / 2.0;
    }
  }
  return acc / (double(h) * w);
}

double loe(const TensorF& original, const TensorF& enhanced) {
  require(original.height() == enhanced.height() && original.width() == enhanced.width(),
          "loe: dimension mismatch");
  TensorF lo = original.channels() == 3 ? max_channel(original) : original;
  TensorF le = enhanced.channels() == 3 ? max_channel(enhanced) : enhanced;
  auto ys = grid_indices(lo.height(), 50);
  auto xs = grid_indices(lo.width(), 50);
  std::vector<float> so, se;
  so.reserve(ys.size() * xs.size());
  se.reserve(ys.size() * xs.size());
  for (int y : ys)
    for (int x : xs) {
      so.push_back(lo.at(y, x, 0));
      se.push_back(le.at(y, x, 0));
    }
  const size_t m = so.size();
  int64_t disagree = 0;
  for (size_t i = 0; i < m; ++i) {
    float oi = so[i], ei = se[i];
    for (size_t j = 0; j < m; ++j) {
      bool ord_o = oi >= so[j];
      bool ord_e = ei >= se[j];
      disagree += ord_o != ord_e;
    }
  }
  return 1000.0 * double(disagree) / (double(m) * double(m));
}

double psnr(const TensorF& a, const TensorF& b) {
  require(a.height() == b.height() && a.width() == b.width(), "psnr: dimension mismatch");
  TensorF ga = gray_of(a), gb = gray_of(b);
  double mse = 0.0;
  const float* pa = ga.data();
  const float* pb = gb.data();
  for (size_t i = 0; i < ga.size(); ++i) {
    double d = (double(pa[i]) - double(pb[i])) * 255.0;
    mse += d * d;
  }
  mse /= double(ga.size());
  if (mse < 1e-10) return 99.0;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

namespace {

// separable valid-region Gaussian filter in double
struct SsimMaps {
  int h = 0, w = 0;
  std::vector<double> v;
  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

SsimMaps gauss_valid(const std::vector<double>& img, int h, int w, const std::array<double, 11>& g) {
  const int r = 11;
  SsimMaps tmp{h, w - r + 1, std::vector<double>(static_cast<size_t>(h) * (w - r + 1), 0.0)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + r <= w; ++x) {
      double acc = 0.0;
      for (int t = 0; t < r; ++t) acc += g[t] * img[static_cast<size_t>(y) * w + x + t];
      tmp.at(y, x) = acc;
    }
  SsimMaps out{h - r + 1, tmp.w, std::vector<double>(static_cast<size_t>(h - r + 1) * tmp.w, 0.0)};
  for (int y = 0; y + r <= h; ++y)
    for (int x = 0; x < tmp.w; ++x) {
      double acc = 0.0;
      for (int t = 0; t < r; ++t) acc += g[t] * tmp.at(y + t, x);
      out.at(y, x) = acc;
    }
  return out;
}

}  // namespace

double ssim(const TensorF& a, const TensorF& b) {
  require(a.height() == b.height() && a.width() == b.width(), "ssim: dimension mismatch");
  require(a.height() >= 11 && a.width() >= 11, "ssim: image smaller than the 11x11 window");
  TensorF ga = gray_of(a), gb = gray_of(b);
  const int h = ga.height(), w = ga.width();
  const size_t n = static_cast<size_t>(h) * w;
  std::vector<double> xa(n), xb(n), xaa(n), xbb(n), xab(n);
  for (size_t i = 0; i < n; ++i) {
    double va = double(ga.data()[i]) * 255.0;
    double vb = double(gb.data()[i]) * 255.0;
    xa[i] = va;
    xb[i] = vb;
    xaa[i] = va * va;
    xbb[i] = vb * vb;
    xab[i] = va * vb;
  }
  std::array<double, 11> g{};
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    double d = i - 5.0;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;

  SsimMaps mu_a = gauss_valid(xa, h, w, g);
  SsimMaps mu_b = gauss_valid(xb, h, w, g);
  SsimMaps m_aa = gauss_valid(xaa, h, w, g);
  SsimMaps m_bb = gauss_valid(xbb, h, w, g);
  SsimMaps m_ab = gauss_valid(xab, h, w, g);

  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  double acc = 0.0;
  const size_t m = mu_a.v.size();
  for (size_t i = 0; i < m; ++i) {
    double ma = mu_a.v[i], mb = mu_b.v[i];
    double va = m_aa.v[i] - ma * ma;
    double vb = m_bb.v[i] - mb * mb;
    double cov = m_ab.v[i] - ma * mb;
    double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
    double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
    acc += num / den;
  }
  return acc / double(m);
}

TensorF he_baseline(const TensorF& img) {
  require(img.channels() == 3, "he_baseline: expects HxWx3");
  const size_t n = static_cast<size_t>(img.height()) * img.width();
  TensorF out(img.height(), img.width(), 3);
  TensorF ch(img.height(), img.width(), 1);
  for (int c = 0; c < 3; ++c) {
    const float* p = img.data();
    float* q = ch.data();
    for (size_t i = 0; i < n; ++i) q[i] = p[3 * i + c];
    TensorF eq = hist_equalize(ch);
    float* o = out.data();
    const float* e = eq.data();
    for (size_t i = 0; i < n; ++i) o[3 * i + c] = e[i];
  }
  return out;
}

MetricsReport measure_one(const TensorF& enhanced, const TensorF& low, const TensorF* ref) {
  MetricsReport r;
  r.ge = gray_entropy(enhanced);
  r.ce = color_entropy(enhanced);
  r.gmi = gray_mean_illumination(enhanced);
  r.gmg = gray_mean_gradient(enhanced);
  r.loe_low = loe(low, enhanced);
  if (ref) {
    r.loe_high = loe(*ref, enhanced);
    r.psnr = psnr(enhanced, *ref);
    r.ssim = ssim(enhanced, *ref);
  }
  return r;
}

namespace {

MetricsReport mean_of(const std::vector<MetricsReport>& rs) {
  MetricsReport m;
  if (rs.empty()) return m;
  double loe_h = 0, ps = 0, ss = 0;
  bool has_ref = rs.front().psnr.has_value();
  for (const auto& r : rs) {
    m.ge += r.ge;
    m.ce += r.ce;
    m.gmi += r.gmi;
    m.gmg += r.gmg;
    m.loe_low += r.loe_low;
    m.wall_time_s += r.wall_time_s;
    if (has_ref) {
      loe_h += r.loe_high.value();
      ps += r.psnr.value();
      ss += r.ssim.value();
    }
  }
  double n = double(rs.size());
  m.ge /= n;
  m.ce /= n;
  m.gmi /= n;
  m.gmg /= n;
  m.loe_low /= n;
  m.wall_time_s /= n;
  if (has_ref) {
    m.loe_high = loe_h / n;
    m.psnr = ps / n;
    m.ssim = ss / n;
  }
  return m;
}

SetEvaluation run_eval(const std::vector<std::string>& low_paths,
                       const std::vector<std::string>& ref_paths,
                       const std::function<TensorF(const TensorF&, double&)>& produce) {
  require(!low_paths.empty(), "evaluate: empty image list");
  require(ref_paths.empty() || ref_paths.size() == low_paths.size(),
          "evaluate: reference list must pair one-to-one with the low list");
  SetEvaluation ev;
  for (size_t i = 0; i < low_paths.size(); ++i) {
    TensorF low = load_image(low_paths[i]);
    TensorF ref;
    if (!ref_paths.empty()) ref = load_image(ref_paths[i]);
    double wall = 0.0;
    TensorF enh = produce(low, wall);
    require(enh.height() == low.height() && enh.width() == low.width(),
            "evaluate: enhanced size differs from low image " + low_paths[i]);
    MetricsReport r = measure_one(enh, low, ref_paths.empty() ? nullptr : &ref);
    r.wall_time_s = wall;
    ev.names.push_back(std::filesystem::path(low_paths[i]).filename().string());
    ev.per_image.push_back(r);
  }
  ev.mean = mean_of(ev.per_image);
  return ev;
}

}  // namespace

SetEvaluation evaluate_set(const Enhancer& enhance, const std::vector<std::string>& low_paths,
                           const std::vector<std::string>& ref_paths) {
  return run_eval(low_paths, ref_paths, [&](const TensorF& low, double& wall) {
    auto t0 = std::chrono::steady_clock::now();
    TensorF enh = enhance(low);
    wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return enh;
  });
}

SetEvaluation evaluate_files(const std::vector<std::string>& enhanced_paths,
                             const std::vector<std::string>& low_paths,
                             const std::vector<std::string>& ref_paths) {
  require(enhanced_paths.size() == low_paths.size(),
          "evaluate: enhanced list must pair one-to-one with the low list");
  size_t next = 0;
  return run_eval(low_paths, ref_paths, [&](const TensorF&, double& wall) {
    wall = 0.0;
    return load_image(enhanced_paths[next++]);
  });
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : "-"; }

void table_row(std::string& out, const std::string& name, const MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %8s %8s %8s %8s %9s %9s %8s %8s %9s\n", name.c_str(),
                fmt(r.ge).c_str(), fmt(r.gmi).c_str(), fmt(r.ce).c_str(), fmt(r.gmg).c_str(),
                fmt(r.loe_low).c_str(), fmt_opt(r.loe_high).c_str(), fmt_opt(r.psnr).c_str(),
                fmt_opt(r.ssim).c_str(), fmt(r.wall_time_s).c_str());
  out += buf;
}

nlohmann::json report_json(const MetricsReport& r) {
  nlohmann::json j;
  j["ge"] = r.ge;
  j["ce"] = r.ce;
  j["gmi"] = r.gmi;
  j["gmg"] = r.gmg;
  j["loe_low"] = r.loe_low;
  if (r.loe_high) j["loe_high"] = *r.loe_high;
  if (r.psnr) j["psnr"] = *r.psnr;
  if (r.ssim) j["ssim"] = *r.ssim;
  return j;
}

}  // namespace

std::string format_report_table(const SetEvaluation& ev) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %8s %8s %8s %8s %9s %9s %8s %8s %9s\n", "Image", "GE",
                "GMI", "CE", "GMG", "LOE_low", "LOE_high", "PSNR", "SSIM", "Time(s)");
  out += buf;
  for (size_t i = 0; i < ev.per_image.size(); ++i) table_row(out, ev.names[i], ev.per_image[i]);
  table_row(out, "Mean", ev.mean);
  return out;
}

void write_report_json(const SetEvaluation& ev, const std::string& path) {
  nlohmann::json j;
  j["mean"] = report_json(ev.mean);
  nlohmann::json per = nlohmann::json::array();
  for (size_t i = 0; i < ev.per_image.size(); ++i) {
    nlohmann::json e = report_json(ev.per_image[i]);
    e["name"] = ev.names[i];
    per.push_back(e);
  }
  j["per_image"] = per;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write report: " + path);
  os << j.dump(2) << "\n";
}

void write_report_timing_json(const SetEvaluation& ev, const std::string& path) {
  nlohmann::json j;
  j["mean_wall_s"] = ev.mean.wall_time_s;
  nlohmann::json per = nlohmann::json::array();
  for (size_t i = 0; i < ev.per_image.size(); ++i)
    per.push_back({{"name", ev.names[i]}, {"wall_s", ev.per_image[i].wall_time_s}});
  j["per_image"] = per;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write timing report: " + path);
  os << j.dump(2) << "\n";
}

}  // namespace mer
