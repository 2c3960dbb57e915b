#include "mer/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "mer/color.hpp"
#include "mer/serialize.hpp"
#include "mer/util.hpp"

namespace mer {

NetworkSpec NetworkSpec::standard(bool final_relu) {
  NetworkSpec s;
  s.input_channels = 4;
  auto conv = [](std::string name, std::string in, int k, int oc, int stride, bool relu,
                 bool up = false) {
    LayerSpec l;
    l.name = std::move(name);
    l.kind = LayerKind::conv;
    l.inputs = {std::move(in)};
    l.kernel = k;
    l.out_channels = oc;
    l.stride = stride;
    l.relu = relu;
    l.upsample = up;
    return l;
  };
  s.layers.push_back(conv("Conv0", "input", 3, 32, 1, true));
  s.layers.push_back(conv("Conv", "input", 9, 64, 1, false));
  s.layers.push_back(conv("Conv1", "Conv", 3, 64, 1, true));
  s.layers.push_back(conv("Conv2", "Conv1", 3, 128, 2, true));
  s.layers.push_back(conv("Conv3", "Conv2", 3, 128, 1, true));
  s.layers.push_back(conv("Conv4", "Conv3", 3, 64, 1, true, /*up=*/true));
  LayerSpec cat5;
  cat5.name = "Conv5";
  cat5.kind = LayerKind::concat;
  cat5.inputs = {"Conv4", "Conv1"};
  cat5.out_channels = 128;
  s.layers.push_back(cat5);
  s.layers.push_back(conv("Conv6", "Conv5", 3, 64, 1, true));
  LayerSpec cat7;
  cat7.name = "Conv7";
  cat7.kind = LayerKind::concat;
  cat7.inputs = {"Conv6", "Conv0"};
  cat7.out_channels = 96;
  s.layers.push_back(cat7);
  s.layers.push_back(conv("Conv8", "Conv7", 3, 64, 1, false));
  s.layers.push_back(conv("Conv9", "Conv8", 3, 4, 1, final_relu));
  LayerSpec sig;
  sig.name = "RI";
  sig.kind = LayerKind::sigmoid;
  sig.inputs = {"Conv9"};
  sig.out_channels = 4;
  s.layers.push_back(sig);
  return s;
}

namespace {

[[noreturn]] void spec_fail(const std::string& layer, const std::string& what) {
  throw std::invalid_argument("network spec, layer '" + layer + "': " + what);
}

std::map<std::string, int> channel_map(const NetworkSpec& spec) {
  std::map<std::string, int> ch;
  ch["input"] = spec.input_channels;
  for (const auto& l : spec.layers) {
    if (l.name.empty()) spec_fail("(unnamed)", "empty layer name");
    if (ch.count(l.name)) spec_fail(l.name, "duplicate name");
    int in_total = 0;
    for (const auto& in : l.inputs) {
      auto it = ch.find(in);
      if (it == ch.end()) spec_fail(l.name, "unknown input '" + in + "'");
      in_total += it->second;
    }
    switch (l.kind) {
      case LayerKind::conv:
        if (l.inputs.size() != 1) spec_fail(l.name, "conv takes exactly one input");
        if (l.kernel <= 0 || l.kernel % 2 == 0) spec_fail(l.name, "kernel must be odd and positive");
        if (l.stride != 1 && l.stride != 2) spec_fail(l.name, "stride must be 1 or 2");
        if (l.upsample && l.stride != 1) spec_fail(l.name, "upsample conv must have stride 1");
        if (l.out_channels <= 0) spec_fail(l.name, "output channels must be positive");
        ch[l.name] = l.out_channels;
        break;
      case LayerKind::concat:
        if (l.inputs.size() < 2) spec_fail(l.name, "concat takes at least two inputs");
        if (in_total != l.out_channels)
          spec_fail(l.name, "concat channel mismatch: inputs sum to " + std::to_string(in_total) +
                                ", declared " + std::to_string(l.out_channels));
        ch[l.name] = in_total;
        break;
      case LayerKind::sigmoid:
        if (l.inputs.size() != 1) spec_fail(l.name, "sigmoid takes exactly one input");
        if (in_total != l.out_channels)
          spec_fail(l.name, "sigmoid passes channels through; declared " +
                                std::to_string(l.out_channels) + " but input has " +
                                std::to_string(in_total));
        ch[l.name] = in_total;
        break;
    }
  }
  return ch;
}

}  // namespace

void NetworkSpec::validate() const {
  require(input_channels == 4, "network spec: input must carry 4 channels (RGB + max channel)");
  require(!layers.empty(), "network spec: no layers");
  auto ch = channel_map(*this);
  const auto& last = layers.back();
  if (last.kind != LayerKind::sigmoid) spec_fail(last.name, "final layer must be the sigmoid head");
  if (ch.at(last.name) != 4) spec_fail(last.name, "head must emit 4 channels (R, I)");
}

int NetworkSpec::channels_of(const std::string& name) const {
  auto ch = channel_map(*this);
  auto it = ch.find(name);
  require(it != ch.end(), "channels_of: unknown tensor '" + name + "'");
  return it->second;
}

ModelState build_network(const NetworkSpec& spec, uint64_t seed) {
  spec.validate();
  ModelState m;
  m.spec = spec;
  m.seed = seed;
  auto ch = channel_map(spec);
  Rng rng(seed);
  for (const auto& l : spec.layers) {
    if (l.kind != LayerKind::conv) continue;
    ConvParams<float> p;
    p.name = l.name;
    p.k = l.kernel;
    p.ic = ch.at(l.inputs.front());
    p.oc = l.out_channels;
    p.w.resize(static_cast<size_t>(p.k) * p.k * p.ic * p.oc);
    p.b.assign(p.oc, 0.0f);
    double stddev = std::sqrt(2.0 / (double(p.k) * p.k * p.ic));
    for (auto& v : p.w) v = static_cast<float>(rng.next_normal() * stddev);
    AdamState a;
    a.mw.assign(p.w.size(), 0.0f);
    a.vw.assign(p.w.size(), 0.0f);
    a.mb.assign(p.b.size(), 0.0f);
    a.vb.assign(p.b.size(), 0.0f);
    m.params.push_back(std::move(p));
    m.moments.push_back(std::move(a));
  }
  return m;
}

size_t parameter_count(const ModelState& m) {
  size_t n = 0;
  for (const auto& p : m.params) n += p.w.size() + p.b.size();
  return n;
}

namespace {

template <typename T>
struct ConvOps;

template <>
struct ConvOps<float> {
  static void fwd(const float* in, const float* w, const float* b, const kernels::ConvShape& s,
                  bool relu, float* out) {
    kernels::active().conv_fwd(in, w, b, s, relu, out);
  }
  static void bwd_input(const float* dout, const float* w, const kernels::ConvShape& s,
                        float* din) {
    kernels::active().conv_bwd_input(dout, w, s, din);
  }
  static void bwd_weights(const float* in, const float* dout, const kernels::ConvShape& s,
                          float* dw, float* db) {
    kernels::active().conv_bwd_weights(in, dout, s, dw, db);
  }
};

template <>
struct ConvOps<double> {
  static void fwd(const double* in, const double* w, const double* b, const kernels::ConvShape& s,
                  bool relu, double* out) {
    kernels::conv_fwd_f64(in, w, b, s, relu, out);
  }
  static void bwd_input(const double* dout, const double* w, const kernels::ConvShape& s,
                        double* din) {
    kernels::conv_bwd_input_f64(dout, w, s, din);
  }
  static void bwd_weights(const double* in, const double* dout, const kernels::ConvShape& s,
                          double* dw, double* db) {
    kernels::conv_bwd_weights_f64(in, dout, s, dw, db);
  }
};

template <typename T>
void ensure_shape(Tensor<T>& t, int h, int w, int c) {
  if (t.height() != h || t.width() != w || t.channels() != c) t = Tensor<T>(h, w, c);
}

template <typename T>
void upsample2x(const Tensor<T>& in, Tensor<T>& out) {
  ensure_shape(out, in.height() * 2, in.width() * 2, in.channels());
  const int c = in.channels(), w = in.width();
  for (int y = 0; y < in.height(); ++y) {
    const T* src = in.row(y);
    T* dst = out.row(2 * y);
    for (int x = 0; x < w; ++x) {
      std::memcpy(dst + static_cast<size_t>(2 * x) * c, src + static_cast<size_t>(x) * c, c * sizeof(T));
      std::memcpy(dst + static_cast<size_t>(2 * x + 1) * c, src + static_cast<size_t>(x) * c, c * sizeof(T));
    }
    std::memcpy(out.row(2 * y + 1), dst, static_cast<size_t>(out.width()) * c * sizeof(T));
  }
}

template <typename T>
void upsample2x_backward(const Tensor<T>& dout, Tensor<T>& din_accum) {
  const int c = dout.channels();
  for (int y = 0; y < dout.height(); ++y) {
    const T* src = dout.row(y);
    T* dst = din_accum.row(y / 2);
    for (int x = 0; x < dout.width(); ++x)
      for (int ch = 0; ch < c; ++ch) dst[(x / 2) * c + ch] += src[x * c + ch];
  }
}

template <typename T>
void add_into(const Tensor<T>& src, Tensor<T>& dst) {
  T* d = dst.data();
  const T* s = src.data();
  for (size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

// index of each layer's inputs into outs[] (-1 = the network input)
std::vector<std::vector<int>> resolve_inputs(const NetworkSpec& spec) {
  std::map<std::string, int> idx;
  idx["input"] = -1;
  std::vector<std::vector<int>> r(spec.layers.size());
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    for (const auto& in : spec.layers[i].inputs) r[i].push_back(idx.at(in));
    idx[spec.layers[i].name] = static_cast<int>(i);
  }
  return r;
}

}  // namespace

template <typename T>
void run_forward(const NetworkSpec& spec, const ParamSet<T>& params, const Tensor<T>& input4,
                 std::vector<Tensor<T>>& outs, NetWorkspace<T>& ws) {
  const size_t L = spec.layers.size();
  outs.resize(L);
  ws.pad.resize(L);
  ws.up.resize(L);
  auto inputs = resolve_inputs(spec);
  auto src_of = [&](int idx) -> const Tensor<T>& { return idx < 0 ? input4 : outs[idx]; };

  size_t ci = 0;
  for (size_t i = 0; i < L; ++i) {
    const LayerSpec& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::conv: {
        const Tensor<T>& raw = src_of(inputs[i][0]);
        const Tensor<T>* x = &raw;
        if (l.upsample) {
          upsample2x(raw, ws.up[i]);
          x = &ws.up[i];
        }
        const int p = l.stride == 1 ? (l.kernel - 1) / 2 : 1;
        kernels::pad_replicate(*x, p, ws.pad[i]);
        const int oh = (x->height() + 2 * p - l.kernel) / l.stride + 1;
        const int ow = (x->width() + 2 * p - l.kernel) / l.stride + 1;
        ensure_shape(outs[i], oh, ow, l.out_channels);
        const ConvParams<T>& cp = params[ci++];
        kernels::ConvShape s{ws.pad[i].height(), ws.pad[i].width(), cp.ic,
                             oh,                 ow,                cp.oc, cp.k, l.stride};
        ConvOps<T>::fwd(ws.pad[i].data(), cp.w.data(), cp.b.data(), s, l.relu, outs[i].data());
        break;
      }
      case LayerKind::concat: {
        const Tensor<T>& a = src_of(inputs[i][0]);
        ensure_shape(outs[i], a.height(), a.width(), l.out_channels);
        int off = 0;
        for (int idx : inputs[i]) {
          const Tensor<T>& part = src_of(idx);
          require(part.height() == a.height() && part.width() == a.width(),
                  "concat '" + l.name + "': spatial mismatch");
          const int pc = part.channels(), oc = l.out_channels;
          for (int y = 0; y < a.height(); ++y) {
            const T* sp = part.row(y);
            T* dp = outs[i].row(y) + off;
            for (int x = 0; x < a.width(); ++x)
              std::memcpy(dp + static_cast<size_t>(x) * oc, sp + static_cast<size_t>(x) * pc,
                          pc * sizeof(T));
          }
          off += pc;
        }
        break;
      }
      case LayerKind::sigmoid: {
        const Tensor<T>& a = src_of(inputs[i][0]);
        ensure_shape(outs[i], a.height(), a.width(), a.channels());
        const T* sp = a.data();
        T* dp = outs[i].data();
        for (size_t j = 0; j < a.size(); ++j) dp[j] = T(1) / (T(1) + std::exp(-sp[j]));
        break;
      }
    }
  }
}

template <typename T>
void run_backward(const NetworkSpec& spec, const ParamSet<T>& params, const Tensor<T>& input4,
                  const std::vector<Tensor<T>>& outs, const Tensor<T>& dfinal, ParamSet<T>& grads,
                  NetWorkspace<T>& ws) {
  const size_t L = spec.layers.size();
  auto inputs = resolve_inputs(spec);
  ws.dpre.resize(L);
  ws.dpad.resize(L);
  std::vector<Tensor<T>> gout(L);
  for (size_t i = 0; i < L; ++i) {
    gout[i] = Tensor<T>(outs[i].height(), outs[i].width(), outs[i].channels());
  }
  require(dfinal.same_shape(outs.back()), "run_backward: head gradient shape mismatch");
  gout.back() = dfinal;

  // conv layer index for each graph layer
  std::vector<int> conv_idx(L, -1);
  {
    int ci = 0;
    for (size_t i = 0; i < L; ++i)
      if (spec.layers[i].kind == LayerKind::conv) conv_idx[i] = ci++;
  }

  for (size_t ri = L; ri-- > 0;) {
    const LayerSpec& l = spec.layers[ri];
    const Tensor<T>& g = gout[ri];
    switch (l.kind) {
      case LayerKind::sigmoid: {
        int src = inputs[ri][0];
        require(src >= 0, "sigmoid on raw input is not part of any graph here");
        Tensor<T>& gin = gout[src];
        const T* y = outs[ri].data();
        const T* gp = g.data();
        T* dp = gin.data();
        for (size_t j = 0; j < g.size(); ++j) dp[j] += gp[j] * y[j] * (T(1) - y[j]);
        break;
      }
      case LayerKind::concat: {
        int off = 0;
        const int oc = l.out_channels;
        for (int idx : inputs[ri]) {
          require(idx >= 0, "concat consuming the raw input is unsupported");
          Tensor<T>& gin = gout[idx];
          const int pc = gin.channels();
          for (int y = 0; y < g.height(); ++y) {
            const T* sp = g.row(y) + off;
            T* dp = gin.row(y);
            for (int x = 0; x < g.width(); ++x)
              for (int ch = 0; ch < pc; ++ch) dp[static_cast<size_t>(x) * pc + ch] += sp[static_cast<size_t>(x) * oc + ch];
          }
          off += pc;
        }
        break;
      }
      case LayerKind::conv: {
        const int ci = conv_idx[ri];
        const ConvParams<T>& cp = params[ci];
        ConvParams<T>& gp = grads[ci];
        // pre-activation gradient
        Tensor<T>& dpre = ws.dpre[ri];
        ensure_shape(dpre, g.height(), g.width(), g.channels());
        if (l.relu) {
          const T* y = outs[ri].data();
          const T* gg = g.data();
          T* dd = dpre.data();
          for (size_t j = 0; j < g.size(); ++j) dd[j] = y[j] > T(0) ? gg[j] : T(0);
        } else {
          std::memcpy(dpre.data(), g.data(), g.size() * sizeof(T));
        }

        // recreate the padded input seen by the forward pass
        const int src = inputs[ri][0];
        const Tensor<T>& raw = src < 0 ? input4 : outs[src];
        const Tensor<T>* x = &raw;
        if (l.upsample) {
          upsample2x(raw, ws.up[ri]);
          x = &ws.up[ri];
        }
        const int p = l.stride == 1 ? (l.kernel - 1) / 2 : 1;
        kernels::pad_replicate(*x, p, ws.pad[ri]);
        kernels::ConvShape s{ws.pad[ri].height(), ws.pad[ri].width(), cp.ic,
                             dpre.height(),       dpre.width(),       cp.oc, cp.k, l.stride};
        ConvOps<T>::bwd_weights(ws.pad[ri].data(), dpre.data(), s, gp.w.data(), gp.b.data());

        if (src >= 0) {  // gradients w.r.t. the image input are never needed
          Tensor<T>& dpad = ws.dpad[ri];
          ensure_shape(dpad, ws.pad[ri].height(), ws.pad[ri].width(), cp.ic);
          dpad.fill(T(0));
          ConvOps<T>::bwd_input(dpre.data(), cp.w.data(), s, dpad.data());
          kernels::pad_replicate_backward(dpad, p, ws.scratch);
          if (l.upsample) {
            upsample2x_backward(ws.scratch, gout[src]);
          } else {
            add_into(ws.scratch, gout[src]);
          }
        }
        break;
      }
    }
  }
}

template void run_forward<float>(const NetworkSpec&, const ParamSet<float>&, const Tensor<float>&,
                                 std::vector<Tensor<float>>&, NetWorkspace<float>&);
template void run_forward<double>(const NetworkSpec&, const ParamSet<double>&,
                                  const Tensor<double>&, std::vector<Tensor<double>>&,
                                  NetWorkspace<double>&);
template void run_backward<float>(const NetworkSpec&, const ParamSet<float>&, const Tensor<float>&,
                                  const std::vector<Tensor<float>>&, const Tensor<float>&,
                                  ParamSet<float>&, NetWorkspace<float>&);
template void run_backward<double>(const NetworkSpec&, const ParamSet<double>&,
                                   const Tensor<double>&, const std::vector<Tensor<double>>&,
                                   const Tensor<double>&, ParamSet<double>&, NetWorkspace<double>&);

namespace {

// replicate-extend by one row/column so both extents are even
TensorF pad_to_even(const TensorF& img, bool& padded_h, bool& padded_w) {
  padded_h = img.height() % 2 != 0;
  padded_w = img.width() % 2 != 0;
  if (!padded_h && !padded_w) return img;
  TensorF out(img.height() + (padded_h ? 1 : 0), img.width() + (padded_w ? 1 : 0), img.channels());
  const int c = img.channels();
  for (int y = 0; y < out.height(); ++y) {
    const float* src = img.row(std::min(y, img.height() - 1));
    float* dst = out.row(y);
    for (int x = 0; x < out.width(); ++x) {
      int sx = std::min(x, img.width() - 1);
      for (int ch = 0; ch < c; ++ch) dst[x * c + ch] = src[sx * c + ch];
    }
  }
  return out;
}

}  // namespace

TensorF assemble_input(const TensorF& S) {
  TensorF in4(S.height(), S.width(), 4);
  const float* sp = S.data();
  float* dp = in4.data();
  const size_t n = static_cast<size_t>(S.height()) * S.width();
  for (size_t i = 0; i < n; ++i) {
    float r = sp[3 * i], g = sp[3 * i + 1], b = sp[3 * i + 2];
    dp[4 * i] = r;
    dp[4 * i + 1] = g;
    dp[4 * i + 2] = b;
    dp[4 * i + 3] = std::max(r, std::max(g, b));
  }
  return in4;
}

DecompositionT<float> forward(const ModelState& m, const TensorF& S) {
  require(S.channels() == 3 && S.height() > 0 && S.width() > 0,
          "forward: expects a non-empty HxWx3 image");
  bool ph = false, pw = false;
  TensorF even = pad_to_even(S, ph, pw);
  TensorF in4 = assemble_input(even);

  // scratch survives across calls; each thread owns its own
  static thread_local std::vector<TensorF> outs;
  static thread_local NetWorkspace<float> ws;
  run_forward(m.spec, m.params, in4, outs, ws);
  const TensorF& head = outs.back();

  DecompositionT<float> d{TensorF(S.height(), S.width(), 3), TensorF(S.height(), S.width(), 1)};
  for (int y = 0; y < S.height(); ++y) {
    const float* src = head.row(y);
    float* r = d.reflectance.row(y);
    float* il = d.illumination.row(y);
    for (int x = 0; x < S.width(); ++x) {
      r[x * 3 + 0] = src[x * 4 + 0];
      r[x * 3 + 1] = src[x * 4 + 1];
      r[x * 3 + 2] = src[x * 4 + 2];
      il[x] = src[x * 4 + 3];
    }
  }
  return d;
}

ParamSet<double> cast_params(const ParamSet<float>& p) {
  ParamSet<double> out;
  out.reserve(p.size());
  for (const auto& cp : p) {
    ConvParams<double> d;
    d.name = cp.name;
    d.k = cp.k;
    d.ic = cp.ic;
    d.oc = cp.oc;
    d.w.assign(cp.w.begin(), cp.w.end());
    d.b.assign(cp.b.begin(), cp.b.end());
    out.push_back(std::move(d));
  }
  return out;
}

template <typename T>
ParamSet<T> zeros_like_t(const ParamSet<T>& p) {
  ParamSet<T> out;
  out.reserve(p.size());
  for (const auto& cp : p) {
    ConvParams<T> z;
    z.name = cp.name;
    z.k = cp.k;
    z.ic = cp.ic;
    z.oc = cp.oc;
    z.w.assign(cp.w.size(), T(0));
    z.b.assign(cp.b.size(), T(0));
    out.push_back(std::move(z));
  }
  return out;
}

template ParamSet<float> zeros_like_t<float>(const ParamSet<float>&);
template ParamSet<double> zeros_like_t<double>(const ParamSet<double>&);

ParamSet<float> zeros_like(const ParamSet<float>& p) { return zeros_like_t<float>(p); }

// ---- checkpoint container ----

namespace {
constexpr char kMagic[8] = {'M', 'E', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

void write_raw(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
}  // namespace

void save_checkpoint(const ModelState& m, const std::string& path) {
  nlohmann::json header;
  header["spec"] = spec_to_json(m.spec);
  header["seed"] = m.seed;
  header["step"] = m.step;
  header["epoch"] = m.epoch;
  header["sampler_rng"] = m.sampler_rng;
  nlohmann::json tensors = nlohmann::json::array();
  size_t total = 0;
  for (const auto& p : m.params) {
    nlohmann::json t;
    t["layer"] = p.name;
    t["k"] = p.k;
    t["ic"] = p.ic;
    t["oc"] = p.oc;
    tensors.push_back(t);
    total += 3 * (p.w.size() + p.b.size());  // w,b plus two moment arrays each
  }
  header["tensors"] = tensors;
  header["total_floats"] = total;
  std::string hs = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  write_raw(os, kMagic, sizeof kMagic);
  write_raw(os, &kVersion, sizeof kVersion);
  uint64_t hlen = hs.size();
  write_raw(os, &hlen, sizeof hlen);
  write_raw(os, hs.data(), hs.size());
  for (size_t i = 0; i < m.params.size(); ++i) {
    const auto& p = m.params[i];
    const auto& a = m.moments[i];
    write_raw(os, p.w.data(), p.w.size() * 4);
    write_raw(os, p.b.data(), p.b.size() * 4);
    write_raw(os, a.mw.data(), a.mw.size() * 4);
    write_raw(os, a.vw.data(), a.vw.size() * 4);
    write_raw(os, a.mb.data(), a.mb.size() * 4);
    write_raw(os, a.vb.data(), a.vb.size() * 4);
  }
  if (!os) throw std::runtime_error("short write on checkpoint: " + path);
}

ModelState load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  uint64_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  std::string hs(hlen, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw std::runtime_error("truncated checkpoint header: " + path);
  nlohmann::json header = nlohmann::json::parse(hs);

  ModelState m;
  m.spec = spec_from_json(header.at("spec"));
  m.spec.validate();
  m.seed = header.at("seed").get<uint64_t>();
  m.step = header.at("step").get<int64_t>();
  m.epoch = header.at("epoch").get<int64_t>();
  m.sampler_rng = header.value("sampler_rng", "");

  for (const auto& t : header.at("tensors")) {
    ConvParams<float> p;
    p.name = t.at("layer").get<std::string>();
    p.k = t.at("k").get<int>();
    p.ic = t.at("ic").get<int>();
    p.oc = t.at("oc").get<int>();
    p.w.resize(static_cast<size_t>(p.k) * p.k * p.ic * p.oc);
    p.b.resize(p.oc);
    AdamState a;
    a.mw.resize(p.w.size());
    a.vw.resize(p.w.size());
    a.mb.resize(p.b.size());
    a.vb.resize(p.b.size());
    is.read(reinterpret_cast<char*>(p.w.data()), static_cast<std::streamsize>(p.w.size() * 4));
    is.read(reinterpret_cast<char*>(p.b.data()), static_cast<std::streamsize>(p.b.size() * 4));
    is.read(reinterpret_cast<char*>(a.mw.data()), static_cast<std::streamsize>(a.mw.size() * 4));
    is.read(reinterpret_cast<char*>(a.vw.data()), static_cast<std::streamsize>(a.vw.size() * 4));
    is.read(reinterpret_cast<char*>(a.mb.data()), static_cast<std::streamsize>(a.mb.size() * 4));
    is.read(reinterpret_cast<char*>(a.vb.data()), static_cast<std::streamsize>(a.vb.size() * 4));
    m.params.push_back(std::move(p));
    m.moments.push_back(std::move(a));
  }
  if (!is) throw std::runtime_error("truncated checkpoint data: " + path);

  // shapes must agree with the spec
  ModelState probe = build_network(m.spec, 0);
  require(probe.params.size() == m.params.size(), "checkpoint/spec layer count mismatch");
  for (size_t i = 0; i < m.params.size(); ++i)
    require(probe.params[i].w.size() == m.params[i].w.size() &&
                probe.params[i].oc == m.params[i].oc,
            "checkpoint tensor shape mismatch at layer " + m.params[i].name);
  return m;
}

nlohmann::json spec_to_json(const NetworkSpec& spec) {
  nlohmann::json j;
  j["input_channels"] = spec.input_channels;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) {
    nlohmann::json e;
    e["name"] = l.name;
    e["kind"] = l.kind == LayerKind::conv ? "conv" : l.kind == LayerKind::concat ? "concat" : "sigmoid";
    e["inputs"] = l.inputs;
    e["kernel"] = l.kernel;
    e["out_channels"] = l.out_channels;
    e["stride"] = l.stride;
    e["upsample"] = l.upsample;
    e["relu"] = l.relu;
    layers.push_back(e);
  }
  j["layers"] = layers;
  return j;
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec spec;
  spec.input_channels = j.at("input_channels").get<int>();
  for (const auto& e : j.at("layers")) {
    LayerSpec l;
    l.name = e.at("name").get<std::string>();
    std::string kind = e.at("kind").get<std::string>();
    l.kind = kind == "conv"     ? LayerKind::conv
             : kind == "concat" ? LayerKind::concat
                                : LayerKind::sigmoid;
    l.inputs = e.at("inputs").get<std::vector<std::string>>();
    l.kernel = e.at("kernel").get<int>();
    l.out_channels = e.at("out_channels").get<int>();
    l.stride = e.at("stride").get<int>();
    l.upsample = e.at("upsample").get<bool>();
    l.relu = e.at("relu").get<bool>();
    spec.layers.push_back(std::move(l));
  }
  return spec;
}

nlohmann::json weights_to_json(const LossWeights& w) {
  return nlohmann::json{{"lambda1", w.lambda1},
                        {"lambda2", w.lambda2},
                        {"lambda3", w.lambda3},
                        {"lambda4", w.lambda4}};
}

LossWeights weights_from_json(const nlohmann::json& j) {
  LossWeights w;
  w.lambda1 = j.at("lambda1").get<double>();
  w.lambda2 = j.at("lambda2").get<double>();
  w.lambda3 = j.at("lambda3").get<double>();
  w.lambda4 = j.at("lambda4").get<double>();
  return w;
}

}  // namespace mer
