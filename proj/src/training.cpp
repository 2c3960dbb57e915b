#include "mer/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mer/color.hpp"
#include "mer/image_io.hpp"

namespace fs = std::filesystem;

namespace mer {

void TrainConfig::validate(int min_h, int min_w) const {
  require(batch_size >= 1, "config: batch_size must be >= 1");
  require(patch_size > 0 && patch_size % 2 == 0, "config: patch_size must be positive and even");
  require(patch_size <= min_h && patch_size <= min_w,
          "config: patch_size " + std::to_string(patch_size) +
              " exceeds smallest training image (" + std::to_string(min_h) + "x" +
              std::to_string(min_w) + ")");
  require(learning_rate > 0, "config: learning_rate must be positive");
  require(epochs >= 0, "config: epochs must be >= 0");
  require(eval_every >= 1, "config: eval_every must be >= 1");
  require(weights.lambda1 >= 0 && weights.lambda2 >= 0 && weights.lambda3 >= 0 &&
              weights.lambda4 >= 0,
          "config: loss weights must be non-negative");
}

std::vector<std::string> Dataset::low_paths() const {
  std::vector<std::string> out;
  for (const auto& e : entries) out.push_back(e.low_path);
  return out;
}

std::vector<std::string> Dataset::ref_paths() const {
  std::vector<std::string> out;
  if (!has_refs) return out;
  for (const auto& e : entries) out.push_back(e.ref_path);
  return out;
}

namespace {

bool image_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ".png" || e == ".jpg" || e == ".jpeg" || e == ".bmp";
}

std::vector<fs::path> list_images(const std::string& dir) {
  require(fs::is_directory(dir), "not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && image_ext(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

DatasetEntry make_entry(const std::string& low_path) {
  TensorF img = load_image(low_path);
  DatasetEntry e;
  e.low_path = low_path;
  e.height = img.height();
  e.width = img.width();
  e.low_u8.resize(img.size());
  const float* p = img.data();
  for (size_t i = 0; i < img.size(); ++i)
    e.low_u8[i] = static_cast<unsigned char>(std::lround(p[i] * 255.0f));
  e.he_lut = hist_equalize_lut(max_channel(img));
  return e;
}

}  // namespace

Dataset ingest_dataset(const std::string& low_dir, const std::string& ref_dir) {
  auto lows = list_images(low_dir);
  require(!lows.empty(), "ingest: no readable images in " + low_dir);

  Dataset d;
  d.has_refs = !ref_dir.empty();
  std::vector<std::string> missing;
  for (const auto& p : lows) {
    DatasetEntry e = make_entry(p.string());
    if (d.has_refs) {
      fs::path ref = fs::path(ref_dir) / p.filename();
      if (!fs::exists(ref)) {
        missing.push_back(p.filename().string());
        continue;
      }
      e.ref_path = ref.string();
    }
    d.entries.push_back(std::move(e));
  }
  if (d.has_refs) {
    // extras on the reference side are pairing violations too
    for (const auto& r : list_images(ref_dir)) {
      fs::path low = fs::path(low_dir) / r.filename();
      if (!fs::exists(low)) missing.push_back(r.filename().string() + " (no low image)");
    }
  }
  if (!missing.empty()) {
    std::string names;
    for (const auto& m : missing) names += " " + m;
    throw std::invalid_argument("ingest: unpaired files:" + names);
  }
  return d;
}

Dataset ingest_single(const std::string& image_path) {
  require(fs::exists(image_path), "ingest: no such file " + image_path);
  Dataset d;
  d.entries.push_back(make_entry(image_path));
  return d;
}

std::vector<std::vector<Crop>> plan_epoch(const Dataset& data, const TrainConfig& cfg, Rng& rng) {
  const int n = static_cast<int>(data.entries.size());
  require(n > 0, "plan_epoch: empty dataset");
  std::vector<Crop> crops;
  if (cfg.mode == TrainMode::single_image || n == 1) {
    const auto& e = data.entries.front();
    for (int i = 0; i < cfg.batch_size; ++i) {
      Crop c;
      c.image = 0;
      c.y = static_cast<int>(rng.next_below(e.height - cfg.patch_size + 1));
      c.x = static_cast<int>(rng.next_below(e.width - cfg.patch_size + 1));
      crops.push_back(c);
    }
    return {crops};
  }
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  for (int idx : order) {
    const auto& e = data.entries[idx];
    Crop c;
    c.image = idx;
    c.y = static_cast<int>(rng.next_below(e.height - cfg.patch_size + 1));
    c.x = static_cast<int>(rng.next_below(e.width - cfg.patch_size + 1));
    crops.push_back(c);
  }
  std::vector<std::vector<Crop>> batches;
  for (int i = 0; i < n; i += cfg.batch_size) {
    std::vector<Crop> b(crops.begin() + i, crops.begin() + std::min(n, i + cfg.batch_size));
    batches.push_back(std::move(b));
  }
  return batches;
}

void materialize_patch(const Dataset& data, const TrainConfig& cfg, const Crop& c, TensorF& S,
                       TensorF& target) {
  const auto& e = data.entries[c.image];
  const int ps = cfg.patch_size;
  if (S.height() != ps || S.width() != ps || S.channels() != 3) S = TensorF(ps, ps, 3);
  if (target.height() != ps || target.width() != ps || target.channels() != 1)
    target = TensorF(ps, ps, 1);
  const float inv = 1.0f / 255.0f;
  for (int y = 0; y < ps; ++y) {
    const unsigned char* src = e.low_u8.data() + (static_cast<size_t>(c.y + y) * e.width + c.x) * 3;
    float* srow = S.row(y);
    float* trow = target.row(y);
    for (int x = 0; x < ps; ++x) {
      unsigned char r = src[3 * x], g = src[3 * x + 1], b = src[3 * x + 2];
      srow[3 * x] = r * inv;
      srow[3 * x + 1] = g * inv;
      srow[3 * x + 2] = b * inv;
      trow[x] = e.he_lut[std::max(r, std::max(g, b))];
    }
  }
  if (cfg.he_scope == HeScope::per_patch) target = hist_equalize(max_channel(S));
}

TensorF enhance(const ModelState& m, const TensorF& S) {
  DecompositionT<float> d = forward(m, S);
  d.reflectance.clamp(0.0f, 1.0f);
  return d.reflectance;
}

namespace {

void adam_update(ModelState& m, const ParamSet<float>& grads, double lr) {
  m.step += 1;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const float corr1 = static_cast<float>(1.0 - std::pow(b1, double(m.step)));
  const float corr2 = static_cast<float>(1.0 - std::pow(b2, double(m.step)));
  const float flr = static_cast<float>(lr);
  for (size_t li = 0; li < m.params.size(); ++li) {
    auto apply = [&](std::vector<float>& p, const std::vector<float>& g, std::vector<float>& mm,
                     std::vector<float>& vv) {
      for (size_t i = 0; i < p.size(); ++i) {
        float gi = g[i];
        mm[i] = 0.9f * mm[i] + 0.1f * gi;
        vv[i] = 0.999f * vv[i] + 0.001f * gi * gi;
        float mhat = mm[i] / corr1;
        float vhat = vv[i] / corr2;
        p[i] -= flr * mhat / (std::sqrt(vhat) + float(eps));
      }
    };
    apply(m.params[li].w, grads[li].w, m.moments[li].mw, m.moments[li].vw);
    apply(m.params[li].b, grads[li].b, m.moments[li].mb, m.moments[li].vb);
  }
}

nlohmann::json loss_json(const LossBreakdownT<double>& b) {
  return nlohmann::json{{"reconstruction", b.reconstruction},
                        {"reflectance", b.reflectance},
                        {"illumination", b.illumination},
                        {"reflectance_tv", b.reflectance_tv},
                        {"total", b.total}};
}

nlohmann::json metrics_json(const MetricsReport& r) {
  nlohmann::json j{{"ge", r.ge}, {"ce", r.ce}, {"gmi", r.gmi}, {"gmg", r.gmg},
                   {"loe_low", r.loe_low}};
  if (r.loe_high) j["loe_high"] = *r.loe_high;
  if (r.psnr) j["psnr"] = *r.psnr;
  if (r.ssim) j["ssim"] = *r.ssim;
  return j;
}

struct Sinks {
  std::ofstream log, timings, curve;
  std::string ckpt_dir;
  bool enabled = false;

  explicit Sinks(const TrainSinks* s, bool resume) {
    if (!s || s->out_dir.empty()) return;
    enabled = true;
    fs::create_directories(s->out_dir);
    ckpt_dir = (fs::path(s->out_dir) / "checkpoints").string();
    fs::create_directories(ckpt_dir);
    auto mode = resume ? std::ios::app : std::ios::trunc;
    log.open(fs::path(s->out_dir) / "train_log.jsonl", mode);
    timings.open(fs::path(s->out_dir) / "timings.jsonl", mode);
    curve.open(fs::path(s->out_dir) / "metrics_curve.jsonl", mode);
  }
};

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& cfg, const EvalSet* eval,
                  const TrainSinks* sinks, const ModelState* resume_from) {
  require(!data.entries.empty(), "train: empty dataset");
  int min_h = data.entries.front().height, min_w = data.entries.front().width;
  for (const auto& e : data.entries) {
    min_h = std::min(min_h, e.height);
    min_w = std::min(min_w, e.width);
  }
  cfg.validate(min_h, min_w);
  if (cfg.mode == TrainMode::single_image)
    require(data.entries.size() == 1, "train: single-image mode expects exactly one image");

  TrainResult result;
  Rng sampler(cfg.seed ^ 0x53414d50u);  // decoupled from the init stream
  if (resume_from) {
    result.model = *resume_from;
    if (!result.model.sampler_rng.empty()) sampler.deserialize(result.model.sampler_rng);
  } else {
    result.model = build_network(NetworkSpec::standard(cfg.final_relu), cfg.seed);
  }
  ModelState& model = result.model;

  Sinks out(sinks, resume_from != nullptr);
  std::ostream* progress = sinks ? sinks->progress : nullptr;

  ParamSet<float> grads = zeros_like(model.params);
  NetWorkspace<float> ws;
  std::vector<TensorF> outs;
  TensorF S, target, dR, dI, dfinal;

  auto run_eval_snapshot = [&]() -> MetricsReport {
    return evaluate_set([&](const TensorF& low) { return enhance(model, low); }, eval->low_paths,
                        eval->ref_paths)
        .mean;
  };

  auto save_ckpt = [&](int epoch) {
    if (!out.enabled) return;
    model.sampler_rng = sampler.serialize();
    char name[64];
    std::snprintf(name, sizeof name, "epoch-%06d.ckpt", epoch);
    save_checkpoint(model, (fs::path(out.ckpt_dir) / name).string());
  };

  const int start_epoch = static_cast<int>(model.epoch);
  for (int epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    auto batches = plan_epoch(data, cfg, sampler);

    LossBreakdownT<double> sum{};
    size_t samples = 0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      for (auto& g : grads) {
        std::fill(g.w.begin(), g.w.end(), 0.0f);
        std::fill(g.b.begin(), g.b.end(), 0.0f);
      }
      LossBreakdownT<double> batch_sum{};
      const float inv_b = 1.0f / static_cast<float>(batch.size());
      for (const Crop& c : batch) {
        materialize_patch(data, cfg, c, S, target);
        TensorF in4 = assemble_input(S);
        run_forward(model.spec, model.params, in4, outs, ws);
        const TensorF& head = outs.back();

        // split head into R and I
        TensorF R(head.height(), head.width(), 3), I(head.height(), head.width(), 1);
        const float* hp = head.data();
        for (size_t i = 0; i < I.size(); ++i) {
          R.data()[3 * i] = hp[4 * i];
          R.data()[3 * i + 1] = hp[4 * i + 1];
          R.data()[3 * i + 2] = hp[4 * i + 2];
          I.data()[i] = hp[4 * i + 3];
        }
        LossBreakdownT<float> b = total_loss_backward(S, R, I, target, cfg.weights, dR, dI);
        batch_sum.reconstruction += b.reconstruction;
        batch_sum.reflectance += b.reflectance;
        batch_sum.illumination += b.illumination;
        batch_sum.reflectance_tv += b.reflectance_tv;
        batch_sum.total += b.total;

        if (dfinal.height() != head.height() || dfinal.width() != head.width() ||
            dfinal.channels() != 4)
          dfinal = TensorF(head.height(), head.width(), 4);
        float* dp = dfinal.data();
        for (size_t i = 0; i < I.size(); ++i) {
          dp[4 * i] = dR.data()[3 * i] * inv_b;
          dp[4 * i + 1] = dR.data()[3 * i + 1] * inv_b;
          dp[4 * i + 2] = dR.data()[3 * i + 2] * inv_b;
          dp[4 * i + 3] = dI.data()[i] * inv_b;
        }
        run_backward(model.spec, model.params, in4, outs, dfinal, grads, ws);
      }
      double batch_mean = batch_sum.total / double(batch.size());
      if (!std::isfinite(batch_mean)) {
        char msg[256];
        std::snprintf(msg, sizeof msg,
                      "non-finite loss at epoch %d batch %zu: recon=%g refl=%g ill=%g tv=%g",
                      epoch, bi, batch_sum.reconstruction, batch_sum.reflectance,
                      batch_sum.illumination, batch_sum.reflectance_tv);
        throw std::runtime_error(msg);
      }
      adam_update(model, grads, cfg.learning_rate);

      sum.reconstruction += batch_sum.reconstruction;
      sum.reflectance += batch_sum.reflectance;
      sum.illumination += batch_sum.illumination;
      sum.reflectance_tv += batch_sum.reflectance_tv;
      sum.total += batch_sum.total;
      samples += batch.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = {sum.reconstruction / double(samples), sum.reflectance / double(samples),
                     sum.illumination / double(samples), sum.reflectance_tv / double(samples),
                     sum.total / double(samples)};
    model.epoch = epoch;

    const bool boundary = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
    if (eval && !eval->low_paths.empty() && boundary) rec.eval = run_eval_snapshot();
    rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (out.enabled) {
      nlohmann::json j{{"epoch", epoch}, {"loss", loss_json(rec.mean_loss)}};
      out.log << j.dump() << "\n";
      out.log.flush();
      out.timings << nlohmann::json{{"epoch", epoch}, {"wall_s", rec.wall_s}}.dump() << "\n";
      out.timings.flush();
      if (rec.eval) {
        out.curve << nlohmann::json{{"epoch", epoch}, {"metrics", metrics_json(*rec.eval)}}.dump()
                  << "\n";
        out.curve.flush();
      }
      if (boundary) save_ckpt(epoch);
    }
    if (progress && (epoch % 10 == 0 || epoch == cfg.epochs)) {
      *progress << "epoch " << epoch << "/" << cfg.epochs << "  loss " << rec.mean_loss.total
                << "  (" << rec.wall_s << " s)\n";
      progress->flush();
    }
    result.log.records.push_back(std::move(rec));
  }

  model.sampler_rng = sampler.serialize();
  return result;
}

std::vector<MetricsReport> repeated_stability_run(const Dataset& data, const TrainConfig& cfg,
                                                  int runs, const EvalSet& eval) {
  require(runs >= 1, "repeated_stability_run: runs must be >= 1");
  std::vector<MetricsReport> reports;
  for (int r = 0; r < runs; ++r) {
    TrainConfig c = cfg;
    c.seed = cfg.seed + static_cast<uint64_t>(r);
    TrainResult res = train(data, c, nullptr, nullptr);
    reports.push_back(
        evaluate_set([&](const TensorF& low) { return enhance(res.model, low); }, eval.low_paths,
                     eval.ref_paths)
            .mean);
  }
  return reports;
}

}  // namespace mer
