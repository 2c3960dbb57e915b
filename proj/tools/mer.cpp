// mer: self-supervised low-light enhancement tool.
//   train        train the decomposition network on low-light images only
//   enhance      run a trained model over images
//   evaluate     metric battery over enhanced/low(/reference) triples
//   baseline-he  per-channel histogram equalization baseline

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "mer/image_io.hpp"
#include "mer/manifest.hpp"
#include "mer/metrics.hpp"
#include "mer/serialize.hpp"
#include "mer/training.hpp"

namespace fs = std::filesystem;
using namespace mer;

namespace {

std::vector<std::string> collect_inputs(const std::string& in_path) {
  std::vector<std::string> files;
  if (fs::is_directory(in_path)) {
    std::vector<fs::path> ps;
    for (const auto& e : fs::directory_iterator(in_path))
      if (e.is_regular_file()) ps.push_back(e.path());
    std::sort(ps.begin(), ps.end());
    for (const auto& p : ps) {
      std::string ext = p.extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
        files.push_back(p.string());
    }
  } else if (fs::exists(in_path)) {
    files.push_back(in_path);
  }
  return files;
}

using Series = std::vector<std::pair<double, double>>;

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<std::pair<std::string, Series>>& series) {
  const double W = 720, H = 420, ml = 60, mr = 20, mt = 40, mb = 40;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& [name, s] : series)
    for (auto [x, y] : s) {
      xmin = std::min(xmin, x), xmax = std::max(xmax, x);
      ymin = std::min(ymin, y), ymax = std::max(ymax, y);
    }
  if (xmin > xmax) return;
  if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto sy = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };
  const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  std::ofstream os(path);
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
     << "</text>\n";
  os << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
     << "' stroke='black'/>\n";
  os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
     << "' stroke='black'/>\n";
  char buf[128];
  std::snprintf(buf, sizeof buf,
                "<text x='%g' y='%g' font-size='11'>%.4g</text>"
                "<text x='%g' y='%g' font-size='11'>%.4g</text>",
                ml - 50.0, H - mb, ymin, ml - 50.0, mt + 10.0, ymax);
  os << buf << "\n";
  std::snprintf(buf, sizeof buf,
                "<text x='%g' y='%g' font-size='11'>%.4g</text>"
                "<text x='%g' y='%g' font-size='11'>%.4g</text>",
                ml, H - mb + 16.0, xmin, W - mr - 30.0, H - mb + 16.0, xmax);
  os << buf << "\n";
  int ci = 0;
  for (const auto& [name, s] : series) {
    const char* col = colors[ci % 6];
    os << "<polyline fill='none' stroke='" << col << "' stroke-width='1.5' points='";
    for (auto [x, y] : s) os << sx(x) << "," << sy(y) << " ";
    os << "'/>\n";
    os << "<text x='" << W - mr - 110 << "' y='" << mt + 14 * ci << "' font-size='11' fill='"
       << col << "'>" << name << "</text>\n";
    ++ci;
  }
  os << "</svg>\n";
}

void render_plots(const std::string& out_dir) {
  // loss curve
  {
    std::ifstream is(fs::path(out_dir) / "train_log.jsonl");
    Series total, recon, refl, ill;
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      double e = j.at("epoch").get<double>();
      total.push_back({e, j["loss"]["total"].get<double>()});
      recon.push_back({e, j["loss"]["reconstruction"].get<double>()});
      refl.push_back({e, j["loss"]["reflectance"].get<double>()});
      ill.push_back({e, j["loss"]["illumination"].get<double>()});
    }
    if (!total.empty())
      write_svg_plot((fs::path(out_dir) / "loss_curve.svg").string(), "training loss",
                     {{"total", total},
                      {"reconstruction", recon},
                      {"reflectance", refl},
                      {"illumination", ill}});
  }
  // metric curves
  {
    std::ifstream is(fs::path(out_dir) / "metrics_curve.jsonl");
    std::map<std::string, Series> by_metric;
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      double e = j.at("epoch").get<double>();
      for (auto& [k, v] : j.at("metrics").items())
        by_metric[k].push_back({e, v.get<double>()});
    }
    for (auto& [k, s] : by_metric)
      write_svg_plot((fs::path(out_dir) / ("metric_" + k + ".svg")).string(), k, {{k, s}});
  }
}

int cmd_train(const std::string& low_dir, const std::string& ref_dir, const std::string& out_dir,
              const std::string& single_image, const std::string& test_low,
              const std::string& test_ref, const std::string& resume_path, TrainConfig cfg,
              bool epochs_set, bool plots) {
  Dataset data;
  if (!single_image.empty()) {
    cfg.mode = TrainMode::single_image;
    if (!epochs_set) cfg.epochs = 10000;
    data = ingest_single(single_image);
  } else {
    require(!low_dir.empty(), "train: --low-dir (or --single-image) is required");
    data = ingest_dataset(low_dir, ref_dir);
  }

  EvalSet eval;
  if (!test_low.empty()) {
    Dataset t = ingest_dataset(test_low, test_ref);
    eval.low_paths = t.low_paths();
    eval.ref_paths = t.ref_paths();
  } else if (data.has_refs) {
    // no held-out set given: snapshot on the first few training pairs
    size_t n = std::min<size_t>(15, data.entries.size());
    for (size_t i = 0; i < n; ++i) {
      eval.low_paths.push_back(data.entries[i].low_path);
      eval.ref_paths.push_back(data.entries[i].ref_path);
    }
  }

  fs::create_directories(out_dir);
  nlohmann::json resolved{{"mode", cfg.mode == TrainMode::single_image ? "single-image" : "dataset"},
                          {"batch_size", cfg.batch_size},
                          {"patch_size", cfg.patch_size},
                          {"learning_rate", cfg.learning_rate},
                          {"epochs", cfg.epochs},
                          {"seed", cfg.seed},
                          {"weights", weights_to_json(cfg.weights)},
                          {"he_scope", cfg.he_scope == HeScope::full_image ? "full-image" : "per-patch"},
                          {"eval_every", cfg.eval_every},
                          {"final_relu", cfg.final_relu},
                          {"resume", resume_path}};
  std::vector<std::string> inputs = data.low_paths();
  for (const auto& r : data.ref_paths()) inputs.push_back(r);
  nlohmann::json layout{{"train_log", "train_log.jsonl"},
                        {"timings", "timings.jsonl"},
                        {"metrics_curve", "metrics_curve.jsonl"},
                        {"checkpoints", "checkpoints/"},
                        {"final_model", "model.ckpt"}};
  write_run_manifest((fs::path(out_dir) / "run_manifest.json").string(), resolved, inputs, layout);

  ModelState resume;
  const ModelState* resume_ptr = nullptr;
  if (!resume_path.empty()) {
    resume = load_checkpoint(resume_path);
    resume_ptr = &resume;
  }

  TrainSinks sinks;
  sinks.out_dir = out_dir;
  sinks.progress = &std::cerr;
  TrainResult res = train(data, cfg, eval.low_paths.empty() ? nullptr : &eval, &sinks, resume_ptr);
  save_checkpoint(res.model, (fs::path(out_dir) / "model.ckpt").string());

  if (!eval.low_paths.empty()) {
    SetEvaluation ev = evaluate_set([&](const TensorF& low) { return enhance(res.model, low); },
                                    eval.low_paths, eval.ref_paths);
    write_report_json(ev, (fs::path(out_dir) / "report.json").string());
    write_report_timing_json(ev, (fs::path(out_dir) / "report_timing.json").string());
    std::ofstream(fs::path(out_dir) / "report.txt") << format_report_table(ev);
    std::cout << format_report_table(ev);
  }
  if (plots) render_plots(out_dir);
  return 0;
}

int cmd_enhance(const std::string& model_path, const std::string& in_path,
                const std::string& out_dir, bool save_decomposition) {
  ModelState model = load_checkpoint(model_path);
  auto files = collect_inputs(in_path);
  if (files.empty()) {
    std::cerr << "enhance: no input images at " << in_path << "\n";
    return 1;
  }
  fs::create_directories(out_dir);
  std::vector<std::string> failed;
  for (const auto& f : files) {
    try {
      TensorF low = load_image(f);
      auto t0 = std::chrono::steady_clock::now();
      DecompositionT<float> d = forward(model, low);
      double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      d.reflectance.clamp(0.0f, 1.0f);
      std::string stem = fs::path(f).stem().string();
      save_image(d.reflectance, (fs::path(out_dir) / (stem + ".png")).string());
      if (save_decomposition) {
        save_image(d.reflectance, (fs::path(out_dir) / (stem + "_reflectance.png")).string());
        save_image(d.illumination, (fs::path(out_dir) / (stem + "_illumination.png")).string());
      }
      std::cout << stem << "  " << low.width() << "x" << low.height() << "  " << wall << " s\n";
    } catch (const std::exception& e) {
      failed.push_back(f + ": " + e.what());
    }
  }
  for (const auto& f : failed) std::cerr << "skipped " << f << "\n";
  return failed.empty() ? 0 : 1;
}

int cmd_evaluate(const std::string& enhanced_dir, const std::string& low_dir,
                 const std::string& ref_dir, const std::string& out_prefix) {
  auto lows = collect_inputs(low_dir);
  auto enhanced = collect_inputs(enhanced_dir);
  require(!lows.empty(), "evaluate: no images in " + low_dir);

  // pair by filename stem (enhancement may have changed the container format)
  auto stem_map = [](const std::vector<std::string>& files) {
    std::map<std::string, std::string> m;
    for (const auto& f : files) m[fs::path(f).stem().string()] = f;
    return m;
  };
  auto em = stem_map(enhanced);
  auto rm = ref_dir.empty() ? std::map<std::string, std::string>{} : stem_map(collect_inputs(ref_dir));

  std::vector<std::string> low_paths, enh_paths, ref_paths, unpaired;
  for (const auto& f : lows) {
    std::string stem = fs::path(f).stem().string();
    auto it = em.find(stem);
    if (it == em.end()) {
      unpaired.push_back(stem + " (no enhanced image)");
      continue;
    }
    if (!ref_dir.empty()) {
      auto rit = rm.find(stem);
      if (rit == rm.end()) {
        unpaired.push_back(stem + " (no reference)");
        continue;
      }
      ref_paths.push_back(rit->second);
    }
    low_paths.push_back(f);
    enh_paths.push_back(it->second);
  }
  if (enhanced.size() != low_paths.size())
    for (const auto& [stem, f] : em)
      if (!std::count_if(enh_paths.begin(), enh_paths.end(),
                         [&](const std::string& p) { return p == f; }))
        unpaired.push_back(stem + " (no low image)");
  if (!unpaired.empty()) {
    std::cerr << "evaluate: unpairable files:\n";
    for (const auto& u : unpaired) std::cerr << "  " << u << "\n";
    return 1;
  }

  SetEvaluation ev = evaluate_files(enh_paths, low_paths, ref_paths);
  write_report_json(ev, out_prefix + ".json");
  std::ofstream(out_prefix + ".txt") << format_report_table(ev);
  std::cout << format_report_table(ev);
  return 0;
}

int cmd_baseline(const std::string& in_dir, const std::string& out_dir) {
  auto files = collect_inputs(in_dir);
  if (files.empty()) {
    std::cerr << "baseline-he: no input images at " << in_dir << "\n";
    return 1;
  }
  fs::create_directories(out_dir);
  for (const auto& f : files) {
    TensorF img = load_image(f);
    save_image(he_baseline(img), (fs::path(out_dir) / (fs::path(f).stem().string() + ".png")).string());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maximum-entropy Retinex self-supervised low-light enhancement"};
  app.require_subcommand(1);

  // train
  auto* t = app.add_subcommand("train", "train the decomposition network");
  t->set_config("--config");
  std::string low_dir, ref_dir, out_dir, single_image, test_low, test_ref, resume, he_scope = "full-image";
  TrainConfig cfg;
  bool plots = false, final_relu = false;
  t->add_option("--low-dir", low_dir, "directory of low-light training images");
  t->add_option("--ref-dir", ref_dir, "paired reference images (evaluation only)");
  t->add_option("--out", out_dir, "output directory")->required();
  t->add_option("--single-image", single_image, "train on one image only");
  t->add_option("--test-low", test_low, "held-out low images for metric snapshots");
  t->add_option("--test-ref", test_ref, "held-out references");
  t->add_option("--resume", resume, "checkpoint to continue from");
  auto* eopt = t->add_option("--epochs", cfg.epochs, "training epochs");
  t->add_option("--batch", cfg.batch_size, "batch size");
  t->add_option("--patch", cfg.patch_size, "square patch size");
  t->add_option("--lr", cfg.learning_rate, "Adam learning rate");
  t->add_option("--seed", cfg.seed, "RNG seed");
  t->add_option("--eval-every", cfg.eval_every, "epochs between metric snapshots/checkpoints");
  t->add_option("--lambda1", cfg.weights.lambda1, "reflectance term weight");
  t->add_option("--lambda2", cfg.weights.lambda2, "illumination term weight");
  t->add_option("--lambda3", cfg.weights.lambda3, "structure-awareness sharpness");
  t->add_option("--lambda4", cfg.weights.lambda4, "reflectance TV weight");
  t->add_option("--he-scope", he_scope, "full-image | per-patch")
      ->check(CLI::IsMember({"full-image", "per-patch"}));
  t->add_flag("--final-relu", final_relu, "keep the layer-table ReLU before the sigmoid head (freezes training; off by default)");
  t->add_flag("--render-plots", plots, "emit SVG plots next to the data files");

  // enhance
  auto* e = app.add_subcommand("enhance", "enhance images with a trained model");
  std::string model_path, in_path, enh_out;
  bool save_dec = false;
  e->add_option("--model", model_path, "checkpoint file")->required();
  e->add_option("--in", in_path, "input image or directory")->required();
  e->add_option("--out", enh_out, "output directory")->required();
  e->add_flag("--save-decomposition", save_dec, "also write reflectance and illumination");

  // evaluate
  auto* v = app.add_subcommand("evaluate", "metric battery over enhanced images");
  std::string ev_enh, ev_low, ev_ref, ev_out;
  v->add_option("--enhanced", ev_enh, "directory of enhanced images")->required();
  v->add_option("--low", ev_low, "directory of original low images")->required();
  v->add_option("--ref", ev_ref, "directory of reference images");
  v->add_option("--out", ev_out, "report path prefix")->required();

  // baseline-he
  auto* b = app.add_subcommand("baseline-he", "histogram-equalization baseline");
  std::string he_in, he_out;
  b->add_option("--in", he_in, "input directory")->required();
  b->add_option("--out", he_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (t->parsed()) {
      cfg.he_scope = he_scope == "per-patch" ? HeScope::per_patch : HeScope::full_image;
      cfg.final_relu = final_relu;
      return cmd_train(low_dir, ref_dir, out_dir, single_image, test_low, test_ref, resume, cfg,
                       eopt->count() > 0, plots);
    }
    if (e->parsed()) return cmd_enhance(model_path, in_path, enh_out, save_dec);
    if (v->parsed()) return cmd_evaluate(ev_enh, ev_low, ev_ref, ev_out);
    if (b->parsed()) return cmd_baseline(he_in, he_out);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
