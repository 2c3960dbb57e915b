#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mer/loss.hpp"
#include "mer/metrics.hpp"
#include "mer/network.hpp"
#include "mer/util.hpp"

namespace mer {

enum class TrainMode { dataset, single_image };

// Scope of the equalization target: computed once on each full image's max
// channel (patch targets are the aligned crops), or recomputed per patch.
enum class HeScope { full_image, per_patch };

struct TrainConfig {
  TrainMode mode = TrainMode::dataset;
  int batch_size = 16;
  int patch_size = 48;
  double learning_rate = 0.001;
  int epochs = 200;  // single-image runs default to 10000 at the CLI
  uint64_t seed = 0;
  LossWeights weights;
  HeScope he_scope = HeScope::full_image;
  int eval_every = 20;
  bool final_relu = false;

  void validate(int min_h, int min_w) const;
};

struct DatasetEntry {
  std::string low_path;
  std::string ref_path;  // empty when no reference exists
  int height = 0, width = 0;
  std::vector<unsigned char> low_u8;  // cached H*W*3 bytes
  std::array<float, 256> he_lut{};    // full-image equalization of the max channel
};

// Training consumes only the low-light images and their equalization targets;
// references ride along purely for evaluation.
struct Dataset {
  std::vector<DatasetEntry> entries;
  bool has_refs = false;

  std::vector<std::string> low_paths() const;
  std::vector<std::string> ref_paths() const;
};

// Loads every readable image under low_dir (sorted by filename). When ref_dir
// is non-empty, files must pair one-to-one by filename; offenders are listed
// in the error.
Dataset ingest_dataset(const std::string& low_dir, const std::string& ref_dir = "");
Dataset ingest_single(const std::string& image_path);

struct Crop {
  int image = 0;
  int y = 0;
  int x = 0;
};

// One epoch of batches: a full shuffle of the image list with one uniform crop
// per image, grouped into batch_size groups (last partial batch kept).
// Single-image mode degenerates to one batch of batch_size crops.
std::vector<std::vector<Crop>> plan_epoch(const Dataset& data, const TrainConfig& cfg, Rng& rng);

// Materializes the aligned (S patch, equalization-target patch) pair.
void materialize_patch(const Dataset& data, const TrainConfig& cfg, const Crop& c, TensorF& S,
                       TensorF& target);

struct EpochRecord {
  int epoch = 0;
  LossBreakdownT<double> mean_loss;
  double wall_s = 0;
  std::optional<MetricsReport> eval;
};

struct TrainLog {
  std::vector<EpochRecord> records;
};

struct EvalSet {
  std::vector<std::string> low_paths;
  std::vector<std::string> ref_paths;  // may be empty
};

// Where training writes its artifacts. Logs and checkpoints carry no wall-clock
// data (timings go to a sidecar) so identical seeded runs are byte-identical.
struct TrainSinks {
  std::string out_dir;  // enables train_log.jsonl, timings.jsonl, metrics_curve.jsonl, checkpoints/
  std::ostream* progress = nullptr;
};

struct TrainResult {
  ModelState model;
  TrainLog log;
};

// Adam(beta1=0.9, beta2=0.999, eps=1e-8) over the self-supervised objective.
// Evaluates on `eval` every eval_every epochs, checkpoints at the same
// boundaries, aborts on non-finite loss. Pass `resume_from` to continue a
// checkpointed run on its original trajectory.
TrainResult train(const Dataset& data, const TrainConfig& cfg, const EvalSet* eval = nullptr,
                  const TrainSinks* sinks = nullptr, const ModelState* resume_from = nullptr);

// Reflectance head of the decomposition, clamped to [0,1].
TensorF enhance(const ModelState& m, const TensorF& S);

// Trains `runs` independent models on fresh seeds (seed, seed+1, ...) and
// evaluates each on the eval set.
std::vector<MetricsReport> repeated_stability_run(const Dataset& data, const TrainConfig& cfg,
                                                  int runs, const EvalSet& eval);

}  // namespace mer
