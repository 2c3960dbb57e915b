#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mer/tensor.hpp"

namespace mer {

// One evaluation record. Entropies are bits; GMI/GMG live on the 0-255 scale;
// LOE follows the grid-sampled pair-disagreement convention scaled by 1000.
// Reference-dependent fields stay empty when no reference is supplied.
struct MetricsReport {
  double ge = 0;
  double ce = 0;
  double gmi = 0;
  double gmg = 0;
  double loe_low = 0;
  std::optional<double> loe_high;
  std::optional<double> psnr;
  std::optional<double> ssim;
  double wall_time_s = 0;
};

// Shannon entropy (base 2) of the 256-bin histogram of the quantized gray image.
double gray_entropy(const TensorF& img);

// Sum of per-channel entropies over R, G, B.
double color_entropy(const TensorF& img);

double gray_mean_illumination(const TensorF& img);
double gray_mean_gradient(const TensorF& img);

// Lightness-order error between original and enhanced, on a uniform grid of at
// most 50x50 samples; 1000 * mean pairwise order disagreement.
double loe(const TensorF& original, const TensorF& enhanced);

// Gray-scale PSNR against the 255 peak, capped at 99 dB for identical inputs.
double psnr(const TensorF& a, const TensorF& b);

// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), K1=0.01 K2=0.03, L=255,
// on the gray images, windows fully inside the frame.
double ssim(const TensorF& a, const TensorF& b);

// Plain histogram equalization applied independently per RGB channel.
TensorF he_baseline(const TensorF& img);

MetricsReport measure_one(const TensorF& enhanced, const TensorF& low, const TensorF* ref);

struct SetEvaluation {
  std::vector<std::string> names;
  std::vector<MetricsReport> per_image;
  MetricsReport mean;
};

using Enhancer = std::function<TensorF(const TensorF&)>;

// Runs the enhancer over every low image and aggregates the battery. Wall time
// covers the enhancer call only.
SetEvaluation evaluate_set(const Enhancer& enhance, const std::vector<std::string>& low_paths,
                           const std::vector<std::string>& ref_paths);

// Same aggregation over already-enhanced files.
SetEvaluation evaluate_files(const std::vector<std::string>& enhanced_paths,
                             const std::vector<std::string>& low_paths,
                             const std::vector<std::string>& ref_paths);

// Aligned plain-text table (per-image rows plus the mean row).
std::string format_report_table(const SetEvaluation& ev);

// Machine-readable report. Timing goes to its own file so the main report is
// byte-stable across reruns.
void write_report_json(const SetEvaluation& ev, const std::string& path);
void write_report_timing_json(const SetEvaluation& ev, const std::string& path);

}  // namespace mer
