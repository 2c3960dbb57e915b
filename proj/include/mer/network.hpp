#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mer/kernels.hpp"
#include "mer/tensor.hpp"

namespace mer {

enum class LayerKind { conv, concat, sigmoid };

struct LayerSpec {
  std::string name;                 // output tensor name
  LayerKind kind = LayerKind::conv;
  std::vector<std::string> inputs;  // "input" is the assembled 4-channel tensor
  int kernel = 0;
  int out_channels = 0;
  int stride = 1;        // 2 halves the resolution
  bool upsample = false; // nearest x2 resize before the convolution
  bool relu = false;
};

// The decomposition graph: 4-channel input (RGB plus max channel), a conv
// stack with one stride-2 down/up level and two concat skips, sigmoid head
// emitting reflectance (3ch) and illumination (1ch).
struct NetworkSpec {
  int input_channels = 4;
  std::vector<LayerSpec> layers;

  // The published twelve-row layout. `final_relu` inserts a ReLU between the
  // last conv and the sigmoid, as the layer table lists it. Off by default:
  // that ReLU floors every output at 0.5, the optimizer immediately clips all
  // head pre-activations against it, and training freezes with constant
  // outputs. The plain sigmoid head is the one that actually decomposes.
  static NetworkSpec standard(bool final_relu = false);

  // Throws naming the offending layer: unknown inputs, channel mismatches,
  // missing 4-channel head/tail contract.
  void validate() const;

  // Channel count each named tensor carries (after validate()).
  int channels_of(const std::string& name) const;
};

template <typename T>
struct ConvParams {
  std::string name;
  int k = 0, ic = 0, oc = 0;
  std::vector<T> w;  // HWIO
  std::vector<T> b;
};

template <typename T>
using ParamSet = std::vector<ConvParams<T>>;

struct AdamState {
  std::vector<float> mw, vw, mb, vb;  // one entry per conv layer, same layout as params
};

struct ModelState {
  NetworkSpec spec;
  ParamSet<float> params;          // conv layers in spec order
  std::vector<AdamState> moments;  // parallel to params
  int64_t step = 0;                // optimizer steps taken
  int64_t epoch = 0;               // completed epochs
  uint64_t seed = 0;
  std::string sampler_rng;         // serialized training RNG at checkpoint time
};

// Fan-in-scaled (He) random init, deterministic for a given seed.
ModelState build_network(const NetworkSpec& spec, uint64_t seed);

size_t parameter_count(const ModelState& m);

// Scratch tensors reused across forward/backward calls; one slot per layer.
template <typename T>
struct NetWorkspace {
  std::vector<Tensor<T>> pad;    // padded conv inputs
  std::vector<Tensor<T>> up;     // upsampled inputs
  std::vector<Tensor<T>> dpre;   // pre-activation gradients
  std::vector<Tensor<T>> dpad;   // padded input gradients
  Tensor<T> scratch;
};

// Graph execution over an assembled 4-channel input. Outputs are stored per
// layer (outs[i] belongs to spec.layers[i]); the final layer's tensor is the
// 4-channel sigmoid output.
template <typename T>
void run_forward(const NetworkSpec& spec, const ParamSet<T>& params, const Tensor<T>& input4,
                 std::vector<Tensor<T>>& outs, NetWorkspace<T>& ws);

// Backpropagates d(final output) into parameter gradients (accumulated into
// `grads`, caller zero-fills). Gradients w.r.t. the image input are not needed
// anywhere and are skipped.
template <typename T>
void run_backward(const NetworkSpec& spec, const ParamSet<T>& params, const Tensor<T>& input4,
                  const std::vector<Tensor<T>>& outs, const Tensor<T>& dfinal, ParamSet<T>& grads,
                  NetWorkspace<T>& ws);

// Assembles [S, max_channel(S)], runs the graph, splits the head into
// reflectance/illumination. Odd sizes are mirror-padded to even and cropped back.
DecompositionT<float> forward(const ModelState& m, const TensorF& S);

// [S, max_channel(S)] as one 4-channel tensor.
TensorF assemble_input(const TensorF& S);

ParamSet<double> cast_params(const ParamSet<float>& p);
ParamSet<float> zeros_like(const ParamSet<float>& p);
template <typename T>
ParamSet<T> zeros_like_t(const ParamSet<T>& p);

// Versioned self-describing checkpoint container (spec, parameters, optimizer
// moments, counters, RNG state). Round-trips bit-exactly.
void save_checkpoint(const ModelState& m, const std::string& path);
ModelState load_checkpoint(const std::string& path);

}  // namespace mer
