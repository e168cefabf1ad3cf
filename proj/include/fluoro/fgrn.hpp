#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fluoro/curve.hpp"
#include "fluoro/rng.hpp"
#include "fluoro/skeleton.hpp"
#include "fluoro/synth.hpp"

namespace fluoro {

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyDataset : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class View { Top, Side };

// ----------------------------------------------------------------------------
// Architecture

struct ConvSpec {
  int out_channels = 0;
  int kernel = 3;   // odd, zero-padded to keep the spatial size ("same")
  int stride = 1;
};

// Convolutional feature extractor (each conv followed by ReLU then
// pool_window max-pooling) feeding a linear head (each hidden layer ReLU,
// dropout after the last hidden) that regresses 3*bodies outputs.
struct FgrnArch {
  int input_height = 80;
  int input_width = 80;
  int input_channels = 1;
  std::vector<ConvSpec> convs;
  int pool_window = 2;
  std::vector<int> hidden;
  double dropout = 0.5;
  int bodies = 20;

  int output_size() const { return 3 * bodies; }

  // Default stack: conv 8/16/32 3x3 + 2x2 pools, linear 256, dropout 0.5.
  static FgrnArch standard(int bodies);
};

// ----------------------------------------------------------------------------
// Model

struct ConvLayer {
  ConvSpec spec;
  int in_channels = 0;
  std::vector<double> weights;  // [out][in][k][k]
  std::vector<double> bias;     // [out]
};

struct LinearLayer {
  int in_size = 0;
  int out_size = 0;
  std::vector<double> weights;  // [out][in]
  std::vector<double> bias;     // [out]
};

struct FgrnModel {
  FgrnArch arch;
  View view = View::Top;
  std::vector<ConvLayer> convs;
  std::vector<LinearLayer> linears;  // hidden layers then the output layer

  std::size_t parameter_count() const;
  // Parameter blocks in declaration order (conv weights, conv bias, ... then
  // linear weights, linear bias, ...). The serialized layout matches.
  std::vector<std::span<double>> parameter_blocks();
  std::vector<std::span<const double>> parameter_blocks() const;
};

// Fan-in-scaled uniform weights (+/- 1/sqrt(fan_in)), zero biases.
FgrnModel init_model(const FgrnArch& arch, std::uint64_t seed, View view = View::Top);

// Gradients with the same block layout as the model parameters.
struct Gradients {
  std::vector<std::vector<double>> blocks;

  static Gradients zeros_like(const FgrnModel& model);
  void accumulate(const Gradients& other, double scale);
  void scale(double factor);
};

// ----------------------------------------------------------------------------
// Forward / loss / backward

// image: input_height x input_width values in [0, 1], row-major. In train
// mode dropout masks are drawn from `rng` (required); eval mode is
// deterministic and uses the dropout expectation (inverted dropout).
std::vector<double> forward(const FgrnModel& model, std::span<const double> image,
                            bool train_mode = false, Rng* rng = nullptr);

// Huber loss, mean over components; quadratic inside |y - yhat| < 1, linear
// outside. Positions are expressed in millimeters throughout training so both
// branches are active.
double huber_loss(std::span<const double> y, std::span<const double> yhat);

// (1/(n-1)) sum_i | ||yhat_{i+1} - yhat_i|| - spacing |, positions flattened
// [x0,y0,z0, x1,y1,z1, ...] in the same unit as `spacing`.
double spacing_regularizer(std::span<const double> yhat, double spacing);

struct LossConfig {
  double alpha = 1.0;
  double beta = 0.1;
  double spacing = 2.0;  // same unit as the positions (mm during training)
};

double total_loss(std::span<const double> y, std::span<const double> yhat,
                  const LossConfig& config);

struct BackwardResult {
  double loss = 0.0;
  std::vector<double> prediction;
  Gradients gradients;
};

// Exact gradients of total_loss w.r.t. every parameter. The dropout mask (if
// training) is drawn once from `rng` and held fixed through the backward
// pass; ReLU takes subgradient 0 at 0.
BackwardResult backward(const FgrnModel& model, std::span<const double> image,
                        std::span<const double> y, const LossConfig& config,
                        bool train_mode = false, Rng* rng = nullptr);

// ----------------------------------------------------------------------------
// Optimizer

struct NadamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step = 0;

  static OptimizerState zeros(std::size_t parameter_count);
};

// One Nesterov-accelerated adaptive-moment update over a flat parameter
// span; `state.step` is incremented first and used for bias correction.
void nadam_step(std::span<double> params, std::span<const double> grads, OptimizerState& state,
                const NadamConfig& config);

// Model-level wrapper: applies nadam_step across all parameter blocks with a
// shared step counter.
void nadam_step(FgrnModel& model, const Gradients& grads, OptimizerState& state,
                const NadamConfig& config);

// ----------------------------------------------------------------------------
// Training

struct TrainConfig {
  double alpha = 1.0;
  double beta = 0.1;
  double spacing_m = 0.002;
  NadamConfig nadam;
  int epochs = 50;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double dropout = 0.5;
  double val_fraction = 0.1;
  View view = View::Top;
  // Default trains against the triangulated reconstruction of each sample;
  // switch on to train against ground truth instead (ablation).
  bool targets_from_ground_truth = false;
  int bodies = 20;
  double smoothing = 0.0;  // spline smoothing for the reconstruction targets
};

struct EpochLoss {
  int epoch = 0;       // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  FgrnModel model;
  std::vector<EpochLoss> history;
  std::vector<int> val_indices;  // samples held out of training
};

// Deterministic per config.seed: initialization, the train/validation split,
// batch order and dropout all derive from it. Throws EmptyDataset, and
// NonFiniteLoss (with epoch/batch index) if the loss diverges.
TrainResult train(const std::vector<GuidewireSample>& dataset, const TrainConfig& config);

void write_loss_history_csv(std::span<const EpochLoss> history,
                            const std::filesystem::path& path);

// Mask to network input: foreground 1.0, background 0.0, row-major.
std::vector<double> mask_to_image(const BinaryMask& mask);

// Forward pass on a mask, reshaped to bodies x 3 (millimeters to meters),
// then spline-fitted and resampled at equal arc length.
Curve3D predict_curve(const FgrnModel& model, const BinaryMask& mask);

// Portable little-endian binary: magic "FGRN", format version, architecture
// descriptor, then raw float64 parameter blocks in declaration order. A JSON
// sidecar (<path>.json) duplicates the descriptor for inspection.
void save_model(const FgrnModel& model, const std::filesystem::path& path);
FgrnModel load_model(const std::filesystem::path& path);

}  // namespace fluoro
