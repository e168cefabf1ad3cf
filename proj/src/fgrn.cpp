#include "fluoro/fgrn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "fluoro/pipeline.hpp"
#include "fluoro/spline.hpp"

namespace fluoro {

FgrnArch FgrnArch::standard(int bodies) {
  FgrnArch arch;
  arch.convs = {{8, 3, 1}, {16, 3, 1}, {32, 3, 1}};
  arch.pool_window = 2;
  arch.hidden = {256};
  arch.dropout = 0.5;
  arch.bodies = bodies;
  return arch;
}

namespace {

struct StageDims {
  int c = 0, h = 0, w = 0;
  int size() const { return c * h * w; }
};

// Dims entering each conv block, then the dims entering the linear head.
std::vector<StageDims> block_dims(const FgrnArch& arch) {
  std::vector<StageDims> dims;
  StageDims d{arch.input_channels, arch.input_height, arch.input_width};
  dims.push_back(d);
  for (const ConvSpec& spec : arch.convs) {
    const int pad = spec.kernel / 2;
    d.c = spec.out_channels;
    d.h = (d.h + 2 * pad - spec.kernel) / spec.stride + 1;
    d.w = (d.w + 2 * pad - spec.kernel) / spec.stride + 1;
    d.h /= arch.pool_window;
    d.w /= arch.pool_window;
    dims.push_back(d);
  }
  return dims;
}

void conv_forward(const ConvLayer& layer, const double* in, const StageDims& din, double* out,
                  int out_h, int out_w, std::vector<double>& padded) {
  const int k = layer.spec.kernel;
  const int pad = k / 2;
  const int stride = layer.spec.stride;
  const int ph = din.h + 2 * pad;
  const int pw = din.w + 2 * pad;
  padded.assign(static_cast<std::size_t>(din.c) * ph * pw, 0.0);
  for (int ic = 0; ic < din.c; ++ic) {
    for (int y = 0; y < din.h; ++y) {
      std::memcpy(padded.data() + (static_cast<std::size_t>(ic) * ph + y + pad) * pw + pad,
                  in + (static_cast<std::size_t>(ic) * din.h + y) * din.w,
                  sizeof(double) * din.w);
    }
  }
  const int out_c = layer.spec.out_channels;
  for (int oc = 0; oc < out_c; ++oc) {
    double* outp = out + static_cast<std::size_t>(oc) * out_h * out_w;
    std::fill(outp, outp + static_cast<std::size_t>(out_h) * out_w, layer.bias[oc]);
    for (int ic = 0; ic < din.c; ++ic) {
      const double* inp = padded.data() + static_cast<std::size_t>(ic) * ph * pw;
      const double* wbase =
          layer.weights.data() + (static_cast<std::size_t>(oc) * din.c + ic) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double w = wbase[ky * k + kx];
          for (int oy = 0; oy < out_h; ++oy) {
            const double* irow = inp + (static_cast<std::size_t>(oy) * stride + ky) * pw + kx;
            double* orow = outp + static_cast<std::size_t>(oy) * out_w;
            if (stride == 1) {
              for (int ox = 0; ox < out_w; ++ox) orow[ox] += w * irow[ox];
            } else {
              for (int ox = 0; ox < out_w; ++ox) orow[ox] += w * irow[ox * stride];
            }
          }
        }
      }
    }
  }
}

// dOut -> dIn, dW, dB. `padded` must still hold the forward padding of this
// layer's input; dIn may be null for the first layer.
void conv_backward(const ConvLayer& layer, const std::vector<double>& padded,
                   const StageDims& din, const double* dout, int out_h, int out_w, double* din_grad,
                   double* dw, double* db, std::vector<double>& dpadded) {
  const int k = layer.spec.kernel;
  const int pad = k / 2;
  const int stride = layer.spec.stride;
  const int ph = din.h + 2 * pad;
  const int pw = din.w + 2 * pad;
  const int out_c = layer.spec.out_channels;

  if (din_grad) dpadded.assign(static_cast<std::size_t>(din.c) * ph * pw, 0.0);

  for (int oc = 0; oc < out_c; ++oc) {
    const double* doutp = dout + static_cast<std::size_t>(oc) * out_h * out_w;
    double acc_b = 0.0;
    for (int i = 0; i < out_h * out_w; ++i) acc_b += doutp[i];
    db[oc] += acc_b;
    for (int ic = 0; ic < din.c; ++ic) {
      const double* inp = padded.data() + static_cast<std::size_t>(ic) * ph * pw;
      double* dinp =
          din_grad ? dpadded.data() + static_cast<std::size_t>(ic) * ph * pw : nullptr;
      double* dwbase = dw + (static_cast<std::size_t>(oc) * din.c + ic) * k * k;
      const double* wbase =
          layer.weights.data() + (static_cast<std::size_t>(oc) * din.c + ic) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double w = wbase[ky * k + kx];
          double acc_w = 0.0;
          for (int oy = 0; oy < out_h; ++oy) {
            const double* irow = inp + (static_cast<std::size_t>(oy) * stride + ky) * pw + kx;
            double* dirow =
                dinp ? dpadded.data() + static_cast<std::size_t>(ic) * ph * pw +
                           (static_cast<std::size_t>(oy) * stride + ky) * pw + kx
                     : nullptr;
            const double* drow = doutp + static_cast<std::size_t>(oy) * out_w;
            if (stride == 1) {
              for (int ox = 0; ox < out_w; ++ox) acc_w += drow[ox] * irow[ox];
              if (dirow)
                for (int ox = 0; ox < out_w; ++ox) dirow[ox] += w * drow[ox];
            } else {
              for (int ox = 0; ox < out_w; ++ox) acc_w += drow[ox] * irow[ox * stride];
              if (dirow)
                for (int ox = 0; ox < out_w; ++ox) dirow[ox * stride] += w * drow[ox];
            }
          }
          dwbase[ky * k + kx] += acc_w;
        }
      }
    }
  }

  if (din_grad) {
    for (int ic = 0; ic < din.c; ++ic) {
      for (int y = 0; y < din.h; ++y) {
        std::memcpy(din_grad + (static_cast<std::size_t>(ic) * din.h + y) * din.w,
                    dpadded.data() + (static_cast<std::size_t>(ic) * ph + y + pad) * pw + pad,
                    sizeof(double) * din.w);
      }
    }
  }
}

void maxpool_forward(const double* in, int c, int in_h, int in_w, int window, double* out,
                     int out_h, int out_w, int* argmax) {
  for (int ch = 0; ch < c; ++ch) {
    const double* inp = in + static_cast<std::size_t>(ch) * in_h * in_w;
    double* outp = out + static_cast<std::size_t>(ch) * out_h * out_w;
    int* argp = argmax + static_cast<std::size_t>(ch) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        int best_idx = (oy * window) * in_w + ox * window;
        double best = inp[best_idx];
        for (int dy = 0; dy < window; ++dy) {
          for (int dx = 0; dx < window; ++dx) {
            const int idx = (oy * window + dy) * in_w + ox * window + dx;
            if (inp[idx] > best) {
              best = inp[idx];
              best_idx = idx;
            }
          }
        }
        outp[oy * out_w + ox] = best;
        argp[oy * out_w + ox] = static_cast<int>(ch) * in_h * in_w + best_idx;
      }
    }
  }
}

void linear_forward(const LinearLayer& layer, const double* in, double* out) {
  for (int o = 0; o < layer.out_size; ++o) {
    const double* wrow = layer.weights.data() + static_cast<std::size_t>(o) * layer.in_size;
    double acc = layer.bias[o];
    for (int i = 0; i < layer.in_size; ++i) acc += wrow[i] * in[i];
    out[o] = acc;
  }
}

void linear_backward(const LinearLayer& layer, const double* in, const double* dout,
                     double* din, double* dw, double* db) {
  if (din) std::fill(din, din + layer.in_size, 0.0);
  for (int o = 0; o < layer.out_size; ++o) {
    const double g = dout[o];
    db[o] += g;
    const double* wrow = layer.weights.data() + static_cast<std::size_t>(o) * layer.in_size;
    double* dwrow = dw + static_cast<std::size_t>(o) * layer.in_size;
    for (int i = 0; i < layer.in_size; ++i) {
      dwrow[i] += g * in[i];
      if (din) din[i] += wrow[i] * g;
    }
  }
}

struct ForwardCache {
  std::vector<std::vector<double>> conv_in;      // input to conv block b
  std::vector<std::vector<double>> conv_padded;  // padded copy (kept for backward)
  std::vector<std::vector<double>> conv_act;     // post-ReLU conv output
  std::vector<std::vector<int>> pool_argmax;
  std::vector<std::vector<double>> pool_out;
  std::vector<std::vector<double>> lin_in;       // input to linear layer l
  std::vector<double> dropout_mask;              // empty when inactive
  std::vector<double> output;
};

void check_image_shape(const FgrnModel& model, std::span<const double> image) {
  const std::size_t expected = static_cast<std::size_t>(model.arch.input_channels) *
                               model.arch.input_height * model.arch.input_width;
  if (image.size() != expected)
    throw ShapeMismatch("image has " + std::to_string(image.size()) + " values, expected " +
                        std::to_string(expected));
}

void run_forward(const FgrnModel& model, std::span<const double> image, bool train_mode,
                 Rng* rng, ForwardCache& cache) {
  check_image_shape(model, image);
  const FgrnArch& arch = model.arch;
  const std::vector<StageDims> dims = block_dims(arch);
  const std::size_t n_convs = model.convs.size();

  cache.conv_in.resize(n_convs);
  cache.conv_padded.resize(n_convs);
  cache.conv_act.resize(n_convs);
  cache.pool_argmax.resize(n_convs);
  cache.pool_out.resize(n_convs);

  std::vector<double> current(image.begin(), image.end());
  for (std::size_t b = 0; b < n_convs; ++b) {
    const StageDims& din = dims[b];
    const ConvSpec& spec = arch.convs[b];
    const int pad = spec.kernel / 2;
    const int conv_h = (din.h + 2 * pad - spec.kernel) / spec.stride + 1;
    const int conv_w = (din.w + 2 * pad - spec.kernel) / spec.stride + 1;
    cache.conv_in[b] = std::move(current);
    cache.conv_act[b].resize(static_cast<std::size_t>(spec.out_channels) * conv_h * conv_w);
    conv_forward(model.convs[b], cache.conv_in[b].data(), din, cache.conv_act[b].data(), conv_h,
                 conv_w, cache.conv_padded[b]);
    for (double& v : cache.conv_act[b]) v = v > 0.0 ? v : 0.0;

    const int out_h = conv_h / arch.pool_window;
    const int out_w = conv_w / arch.pool_window;
    cache.pool_out[b].resize(static_cast<std::size_t>(spec.out_channels) * out_h * out_w);
    cache.pool_argmax[b].resize(cache.pool_out[b].size());
    maxpool_forward(cache.conv_act[b].data(), spec.out_channels, conv_h, conv_w,
                    arch.pool_window, cache.pool_out[b].data(), out_h, out_w,
                    cache.pool_argmax[b].data());
    current = cache.pool_out[b];
  }

  // Linear head; ReLU after each hidden layer, dropout after the last hidden.
  cache.lin_in.resize(model.linears.size());
  cache.dropout_mask.clear();
  for (std::size_t l = 0; l < model.linears.size(); ++l) {
    const LinearLayer& layer = model.linears[l];
    if (static_cast<int>(current.size()) != layer.in_size)
      throw ShapeMismatch("linear layer " + std::to_string(l) + " expects " +
                          std::to_string(layer.in_size) + " inputs, got " +
                          std::to_string(current.size()));
    cache.lin_in[l] = std::move(current);
    current.assign(layer.out_size, 0.0);
    linear_forward(layer, cache.lin_in[l].data(), current.data());
    const bool is_hidden = l + 1 < model.linears.size();
    if (is_hidden) {
      for (double& v : current) v = v > 0.0 ? v : 0.0;
      const bool is_last_hidden = l + 2 == model.linears.size();
      if (is_last_hidden && train_mode && arch.dropout > 0.0) {
        if (!rng) throw std::invalid_argument("train-mode forward needs an RNG for dropout");
        cache.dropout_mask.resize(current.size());
        const double keep = 1.0 - arch.dropout;
        for (std::size_t i = 0; i < current.size(); ++i) {
          cache.dropout_mask[i] = rng->uniform01() < arch.dropout ? 0.0 : 1.0 / keep;
          current[i] *= cache.dropout_mask[i];
        }
      }
    }
  }
  cache.output = std::move(current);
}

}  // namespace

std::size_t FgrnModel::parameter_count() const {
  std::size_t n = 0;
  for (const ConvLayer& c : convs) n += c.weights.size() + c.bias.size();
  for (const LinearLayer& l : linears) n += l.weights.size() + l.bias.size();
  return n;
}

std::vector<std::span<double>> FgrnModel::parameter_blocks() {
  std::vector<std::span<double>> blocks;
  for (ConvLayer& c : convs) {
    blocks.emplace_back(c.weights);
    blocks.emplace_back(c.bias);
  }
  for (LinearLayer& l : linears) {
    blocks.emplace_back(l.weights);
    blocks.emplace_back(l.bias);
  }
  return blocks;
}

std::vector<std::span<const double>> FgrnModel::parameter_blocks() const {
  std::vector<std::span<const double>> blocks;
  for (const ConvLayer& c : convs) {
    blocks.emplace_back(c.weights);
    blocks.emplace_back(c.bias);
  }
  for (const LinearLayer& l : linears) {
    blocks.emplace_back(l.weights);
    blocks.emplace_back(l.bias);
  }
  return blocks;
}

FgrnModel init_model(const FgrnArch& arch, std::uint64_t seed, View view) {
  FgrnModel model;
  model.arch = arch;
  model.view = view;
  Rng rng(seed);

  int in_c = arch.input_channels;
  for (const ConvSpec& spec : arch.convs) {
    ConvLayer layer;
    layer.spec = spec;
    layer.in_channels = in_c;
    layer.weights.resize(static_cast<std::size_t>(spec.out_channels) * in_c * spec.kernel *
                         spec.kernel);
    layer.bias.assign(spec.out_channels, 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_c) * spec.kernel * spec.kernel);
    for (double& w : layer.weights) w = rng.uniform(-bound, bound);
    model.convs.push_back(std::move(layer));
    in_c = spec.out_channels;
  }

  const std::vector<StageDims> dims = block_dims(arch);
  int in_size = dims.back().size();
  std::vector<int> widths = arch.hidden;
  widths.push_back(arch.output_size());
  for (int width : widths) {
    LinearLayer layer;
    layer.in_size = in_size;
    layer.out_size = width;
    layer.weights.resize(static_cast<std::size_t>(width) * in_size);
    layer.bias.assign(width, 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_size));
    for (double& w : layer.weights) w = rng.uniform(-bound, bound);
    model.linears.push_back(std::move(layer));
    in_size = width;
  }
  return model;
}

Gradients Gradients::zeros_like(const FgrnModel& model) {
  Gradients g;
  for (const auto block : model.parameter_blocks()) g.blocks.emplace_back(block.size(), 0.0);
  return g;
}

void Gradients::accumulate(const Gradients& other, double scale) {
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (std::size_t i = 0; i < blocks[b].size(); ++i) blocks[b][i] += scale * other.blocks[b][i];
}

void Gradients::scale(double factor) {
  for (auto& block : blocks)
    for (double& v : block) v *= factor;
}

std::vector<double> forward(const FgrnModel& model, std::span<const double> image,
                            bool train_mode, Rng* rng) {
  ForwardCache cache;
  run_forward(model, image, train_mode, rng, cache);
  return cache.output;
}

double huber_loss(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw ShapeMismatch("huber_loss on different lengths");
  KahanSum sum;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - yhat[i];
    const double a = std::abs(d);
    sum.add(a < 1.0 ? 0.5 * d * d : a - 0.5);
  }
  return sum.value() / static_cast<double>(y.size());
}

double spacing_regularizer(std::span<const double> yhat, double spacing) {
  if (yhat.size() % 3 != 0 || yhat.size() < 6)
    throw ShapeMismatch("spacing_regularizer needs at least two 3D positions");
  const std::size_t n = yhat.size() / 3;
  KahanSum sum;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double dx = yhat[3 * (i + 1)] - yhat[3 * i];
    const double dy = yhat[3 * (i + 1) + 1] - yhat[3 * i + 1];
    const double dz = yhat[3 * (i + 1) + 2] - yhat[3 * i + 2];
    sum.add(std::abs(std::sqrt(dx * dx + dy * dy + dz * dz) - spacing));
  }
  return sum.value() / static_cast<double>(n - 1);
}

double total_loss(std::span<const double> y, std::span<const double> yhat,
                  const LossConfig& config) {
  double loss = 0.0;
  if (config.alpha != 0.0) loss += config.alpha * huber_loss(y, yhat);
  if (config.beta != 0.0) loss += config.beta * spacing_regularizer(yhat, config.spacing);
  return loss;
}

namespace {

// dL/dyhat for the weighted Huber + spacing objective.
std::vector<double> total_loss_gradient(std::span<const double> y, std::span<const double> yhat,
                                        const LossConfig& config) {
  std::vector<double> grad(yhat.size(), 0.0);
  const double m = static_cast<double>(y.size());
  if (config.alpha != 0.0) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double d = yhat[i] - y[i];
      grad[i] += config.alpha * (std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0)) / m;
    }
  }
  if (config.beta != 0.0) {
    const std::size_t n = yhat.size() / 3;
    const double coef = config.beta / static_cast<double>(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double dx = yhat[3 * (i + 1)] - yhat[3 * i];
      const double dy = yhat[3 * (i + 1) + 1] - yhat[3 * i + 1];
      const double dz = yhat[3 * (i + 1) + 2] - yhat[3 * i + 2];
      const double rho = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (rho < 1e-12) continue;  // kink of | |gap| - s | at a zero-length gap
      const double sgn = rho >= config.spacing ? 1.0 : -1.0;
      const double scale = coef * sgn / rho;
      grad[3 * (i + 1)] += scale * dx;
      grad[3 * (i + 1) + 1] += scale * dy;
      grad[3 * (i + 1) + 2] += scale * dz;
      grad[3 * i] -= scale * dx;
      grad[3 * i + 1] -= scale * dy;
      grad[3 * i + 2] -= scale * dz;
    }
  }
  return grad;
}

void backward_into(const FgrnModel& model, std::span<const double> image,
                   std::span<const double> y, const LossConfig& config, bool train_mode,
                   Rng* rng, Gradients& accum, double grad_scale, double* loss_out,
                   std::vector<double>* prediction_out) {
  if (y.size() != static_cast<std::size_t>(model.arch.output_size()))
    throw ShapeMismatch("target has " + std::to_string(y.size()) + " values, expected " +
                        std::to_string(model.arch.output_size()));
  ForwardCache cache;
  run_forward(model, image, train_mode, rng, cache);
  if (loss_out) *loss_out = total_loss(y, cache.output, config);
  if (prediction_out) *prediction_out = cache.output;

  std::vector<double> delta = total_loss_gradient(y, cache.output, config);
  if (grad_scale != 1.0)
    for (double& v : delta) v *= grad_scale;

  const FgrnArch& arch = model.arch;
  const std::vector<StageDims> dims = block_dims(arch);
  const std::size_t n_convs = model.convs.size();
  const std::size_t grad_base_linear = 2 * n_convs;

  // Linear head, last to first.
  for (std::size_t l = model.linears.size(); l-- > 0;) {
    const LinearLayer& layer = model.linears[l];
    const bool is_hidden = l + 1 < model.linears.size();
    if (is_hidden) {
      // Undo dropout then ReLU on this layer's *output*, which the next
      // layer's lin_in stores (possibly dropout-scaled).
      const std::vector<double>& activated = cache.lin_in[l + 1];
      const bool dropped = (l + 2 == model.linears.size()) && !cache.dropout_mask.empty();
      for (std::size_t i = 0; i < delta.size(); ++i) {
        if (dropped) delta[i] *= cache.dropout_mask[i];
        if (activated[i] <= 0.0) delta[i] = 0.0;
      }
      // A unit that dropout zeroed has activated == 0 even when its ReLU was
      // live; the stored mask already zeroes those deltas, so the ReLU gate
      // above only ever kills genuinely inactive units when the mask is 0 too.
    }
    std::vector<double> din(layer.in_size, 0.0);
    linear_backward(layer, cache.lin_in[l].data(), delta.data(),
                    l == 0 && n_convs == 0 ? nullptr : din.data(),
                    accum.blocks[grad_base_linear + 2 * l].data(),
                    accum.blocks[grad_base_linear + 2 * l + 1].data());
    delta = std::move(din);
  }

  // Conv blocks, last to first: un-pool, ReLU gate, then conv backward.
  std::vector<double> dpadded;
  for (std::size_t b = n_convs; b-- > 0;) {
    const ConvSpec& spec = arch.convs[b];
    const StageDims& din = dims[b];
    const int pad = spec.kernel / 2;
    const int conv_h = (din.h + 2 * pad - spec.kernel) / spec.stride + 1;
    const int conv_w = (din.w + 2 * pad - spec.kernel) / spec.stride + 1;

    std::vector<double> dact(cache.conv_act[b].size(), 0.0);
    for (std::size_t i = 0; i < cache.pool_argmax[b].size(); ++i)
      dact[cache.pool_argmax[b][i]] += delta[i];
    for (std::size_t i = 0; i < dact.size(); ++i)
      if (cache.conv_act[b][i] <= 0.0) dact[i] = 0.0;

    std::vector<double> din_grad;
    if (b > 0) din_grad.assign(cache.conv_in[b].size(), 0.0);
    conv_backward(model.convs[b], cache.conv_padded[b], din, dact.data(), conv_h, conv_w,
                  b > 0 ? din_grad.data() : nullptr, accum.blocks[2 * b].data(),
                  accum.blocks[2 * b + 1].data(), dpadded);
    delta = std::move(din_grad);
  }
}

}  // namespace

BackwardResult backward(const FgrnModel& model, std::span<const double> image,
                        std::span<const double> y, const LossConfig& config, bool train_mode,
                        Rng* rng) {
  BackwardResult result;
  result.gradients = Gradients::zeros_like(model);
  backward_into(model, image, y, config, train_mode, rng, result.gradients, 1.0, &result.loss,
                &result.prediction);
  return result;
}

OptimizerState OptimizerState::zeros(std::size_t parameter_count) {
  OptimizerState s;
  s.first_moment.assign(parameter_count, 0.0);
  s.second_moment.assign(parameter_count, 0.0);
  return s;
}

namespace {

void nadam_apply(std::span<double> params, std::span<const double> grads, double* m, double* v,
                 std::int64_t t, const NadamConfig& cfg) {
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  const double b1_t = std::pow(b1, static_cast<double>(t));
  const double b1_t1 = b1_t * b1;
  const double b2_t = std::pow(b2, static_cast<double>(t));
  const double m_corr_next = 1.0 / (1.0 - b1_t1);  // look-ahead correction
  const double g_corr = 1.0 / (1.0 - b1_t);
  const double v_corr = 1.0 / (1.0 - b2_t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = b1 * m[i] + (1.0 - b1) * g;
    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
    const double update = (b1 * m[i] * m_corr_next + (1.0 - b1) * g * g_corr) /
                          (std::sqrt(v[i] * v_corr) + cfg.epsilon);
    params[i] -= cfg.learning_rate * update;
  }
}

}  // namespace

void nadam_step(std::span<double> params, std::span<const double> grads, OptimizerState& state,
                const NadamConfig& config) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw ShapeMismatch("nadam_step shape mismatch");
  state.step += 1;
  nadam_apply(params, grads, state.first_moment.data(), state.second_moment.data(), state.step,
              config);
}

void nadam_step(FgrnModel& model, const Gradients& grads, OptimizerState& state,
                const NadamConfig& config) {
  if (state.first_moment.size() != model.parameter_count())
    throw ShapeMismatch("optimizer state does not match the model");
  state.step += 1;
  std::size_t offset = 0;
  auto blocks = model.parameter_blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    nadam_apply(blocks[b], grads.blocks[b], state.first_moment.data() + offset,
                state.second_moment.data() + offset, state.step, config);
    offset += blocks[b].size();
  }
}

std::vector<double> mask_to_image(const BinaryMask& mask) {
  std::vector<double> image(mask.data.size());
  for (std::size_t i = 0; i < mask.data.size(); ++i) image[i] = mask.data[i] ? 1.0 : 0.0;
  return image;
}

namespace {

std::vector<double> curve_to_target_mm(const Curve3D& curve) {
  std::vector<double> y;
  y.reserve(curve.points.size() * 3);
  for (const Vec3& p : curve.points) {
    y.push_back(p.x() * 1000.0);
    y.push_back(p.y() * 1000.0);
    y.push_back(p.z() * 1000.0);
  }
  return y;
}

}  // namespace

TrainResult train(const std::vector<GuidewireSample>& dataset, const TrainConfig& config) {
  if (dataset.empty()) throw EmptyDataset("cannot train on an empty dataset");

  const BinaryMask& first =
      config.view == View::Top ? dataset.front().top_mask : dataset.front().side_mask;
  FgrnArch arch = FgrnArch::standard(config.bodies);
  arch.input_height = first.height;
  arch.input_width = first.width;
  arch.dropout = config.dropout;

  Rng rng(config.seed);
  FgrnModel model = init_model(arch, rng.next_u64(), config.view);

  const LossConfig loss_config{config.alpha, config.beta, config.spacing_m * 1000.0};

  // Targets: triangulated reconstructions (or ground truth), in millimeters.
  std::vector<std::vector<double>> images(dataset.size());
  std::vector<std::vector<double>> targets(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const GuidewireSample& s = dataset[i];
    images[i] = mask_to_image(config.view == View::Top ? s.top_mask : s.side_mask);
    const Curve3D target_curve = config.targets_from_ground_truth
                                     ? s.ground_truth
                                     : reconstruct_sample(s, config.bodies, config.smoothing);
    targets[i] = curve_to_target_mm(target_curve);
  }

  std::vector<int> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  int val_count = static_cast<int>(std::lround(config.val_fraction * dataset.size()));
  val_count = std::clamp(val_count, 0, static_cast<int>(dataset.size()) - 1);
  TrainResult result;
  result.val_indices.assign(order.begin(), order.begin() + val_count);
  std::vector<int> train_indices(order.begin() + val_count, order.end());
  if (train_indices.empty()) throw EmptyDataset("validation split leaves no training samples");

  OptimizerState state = OptimizerState::zeros(model.parameter_count());
  Gradients batch_grads = Gradients::zeros_like(model);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(train_indices);
    KahanSum epoch_loss;
    int seen = 0;
    const int batches =
        (static_cast<int>(train_indices.size()) + config.batch_size - 1) / config.batch_size;
    for (int batch = 0; batch < batches; ++batch) {
      const int begin = batch * config.batch_size;
      const int end =
          std::min<int>(begin + config.batch_size, static_cast<int>(train_indices.size()));
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (auto& block : batch_grads.blocks) std::fill(block.begin(), block.end(), 0.0);
      for (int s = begin; s < end; ++s) {
        const int idx = train_indices[s];
        double sample_loss = 0.0;
        backward_into(model, images[idx], targets[idx], loss_config, true, &rng, batch_grads,
                      inv, &sample_loss, nullptr);
        if (!std::isfinite(sample_loss))
          throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch));
        epoch_loss.add(sample_loss);
        ++seen;
      }
      nadam_step(model, batch_grads, state, config.nadam);
    }

    EpochLoss entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss.value() / static_cast<double>(seen);

    if (val_count > 0) {
      KahanSum val_loss;
      for (int idx : result.val_indices) {
        const std::vector<double> pred = forward(model, images[idx], false, nullptr);
        val_loss.add(total_loss(targets[idx], pred, loss_config));
      }
      entry.val_loss = val_loss.value() / static_cast<double>(val_count);
    } else {
      entry.val_loss = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(entry.train_loss))
      throw NonFiniteLoss("non-finite epoch loss at epoch " + std::to_string(epoch));
    result.history.push_back(entry);
  }

  result.model = std::move(model);
  return result;
}

void write_loss_history_csv(std::span<const EpochLoss> history,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "epoch,train_loss,val_loss\n";
  for (const EpochLoss& e : history)
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss)
        << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

Curve3D predict_curve(const FgrnModel& model, const BinaryMask& mask) {
  const std::vector<double> output = forward(model, mask_to_image(mask), false, nullptr);
  Curve3D raw;
  raw.points.reserve(model.arch.bodies);
  for (int i = 0; i < model.arch.bodies; ++i) {
    raw.points.emplace_back(output[3 * i] / 1000.0, output[3 * i + 1] / 1000.0,
                            output[3 * i + 2] / 1000.0);
  }
  const SplineModel spline = fit_spline(raw, 0.0);
  return resample_equal_arclength(spline, model.arch.bodies);
}

// ----------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[4] = {'F', 'G', 'R', 'N'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

nlohmann::ordered_json arch_to_json(const FgrnModel& model) {
  nlohmann::ordered_json j;
  j["format_version"] = kFormatVersion;
  j["view"] = model.view == View::Top ? "top" : "side";
  j["input"] = {model.arch.input_channels, model.arch.input_height, model.arch.input_width};
  for (const ConvSpec& c : model.arch.convs)
    j["convs"].push_back({{"out_channels", c.out_channels}, {"kernel", c.kernel},
                          {"stride", c.stride}});
  j["pool_window"] = model.arch.pool_window;
  j["hidden"] = model.arch.hidden;
  j["dropout"] = model.arch.dropout;
  j["bodies"] = model.arch.bodies;
  j["parameter_count"] = model.parameter_count();
  return j;
}

}  // namespace

void save_model(const FgrnModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(kMagic, 4);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(model.arch.input_height));
  put_u32(out, static_cast<std::uint32_t>(model.arch.input_width));
  put_u32(out, static_cast<std::uint32_t>(model.arch.input_channels));
  put_u32(out, static_cast<std::uint32_t>(model.arch.convs.size()));
  for (const ConvSpec& c : model.arch.convs) {
    put_u32(out, static_cast<std::uint32_t>(c.out_channels));
    put_u32(out, static_cast<std::uint32_t>(c.kernel));
    put_u32(out, static_cast<std::uint32_t>(c.stride));
  }
  put_u32(out, static_cast<std::uint32_t>(model.arch.pool_window));
  put_u32(out, static_cast<std::uint32_t>(model.arch.hidden.size()));
  for (int h : model.arch.hidden) put_u32(out, static_cast<std::uint32_t>(h));
  put_f64(out, model.arch.dropout);
  put_u32(out, static_cast<std::uint32_t>(model.arch.bodies));
  put_u32(out, model.view == View::Top ? 0u : 1u);
  put_u64(out, model.parameter_count());
  for (const auto block : model.parameter_blocks())
    for (double v : block) put_f64(out, v);
  if (!out) throw IoError("write failed: " + path.string());

  std::ofstream sidecar(path.string() + ".json", std::ios::binary);
  if (!sidecar) throw IoError("cannot write sidecar for " + path.string());
  sidecar << arch_to_json(model).dump(2) << '\n';
}

FgrnModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("not a model file: " + path.string());
  const std::uint32_t version = get_u32(in);
  if (version != kFormatVersion)
    throw ParseError("unsupported model format version " + std::to_string(version));

  FgrnArch arch;
  arch.input_height = static_cast<int>(get_u32(in));
  arch.input_width = static_cast<int>(get_u32(in));
  arch.input_channels = static_cast<int>(get_u32(in));
  const std::uint32_t n_convs = get_u32(in);
  for (std::uint32_t i = 0; i < n_convs; ++i) {
    ConvSpec spec;
    spec.out_channels = static_cast<int>(get_u32(in));
    spec.kernel = static_cast<int>(get_u32(in));
    spec.stride = static_cast<int>(get_u32(in));
    arch.convs.push_back(spec);
  }
  arch.pool_window = static_cast<int>(get_u32(in));
  const std::uint32_t n_hidden = get_u32(in);
  for (std::uint32_t i = 0; i < n_hidden; ++i) arch.hidden.push_back(static_cast<int>(get_u32(in)));
  arch.dropout = get_f64(in);
  arch.bodies = static_cast<int>(get_u32(in));
  const std::uint32_t view_tag = get_u32(in);

  FgrnModel model = init_model(arch, 0, view_tag == 0 ? View::Top : View::Side);
  const std::uint64_t expected = get_u64(in);
  if (expected != model.parameter_count())
    throw ParseError("parameter count mismatch in " + path.string());
  for (auto block : model.parameter_blocks())
    for (double& v : block) v = get_f64(in);
  if (!in) throw ParseError("truncated model file: " + path.string());
  return model;
}

}  // namespace fluoro
