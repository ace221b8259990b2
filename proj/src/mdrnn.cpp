#include "impsy/mdrnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace impsy {

namespace {

using std::size_t;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

float sigmoidf(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

size_t sz(int n) { return static_cast<size_t>(n); }

// out[r] = bias[r] + sum_c w[r, c] * x[c]
template <typename T, typename X>
void affine(std::span<const T> w, std::span<const T> bias, std::span<const X> x, std::span<T> out) {
  const size_t cols = x.size();
  for (size_t r = 0; r < out.size(); ++r) {
    const T* row = w.data() + r * cols;
    T acc = bias[r];
    for (size_t c = 0; c < cols; ++c) acc += row[c] * static_cast<T>(x[c]);
    out[r] = acc;
  }
}

// out[r] += sum_c w[r, c] * x[c]
template <typename T>
void accumulate(std::span<const T> w, std::span<const T> x, std::span<T> out) {
  const size_t cols = x.size();
  for (size_t r = 0; r < out.size(); ++r) {
    const T* row = w.data() + r * cols;
    T acc = 0;
    for (size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    out[r] += acc;
  }
}

void glorot(std::vector<double>& w, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w) v = rng.uniform(-limit, limit);
}

MixtureParams mixture_from_head(const std::vector<double>& logits, std::vector<double> mu,
                                const std::vector<double>& pre_sigma, int k_count, int width) {
  MixtureParams mix;
  mix.components = k_count;
  mix.width = width;
  mix.pi.resize(sz(k_count));
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (size_t k = 0; k < logits.size(); ++k) {
    mix.pi[k] = std::exp(logits[k] - top);
    total += mix.pi[k];
  }
  for (double& p : mix.pi) p /= total;
  mix.mu = std::move(mu);
  mix.sigma.resize(pre_sigma.size());
  for (size_t i = 0; i < pre_sigma.size(); ++i) mix.sigma[i] = softplus(pre_sigma[i]) + kSigmaFloor;
  return mix;
}

}  // namespace

double softplus(double x) {
  // log(1 + e^x) without overflow for large x or cancellation for small x.
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

void check_shape(const MdrnnShape& shape) {
  if (shape.dim < 1) throw ShapeError("model dimension must be >= 1");
  if (shape.layers < 1) throw ShapeError("layer count must be >= 1");
  if (shape.units < 1) throw ShapeError("hidden units must be >= 1");
  if (shape.mixtures < 1 || shape.mixtures > 16) {
    throw ShapeError("mixture components must be in [1, 16]");
  }
}

// MdrnnParams ----------------------------------------------------------------

MdrnnParams MdrnnParams::zeros(const MdrnnShape& shape) {
  check_shape(shape);
  MdrnnParams p;
  p.shape = shape;
  const int h = shape.units;
  const int m = shape.width();
  const int k = shape.mixtures;
  for (int l = 0; l < shape.layers; ++l) {
    LstmLayer layer;
    layer.inputs = l == 0 ? m : h;
    layer.units = h;
    layer.w_in.assign(sz(4 * h * layer.inputs), 0.0);
    layer.w_rec.assign(sz(4 * h * h), 0.0);
    layer.bias.assign(sz(4 * h), 0.0);
    p.layers.push_back(std::move(layer));
  }
  p.head.w_pi.assign(sz(k * h), 0.0);
  p.head.b_pi.assign(sz(k), 0.0);
  p.head.w_mu.assign(sz(k * m * h), 0.0);
  p.head.b_mu.assign(sz(k * m), 0.0);
  p.head.w_sigma.assign(sz(k * m * h), 0.0);
  p.head.b_sigma.assign(sz(k * m), 0.0);
  return p;
}

MdrnnParams MdrnnParams::initialize(const MdrnnShape& shape, Rng& rng) {
  MdrnnParams p = zeros(shape);
  const int h = shape.units;
  const int m = shape.width();
  const int k = shape.mixtures;
  const double rec_limit = 1.0 / std::sqrt(static_cast<double>(h));
  for (auto& layer : p.layers) {
    glorot(layer.w_in, layer.inputs, 4 * h, rng);
    for (double& v : layer.w_rec) v = rng.uniform(-rec_limit, rec_limit);
    for (int u = 0; u < h; ++u) layer.bias[sz(h + u)] = 1.0;  // forget gate
  }
  glorot(p.head.w_pi, h, k, rng);
  glorot(p.head.w_mu, h, k * m, rng);
  glorot(p.head.w_sigma, h, k * m, rng);
  return p;
}

std::vector<NamedTensor> MdrnnParams::tensors() {
  std::vector<NamedTensor> out;
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "lstm" + std::to_string(l) + ".";
    out.push_back({prefix + "w_in", layers[l].w_in});
    out.push_back({prefix + "w_rec", layers[l].w_rec});
    out.push_back({prefix + "bias", layers[l].bias});
  }
  out.push_back({"head.w_pi", head.w_pi});
  out.push_back({"head.b_pi", head.b_pi});
  out.push_back({"head.w_mu", head.w_mu});
  out.push_back({"head.b_mu", head.b_mu});
  out.push_back({"head.w_sigma", head.w_sigma});
  out.push_back({"head.b_sigma", head.b_sigma});
  return out;
}

std::vector<ConstNamedTensor> MdrnnParams::tensors() const {
  std::vector<ConstNamedTensor> out;
  for (auto& t : const_cast<MdrnnParams*>(this)->tensors()) out.push_back({t.name, t.data});
  return out;
}

std::size_t MdrnnParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.data.size();
  return n;
}

bool MdrnnParams::all_finite() const {
  for (const auto& t : tensors()) {
    for (double v : t.data) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void MdrnnParams::check_consistent() const {
  check_shape(shape);
  const MdrnnParams expected = zeros(shape);
  if (layers.size() != expected.layers.size()) throw ShapeError("layer count does not match shape");
  for (size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].inputs != expected.layers[l].inputs || layers[l].units != shape.units) {
      throw ShapeError("layer " + std::to_string(l) + " dimensions do not match shape");
    }
  }
  const auto actual = tensors();
  const auto wanted = expected.tensors();
  for (size_t i = 0; i < actual.size(); ++i) {
    if (actual[i].data.size() != wanted[i].data.size()) {
      throw ShapeError("tensor " + actual[i].name + " has size " +
                       std::to_string(actual[i].data.size()) + ", expected " +
                       std::to_string(wanted[i].data.size()));
    }
  }
}

// MdrnnState -----------------------------------------------------------------

MdrnnState MdrnnState::initial(const MdrnnShape& shape) {
  MdrnnState s;
  s.h.assign(sz(shape.layers), std::vector<double>(sz(shape.units), 0.0));
  s.c.assign(sz(shape.layers), std::vector<double>(sz(shape.units), 0.0));
  s.last_frame.values.assign(sz(shape.dim), 0.5);
  s.last_frame.dt = 0.0;
  return s;
}

void MdrnnState::reset() {
  for (auto& v : h) std::fill(v.begin(), v.end(), 0.0);
  for (auto& v : c) std::fill(v.begin(), v.end(), 0.0);
  std::fill(last_frame.values.begin(), last_frame.values.end(), 0.5);
  last_frame.dt = 0.0;
}

// Inference ------------------------------------------------------------------

std::pair<MixtureParams, MdrnnState> forward_step(const MdrnnParams& params,
                                                  const MdrnnState& state,
                                                  std::span<const double> x) {
  const auto& shape = params.shape;
  const int h = shape.units;
  if (x.size() != sz(shape.width())) {
    throw ShapeError("input width " + std::to_string(x.size()) + " does not match model width " +
                     std::to_string(shape.width()));
  }
  if (state.h.size() != params.layers.size() || state.c.size() != params.layers.size()) {
    throw ShapeError("state layer count does not match model");
  }
  for (size_t l = 0; l < params.layers.size(); ++l) {
    if (state.h[l].size() != sz(h) || state.c[l].size() != sz(h)) {
      throw ShapeError("state width does not match model");
    }
  }

  MdrnnState next = state;
  std::vector<double> z(sz(4 * h));
  std::span<const double> input = x;
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    affine<double, double>(layer.w_in, layer.bias, input, z);
    accumulate<double>(layer.w_rec, state.h[l], z);
    auto& hn = next.h[l];
    auto& cn = next.c[l];
    for (int u = 0; u < h; ++u) {
      const double i = sigmoid(z[sz(u)]);
      const double f = sigmoid(z[sz(h + u)]);
      const double g = std::tanh(z[sz(2 * h + u)]);
      const double o = sigmoid(z[sz(3 * h + u)]);
      cn[sz(u)] = f * state.c[l][sz(u)] + i * g;
      hn[sz(u)] = o * std::tanh(cn[sz(u)]);
    }
    input = hn;
  }

  const int k = shape.mixtures;
  const int m = shape.width();
  std::vector<double> logits(sz(k)), mu(sz(k * m)), pre(sz(k * m));
  const auto& head = params.head;
  affine<double, double>(head.w_pi, head.b_pi, input, logits);
  affine<double, double>(head.w_mu, head.b_mu, input, mu);
  affine<double, double>(head.w_sigma, head.b_sigma, input, pre);
  return {mixture_from_head(logits, std::move(mu), pre, k, m), std::move(next)};
}

std::vector<double> sample(const MixtureParams& mix, double pi_temp, double sigma_temp, Rng& rng) {
  const int k_count = mix.components;
  // Tempered weights: exp(log pi / T), shifted by the max for stability.
  std::vector<double> logw(sz(k_count));
  for (int k = 0; k < k_count; ++k) {
    const double p = mix.pi[sz(k)];
    logw[sz(k)] = p > 0.0 ? std::log(p) / pi_temp : -std::numeric_limits<double>::infinity();
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  std::vector<double> w(sz(k_count));
  double total = 0.0;
  for (int k = 0; k < k_count; ++k) {
    w[sz(k)] = std::exp(logw[sz(k)] - top);
    total += w[sz(k)];
  }
  double u = rng.uniform() * total;
  int chosen = k_count - 1;
  for (int k = 0; k < k_count; ++k) {
    if (u < w[sz(k)]) {
      chosen = k;
      break;
    }
    u -= w[sz(k)];
  }
  // Guard against rounding landing on a zero-weight tail component.
  while (chosen > 0 && w[sz(chosen)] == 0.0) --chosen;

  std::vector<double> out(sz(mix.width));
  for (int j = 0; j < mix.width; ++j) {
    const double z = rng.normal();
    out[sz(j)] = mix.mean(chosen, j) + mix.scale(chosen, j) * sigma_temp * z;
  }
  return out;
}

double nll(const MixtureParams& mix, std::span<const double> target) {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  std::vector<double> terms(sz(mix.components));
  for (int k = 0; k < mix.components; ++k) {
    double lp = std::log(mix.pi[sz(k)]);
    for (int j = 0; j < mix.width; ++j) {
      const double s = mix.scale(k, j);
      const double d = (target[sz(j)] - mix.mean(k, j)) / s;
      lp -= half_log_2pi + std::log(s) + 0.5 * d * d;
    }
    terms[sz(k)] = lp;
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(top)) return -top;
  double total = 0.0;
  for (double t : terms) total += std::exp(t - top);
  return -(top + std::log(total));
}

std::vector<double> encode_frame(const ContinuousFrame& frame) {
  std::vector<double> x;
  x.reserve(frame.values.size() + 1);
  x.push_back(frame.dt);
  x.insert(x.end(), frame.values.begin(), frame.values.end());
  return x;
}

ContinuousFrame decode_frame(std::span<const double> x) {
  ContinuousFrame f;
  if (x.empty()) return f;
  f.dt = x[0];
  f.values.assign(x.begin() + 1, x.end());
  return f;
}

ContinuousFrame sample_frame(const MixtureParams& mix, const SamplingConfig& temps, double dt_max,
                             Rng& rng) {
  auto drawn = sample(mix, temps.pi_temp, temps.sigma_temp, rng);
  drawn[0] = std::max(drawn[0], 0.0);
  return clamp_frame(decode_frame(drawn), dt_max);
}

std::pair<ContinuousFrame, MdrnnState> predict_next(const MdrnnParams& params,
                                                    const MdrnnState& state,
                                                    const ContinuousFrame& prev,
                                                    const SamplingConfig& temps, double dt_max,
                                                    Rng& rng) {
  if (prev.dimension() != params.shape.dim) {
    throw ShapeError("frame dimension " + std::to_string(prev.dimension()) +
                     " does not match model dimension " + std::to_string(params.shape.dim));
  }
  auto [mix, next] = forward_step(params, state, encode_frame(prev));
  ContinuousFrame frame = sample_frame(mix, temps, dt_max, rng);
  next.last_frame = frame;
  return {std::move(frame), std::move(next)};
}

// Single precision -----------------------------------------------------------

namespace {

std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

}  // namespace

MdrnnF32::MdrnnF32(const MdrnnParams& params) : shape_(params.shape) {
  params.check_consistent();
  for (const auto& layer : params.layers) {
    layers_.push_back({layer.inputs, to_float(layer.w_in), to_float(layer.w_rec), to_float(layer.bias)});
  }
  w_pi_ = to_float(params.head.w_pi);
  b_pi_ = to_float(params.head.b_pi);
  w_mu_ = to_float(params.head.w_mu);
  b_mu_ = to_float(params.head.b_mu);
  w_sigma_ = to_float(params.head.w_sigma);
  b_sigma_ = to_float(params.head.b_sigma);
}

MdrnnF32::State MdrnnF32::initial_state() const {
  State s;
  s.h.assign(sz(shape_.layers), std::vector<float>(sz(shape_.units), 0.0f));
  s.c.assign(sz(shape_.layers), std::vector<float>(sz(shape_.units), 0.0f));
  return s;
}

MixtureParams MdrnnF32::forward_step(State& state, std::span<const double> x) const {
  const int h = shape_.units;
  if (x.size() != sz(shape_.width())) throw ShapeError("input width does not match model width");
  std::vector<float> input(x.begin(), x.end());
  std::vector<float> z(sz(4 * h));
  for (size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    affine<float, float>(layer.w_in, layer.bias, input, z);
    accumulate<float>(layer.w_rec, state.h[l], z);
    for (int u = 0; u < h; ++u) {
      const float i = sigmoidf(z[sz(u)]);
      const float f = sigmoidf(z[sz(h + u)]);
      const float g = std::tanh(z[sz(2 * h + u)]);
      const float o = sigmoidf(z[sz(3 * h + u)]);
      state.c[l][sz(u)] = f * state.c[l][sz(u)] + i * g;
      state.h[l][sz(u)] = o * std::tanh(state.c[l][sz(u)]);
    }
    input = state.h[l];
  }
  const int k = shape_.mixtures;
  const int m = shape_.width();
  std::vector<float> logits(sz(k)), mu(sz(k * m)), pre(sz(k * m));
  affine<float, float>(w_pi_, b_pi_, input, logits);
  affine<float, float>(w_mu_, b_mu_, input, mu);
  affine<float, float>(w_sigma_, b_sigma_, input, pre);
  return mixture_from_head({logits.begin(), logits.end()}, {mu.begin(), mu.end()},
                           {pre.begin(), pre.end()}, k, m);
}

}  // namespace impsy
