#include "impsy/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace impsy {

namespace {

using std::size_t;
using Vec = std::vector<double>;

size_t sz(int n) { return static_cast<size_t>(n); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Activations of one layer at one step, kept for the backward pass.
struct LayerCache {
  Vec input, h_prev, c_prev;
  Vec i, f, g, o, c, tanh_c, h;
};

struct StepCache {
  std::vector<LayerCache> layers;
  Vec pi, mu, pre_sigma, sigma;
};

void matvec_add(const Vec& w, const Vec& x, Vec& out) {
  const size_t cols = x.size();
  for (size_t r = 0; r < out.size(); ++r) {
    const double* row = w.data() + r * cols;
    double acc = 0.0;
    for (size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    out[r] += acc;
  }
}

// out += W^T d
void matvec_t_add(const Vec& w, const Vec& d, Vec& out) {
  const size_t cols = out.size();
  for (size_t r = 0; r < d.size(); ++r) {
    const double dr = d[r];
    if (dr == 0.0) continue;
    const double* row = w.data() + r * cols;
    for (size_t c = 0; c < cols; ++c) out[c] += row[c] * dr;
  }
}

// grad += d x^T
void outer_add(const Vec& d, const Vec& x, Vec& grad) {
  const size_t cols = x.size();
  for (size_t r = 0; r < d.size(); ++r) {
    const double dr = d[r];
    if (dr == 0.0) continue;
    double* row = grad.data() + r * cols;
    for (size_t c = 0; c < cols; ++c) row[c] += dr * x[c];
  }
}

void add_into(const Vec& src, Vec& dst) {
  for (size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

// Forward through one step, filling the cache. Returns the step NLL against target.
double forward_cached(const MdrnnParams& p, const Vec& x, const Vec& target,
                      std::vector<Vec>& h, std::vector<Vec>& c, StepCache& cache) {
  const int hu = p.shape.units;
  const int k_count = p.shape.mixtures;
  const int m = p.shape.width();
  cache.layers.resize(p.layers.size());
  const Vec* input = &x;
  for (size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    auto& lc = cache.layers[l];
    lc.input = *input;
    lc.h_prev = h[l];
    lc.c_prev = c[l];
    Vec z = layer.bias;
    matvec_add(layer.w_in, lc.input, z);
    matvec_add(layer.w_rec, lc.h_prev, z);
    lc.i.resize(sz(hu));
    lc.f.resize(sz(hu));
    lc.g.resize(sz(hu));
    lc.o.resize(sz(hu));
    lc.c.resize(sz(hu));
    lc.tanh_c.resize(sz(hu));
    lc.h.resize(sz(hu));
    for (int u = 0; u < hu; ++u) {
      lc.i[sz(u)] = sigmoid(z[sz(u)]);
      lc.f[sz(u)] = sigmoid(z[sz(hu + u)]);
      lc.g[sz(u)] = std::tanh(z[sz(2 * hu + u)]);
      lc.o[sz(u)] = sigmoid(z[sz(3 * hu + u)]);
      lc.c[sz(u)] = lc.f[sz(u)] * lc.c_prev[sz(u)] + lc.i[sz(u)] * lc.g[sz(u)];
      lc.tanh_c[sz(u)] = std::tanh(lc.c[sz(u)]);
      lc.h[sz(u)] = lc.o[sz(u)] * lc.tanh_c[sz(u)];
    }
    h[l] = lc.h;
    c[l] = lc.c;
    input = &lc.h;
  }

  const Vec& top = *input;
  Vec logits = p.head.b_pi;
  matvec_add(p.head.w_pi, top, logits);
  cache.mu = p.head.b_mu;
  matvec_add(p.head.w_mu, top, cache.mu);
  cache.pre_sigma = p.head.b_sigma;
  matvec_add(p.head.w_sigma, top, cache.pre_sigma);

  const double lmax = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  cache.pi.resize(sz(k_count));
  for (int k = 0; k < k_count; ++k) {
    cache.pi[sz(k)] = std::exp(logits[sz(k)] - lmax);
    total += cache.pi[sz(k)];
  }
  for (double& v : cache.pi) v /= total;
  cache.sigma.resize(cache.pre_sigma.size());
  for (size_t i = 0; i < cache.sigma.size(); ++i) {
    cache.sigma[i] = softplus(cache.pre_sigma[i]) + kSigmaFloor;
  }

  MixtureParams mix{k_count, m, cache.pi, cache.mu, cache.sigma};
  return nll(mix, target);
}

// Gradient of the step NLL with respect to the head pre-activations.
void head_gradient(const StepCache& cache, const Vec& target, int k_count, int m, Vec& d_logits,
                   Vec& d_mu, Vec& d_pre) {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  Vec log_comp(sz(k_count));
  for (int k = 0; k < k_count; ++k) {
    double lp = std::log(cache.pi[sz(k)]);
    for (int j = 0; j < m; ++j) {
      const size_t idx = sz(k * m + j);
      const double d = (target[sz(j)] - cache.mu[idx]) / cache.sigma[idx];
      lp -= half_log_2pi + std::log(cache.sigma[idx]) + 0.5 * d * d;
    }
    log_comp[sz(k)] = lp;
  }
  const double top = *std::max_element(log_comp.begin(), log_comp.end());
  double total = 0.0;
  Vec resp(sz(k_count));
  for (int k = 0; k < k_count; ++k) {
    resp[sz(k)] = std::exp(log_comp[sz(k)] - top);
    total += resp[sz(k)];
  }
  for (double& r : resp) r /= total;

  d_logits.assign(sz(k_count), 0.0);
  d_mu.assign(sz(k_count * m), 0.0);
  d_pre.assign(sz(k_count * m), 0.0);
  for (int k = 0; k < k_count; ++k) {
    const double r = resp[sz(k)];
    d_logits[sz(k)] = cache.pi[sz(k)] - r;
    for (int j = 0; j < m; ++j) {
      const size_t idx = sz(k * m + j);
      const double s = cache.sigma[idx];
      const double diff = target[sz(j)] - cache.mu[idx];
      d_mu[idx] = -r * diff / (s * s);
      const double d_sigma = r * (1.0 / s - diff * diff / (s * s * s));
      d_pre[idx] = d_sigma * sigmoid(cache.pre_sigma[idx]);
    }
  }
}

double grad_norm(MdrnnParams& grad) {
  double sum = 0.0;
  for (const auto& t : grad.tensors()) {
    for (double v : t.data) sum += v * v;
  }
  return std::sqrt(sum);
}

void scale_grad(MdrnnParams& grad, double factor) {
  for (auto& t : grad.tensors()) {
    for (double& v : t.data) v *= factor;
  }
}

void zero_grad(MdrnnParams& grad) {
  for (auto& t : grad.tensors()) std::fill(t.data.begin(), t.data.end(), 0.0);
}

class Adam {
 public:
  Adam(const MdrnnParams& like, double lr)
      : m_(MdrnnParams::zeros(like.shape)), v_(MdrnnParams::zeros(like.shape)), lr_(lr) {}

  void step(MdrnnParams& params, MdrnnParams& grad) {
    ++t_;
    const double b1t = 1.0 - std::pow(kBeta1, t_);
    const double b2t = 1.0 - std::pow(kBeta2, t_);
    auto pt = params.tensors();
    auto gt = grad.tensors();
    auto mt = m_.tensors();
    auto vt = v_.tensors();
    for (size_t i = 0; i < pt.size(); ++i) {
      for (size_t j = 0; j < pt[i].data.size(); ++j) {
        const double g = gt[i].data[j];
        double& m = mt[i].data[j];
        double& v = vt[i].data[j];
        m = kBeta1 * m + (1.0 - kBeta1) * g;
        v = kBeta2 * v + (1.0 - kBeta2) * g * g;
        pt[i].data[j] -= lr_ * (m / b1t) / (std::sqrt(v / b2t) + kEps);
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  MdrnnParams m_, v_;
  double lr_;
  int t_ = 0;
};

using Window = std::vector<Vec>;

double mean_loss(const MdrnnParams& params, const std::vector<const Window*>& windows) {
  double total = 0.0;
  size_t steps = 0;
  for (const Window* w : windows) {
    total += window_loss(params, *w, nullptr);
    steps += w->size() - 1;
  }
  return steps == 0 ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(steps);
}

}  // namespace

void TrainHyper::check() const {
  if (seq_len < 1) throw std::invalid_argument("seq_len must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be positive");
  if (!(validation_split >= 0.0 && validation_split < 1.0)) {
    throw std::invalid_argument("validation_split must be in [0, 1)");
  }
}

double window_loss(const MdrnnParams& params, std::span<const Vec> window, MdrnnParams* grad) {
  const auto& shape = params.shape;
  const size_t n_layers = params.layers.size();
  const int hu = shape.units;
  const int k_count = shape.mixtures;
  const int m = shape.width();
  if (window.size() < 2) return 0.0;
  for (const auto& x : window) {
    if (x.size() != sz(m)) throw ShapeError("window vector width does not match model width");
  }

  const size_t steps = window.size() - 1;
  std::vector<Vec> h(n_layers, Vec(sz(hu), 0.0));
  std::vector<Vec> c(n_layers, Vec(sz(hu), 0.0));
  std::vector<StepCache> caches(grad ? steps : 1);
  double loss = 0.0;
  for (size_t t = 0; t < steps; ++t) {
    StepCache& cache = caches[grad ? t : 0];
    loss += forward_cached(params, window[t], window[t + 1], h, c, cache);
  }
  if (!grad) return loss;

  std::vector<Vec> dh_next(n_layers, Vec(sz(hu), 0.0));
  std::vector<Vec> dc_next(n_layers, Vec(sz(hu), 0.0));
  Vec d_logits, d_mu, d_pre;
  for (size_t t = steps; t-- > 0;) {
    const StepCache& cache = caches[t];
    const Vec& top = cache.layers.back().h;
    head_gradient(cache, window[t + 1], k_count, m, d_logits, d_mu, d_pre);
    outer_add(d_logits, top, grad->head.w_pi);
    add_into(d_logits, grad->head.b_pi);
    outer_add(d_mu, top, grad->head.w_mu);
    add_into(d_mu, grad->head.b_mu);
    outer_add(d_pre, top, grad->head.w_sigma);
    add_into(d_pre, grad->head.b_sigma);

    Vec dh(sz(hu), 0.0);
    matvec_t_add(params.head.w_pi, d_logits, dh);
    matvec_t_add(params.head.w_mu, d_mu, dh);
    matvec_t_add(params.head.w_sigma, d_pre, dh);

    for (size_t l = n_layers; l-- > 0;) {
      const auto& layer = params.layers[l];
      const LayerCache& lc = cache.layers[l];
      auto& lg = grad->layers[l];
      add_into(dh_next[l], dh);
      Vec dz(sz(4 * hu));
      Vec dc_prev(sz(hu));
      for (int u = 0; u < hu; ++u) {
        const size_t s = sz(u);
        const double d_o = dh[s] * lc.tanh_c[s];
        const double dc = dh[s] * lc.o[s] * (1.0 - lc.tanh_c[s] * lc.tanh_c[s]) + dc_next[l][s];
        const double d_i = dc * lc.g[s];
        const double d_g = dc * lc.i[s];
        const double d_f = dc * lc.c_prev[s];
        dc_prev[s] = dc * lc.f[s];
        dz[s] = d_i * lc.i[s] * (1.0 - lc.i[s]);
        dz[sz(hu + u)] = d_f * lc.f[s] * (1.0 - lc.f[s]);
        dz[sz(2 * hu + u)] = d_g * (1.0 - lc.g[s] * lc.g[s]);
        dz[sz(3 * hu + u)] = d_o * lc.o[s] * (1.0 - lc.o[s]);
      }
      outer_add(dz, lc.input, lg.w_in);
      outer_add(dz, lc.h_prev, lg.w_rec);
      add_into(dz, lg.bias);

      Vec dh_prev(sz(hu), 0.0);
      matvec_t_add(layer.w_rec, dz, dh_prev);
      dh_next[l] = std::move(dh_prev);
      dc_next[l] = std::move(dc_prev);
      if (l > 0) {
        Vec dx(sz(layer.inputs), 0.0);
        matvec_t_add(layer.w_in, dz, dx);
        dh = std::move(dx);
      }
    }
  }
  return loss;
}

std::vector<std::vector<Vec>> make_windows(const Dataset& dataset, int seq_len) {
  std::vector<std::vector<Vec>> windows;
  const size_t stride = sz(seq_len);
  for (const auto& seq : dataset.sequences) {
    const size_t n = seq.frames.size();
    if (n < 2) continue;
    for (size_t start = 0; start + 1 < n; start += stride) {
      const size_t end = std::min(n, start + stride + 1);
      std::vector<Vec> w;
      w.reserve(end - start);
      for (size_t i = start; i < end; ++i) w.push_back(encode_frame(seq.frames[i]));
      windows.push_back(std::move(w));
    }
  }
  return windows;
}

double dataset_loss(const MdrnnParams& params, const Dataset& dataset, int seq_len) {
  const auto windows = make_windows(dataset, seq_len);
  std::vector<const Window*> all;
  for (const auto& w : windows) all.push_back(&w);
  return mean_loss(params, all);
}

TrainResult train(const Dataset& dataset, const MdrnnShape& shape, const TrainHyper& hyper,
                  const std::optional<MdrnnParams>& init, Rng& rng, const EpochCallback& on_epoch) {
  hyper.check();
  check_shape(shape);
  if (dataset.dimension != shape.dim) {
    throw TrainingError("dataset dimension " + std::to_string(dataset.dimension) +
                        " does not match model dimension " + std::to_string(shape.dim));
  }
  auto windows = make_windows(dataset, hyper.seq_len);
  if (windows.empty()) throw TrainingError("empty dataset: need a sequence of at least 2 frames");

  MdrnnParams params = init ? *init : MdrnnParams::initialize(shape, rng);
  params.check_consistent();
  if (params.shape != shape) throw TrainingError("initial parameters do not match requested shape");

  // Fisher-Yates with our own generator keeps splits identical across platforms.
  auto shuffle = [&rng](auto& items) {
    for (size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);
  };
  std::vector<const Window*> order;
  for (const auto& w : windows) order.push_back(&w);
  shuffle(order);
  size_t n_val = static_cast<size_t>(std::floor(static_cast<double>(order.size()) * hyper.validation_split));
  if (n_val >= order.size()) n_val = order.size() - 1;
  std::vector<const Window*> val(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  std::vector<const Window*> trn(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));

  TrainResult result;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto record = [&](int epoch, double train_loss) {
    const double val_loss = val.empty() ? nan : mean_loss(params, val);
    EpochLoss entry{epoch, train_loss, val_loss};
    result.history.push_back(entry);
    if (on_epoch) on_epoch(entry);
    return val.empty() ? train_loss : val_loss;
  };

  double best = record(0, mean_loss(params, trn));
  if (!std::isfinite(best)) throw TrainingError("non-finite loss at initialization");
  result.params = params;
  result.best_epoch = 0;

  MdrnnParams grad = MdrnnParams::zeros(shape);
  Adam adam(params, hyper.learning_rate);
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    shuffle(trn);
    double epoch_total = 0.0;
    size_t epoch_steps = 0;
    for (size_t start = 0; start < trn.size(); start += sz(hyper.batch_size)) {
      const size_t end = std::min(trn.size(), start + sz(hyper.batch_size));
      zero_grad(grad);
      double batch_loss = 0.0;
      size_t batch_steps = 0;
      for (size_t i = start; i < end; ++i) {
        batch_loss += window_loss(params, *trn[i], &grad);
        batch_steps += trn[i]->size() - 1;
      }
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "non-finite loss in epoch " << epoch << " (batch starting at window " << start
            << "); try a lower learning rate";
        throw TrainingError(msg.str());
      }
      scale_grad(grad, 1.0 / static_cast<double>(batch_steps));
      const double norm = grad_norm(grad);
      if (norm > hyper.clip_norm) scale_grad(grad, hyper.clip_norm / norm);
      adam.step(params, grad);
      epoch_total += batch_loss;
      epoch_steps += batch_steps;
    }
    if (!params.all_finite()) {
      throw TrainingError("parameters became non-finite in epoch " + std::to_string(epoch));
    }
    const double score = record(epoch, epoch_total / static_cast<double>(epoch_steps));
    if (!std::isfinite(score)) {
      throw TrainingError("non-finite validation loss in epoch " + std::to_string(epoch));
    }
    if (score < best) {
      best = score;
      result.params = params;
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace impsy
