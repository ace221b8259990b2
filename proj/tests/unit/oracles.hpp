// Independent reference implementations used as test oracles. None of these
// call into the library's numeric code; they only read parameter layouts.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "impsy/mdrnn.hpp"

namespace oracle {

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ScalarState {
  std::vector<std::vector<double>> h, c;
};

struct ScalarMixture {
  std::vector<double> pi, mu, sigma;  // K, K*M, K*M
};

// One step of a stacked LSTM plus mixture head, written element by element.
inline ScalarMixture scalar_step(const impsy::MdrnnParams& p, ScalarState& s, const std::vector<double>& x) {
  const int H = p.shape.units;
  std::vector<double> in = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    const int n_in = L.inputs;
    std::vector<double> h_new(H), c_new(H);
    for (int u = 0; u < H; ++u) {
      double gate[4];
      for (int g = 0; g < 4; ++g) {
        const int row = g * H + u;
        double acc = L.bias[row];
        for (int j = 0; j < n_in; ++j) acc += L.w_in[row * n_in + j] * in[j];
        for (int j = 0; j < H; ++j) acc += L.w_rec[row * H + j] * s.h[l][j];
        gate[g] = acc;
      }
      const double i = sig(gate[0]);
      const double f = sig(gate[1]);
      const double gg = std::tanh(gate[2]);
      const double o = sig(gate[3]);
      c_new[u] = f * s.c[l][u] + i * gg;
      h_new[u] = o * std::tanh(c_new[u]);
    }
    s.h[l] = h_new;
    s.c[l] = c_new;
    in = h_new;
  }
  const int K = p.shape.mixtures;
  const int M = p.shape.width();
  ScalarMixture mix;
  std::vector<double> logits(K);
  for (int k = 0; k < K; ++k) {
    double acc = p.head.b_pi[k];
    for (int j = 0; j < H; ++j) acc += p.head.w_pi[k * H + j] * in[j];
    logits[k] = acc;
  }
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  for (double v : logits) mix.pi.push_back(std::exp(v - mx) / z);
  for (int r = 0; r < K * M; ++r) {
    double a = p.head.b_mu[r], b = p.head.b_sigma[r];
    for (int j = 0; j < H; ++j) {
      a += p.head.w_mu[r * H + j] * in[j];
      b += p.head.w_sigma[r * H + j] * in[j];
    }
    mix.mu.push_back(a);
    // softplus written the long way, plus the 1e-3 floor
    const double sp = b > 30 ? b : std::log(1.0 + std::exp(b));
    mix.sigma.push_back(sp + 1e-3);
  }
  return mix;
}

inline ScalarState scalar_zero_state(const impsy::MdrnnShape& shape) {
  ScalarState s;
  s.h.assign(shape.layers, std::vector<double>(shape.units, 0.0));
  s.c = s.h;
  return s;
}

// Mixture NLL computed directly as -log(sum_k pi_k prod_m N(x_m; mu, sigma)).
// Only valid where the density does not underflow.
inline double naive_nll(const std::vector<double>& pi, const std::vector<double>& mu,
                        const std::vector<double>& sigma, const std::vector<double>& x) {
  const double kPi = 3.14159265358979323846;
  const std::size_t K = pi.size();
  const std::size_t M = x.size();
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    double density = pi[k];
    for (std::size_t m = 0; m < M; ++m) {
      const double s = sigma[k * M + m];
      const double d = (x[m] - mu[k * M + m]) / s;
      density *= std::exp(-0.5 * d * d) / (s * std::sqrt(2.0 * kPi));
    }
    total += density;
  }
  return -std::log(total);
}

// OSC 1.0 decoder for float-only messages, written against the wire format.
struct OscMessage {
  std::string address;
  std::string tags;
  std::vector<float> floats;
};

inline std::optional<OscMessage> osc_decode(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto read_string = [&](std::string& out) -> bool {
    const std::size_t start = pos;
    while (pos < bytes.size() && bytes[pos] != 0) ++pos;
    if (pos >= bytes.size()) return false;
    out.assign(bytes.begin() + static_cast<long>(start), bytes.begin() + static_cast<long>(pos));
    // step past the terminator and the padding up to the next multiple of four
    pos = (pos / 4 + 1) * 4;
    if (pos > bytes.size()) return false;
    for (std::size_t i = start + out.size(); i < pos; ++i) {
      if (bytes[i] != 0) return false;
    }
    return true;
  };
  OscMessage msg;
  if (!read_string(msg.address) || msg.address.empty() || msg.address[0] != '/') return std::nullopt;
  if (!read_string(msg.tags) || msg.tags.empty() || msg.tags[0] != ',') return std::nullopt;
  for (std::size_t i = 1; i < msg.tags.size(); ++i) {
    if (msg.tags[i] != 'f' || pos + 4 > bytes.size()) return std::nullopt;
    const std::uint32_t bits = (std::uint32_t(bytes[pos]) << 24) | (std::uint32_t(bytes[pos + 1]) << 16) |
                               (std::uint32_t(bytes[pos + 2]) << 8) | std::uint32_t(bytes[pos + 3]);
    float f;
    std::memcpy(&f, &bits, 4);
    msg.floats.push_back(f);
    pos += 4;
  }
  if (pos != bytes.size()) return std::nullopt;
  return msg;
}

// Data-byte count of a channel voice status (0x80-0xEF).
inline int voice_data_bytes(std::uint8_t status) {
  const int hi = status & 0xF0;
  return (hi == 0xC0 || hi == 0xD0) ? 1 : 2;
}

}  // namespace oracle
