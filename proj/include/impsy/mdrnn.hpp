#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "impsy/config.hpp"
#include "impsy/frame.hpp"
#include "impsy/rng.hpp"

namespace impsy {

/// Network dimensions. The modelled vector has width dim + 1: dt first, then the values.
struct MdrnnShape {
  int dim = 1;
  int layers = 2;
  int units = 64;
  int mixtures = 5;

  int width() const { return dim + 1; }
  bool operator==(const MdrnnShape&) const = default;
};

/// Validates the shape ranges (dim >= 1, layers >= 1, units >= 1, mixtures 1..16).
void check_shape(const MdrnnShape& shape);

/// One LSTM layer. Gate rows are stacked in the order input, forget, candidate, output;
/// every matrix is row-major.
struct LstmLayer {
  int inputs = 0;
  int units = 0;
  std::vector<double> w_in;   // 4H x inputs
  std::vector<double> w_rec;  // 4H x H
  std::vector<double> bias;   // 4H

  bool operator==(const LstmLayer&) const = default;
};

/// Linear maps from the top hidden vector to the mixture parameters.
/// Means and scales are component-major (K x M rows).
struct MixtureHead {
  std::vector<double> w_pi;     // K x H
  std::vector<double> b_pi;     // K
  std::vector<double> w_mu;     // KM x H
  std::vector<double> b_mu;     // KM
  std::vector<double> w_sigma;  // KM x H
  std::vector<double> b_sigma;  // KM

  bool operator==(const MixtureHead&) const = default;
};

struct NamedTensor {
  std::string name;
  std::span<double> data;
};

struct ConstNamedTensor {
  std::string name;
  std::span<const double> data;
};

/// All network weights. Also used as the gradient accumulator during training.
class MdrnnParams {
 public:
  MdrnnShape shape;
  std::vector<LstmLayer> layers;
  MixtureHead head;

  /// All tensors zero, correctly sized.
  static MdrnnParams zeros(const MdrnnShape& shape);

  /// Glorot-uniform input and head weights, recurrent weights uniform in
  /// +-1/sqrt(H), zero biases except forget gate +1.
  static MdrnnParams initialize(const MdrnnShape& shape, Rng& rng);

  /// Tensors in serialization order: per layer (w_in, w_rec, bias), then
  /// w_pi, b_pi, w_mu, b_mu, w_sigma, b_sigma.
  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;

  std::size_t parameter_count() const;
  bool all_finite() const;
  /// Throws std::invalid_argument if any tensor has the wrong size for shape.
  void check_consistent() const;

  bool operator==(const MdrnnParams&) const = default;
};

/// Recurrent memory per layer plus the most recent frame.
struct MdrnnState {
  std::vector<std::vector<double>> h;
  std::vector<std::vector<double>> c;
  ContinuousFrame last_frame;

  static MdrnnState initial(const MdrnnShape& shape);
  /// Zeroes h and c; last_frame becomes values 0.5, dt 0.
  void reset();

  bool operator==(const MdrnnState&) const = default;
};

/// Gaussian mixture over the M-wide vector, diagonal covariance.
struct MixtureParams {
  int components = 0;
  int width = 0;
  std::vector<double> pi;     // K
  std::vector<double> mu;     // K x M
  std::vector<double> sigma;  // K x M

  double mean(int k, int m) const { return mu[static_cast<std::size_t>(k * width + m)]; }
  double scale(int k, int m) const { return sigma[static_cast<std::size_t>(k * width + m)]; }
};

constexpr double kSigmaFloor = 1e-3;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

double softplus(double x);

/// One recurrence step followed by the mixture head. The input state is not modified.
std::pair<MixtureParams, MdrnnState> forward_step(const MdrnnParams& params,
                                                  const MdrnnState& state,
                                                  std::span<const double> x);

/// Draws one M-vector. The component is drawn from pi tempered by pi_temp
/// (log-weights divided by the temperature) and the Gaussian scale is multiplied
/// by sigma_temp.
std::vector<double> sample(const MixtureParams& mix, double pi_temp, double sigma_temp, Rng& rng);

/// Negative log-likelihood of target under the mixture (log-sum-exp form).
double nll(const MixtureParams& mix, std::span<const double> target);

/// Frame <-> model vector: [dt, v0, ..., v(D-1)].
std::vector<double> encode_frame(const ContinuousFrame& frame);
ContinuousFrame decode_frame(std::span<const double> x);

/// Samples a vector and turns it into a frame inside the value and dt bounds.
ContinuousFrame sample_frame(const MixtureParams& mix, const SamplingConfig& temps, double dt_max,
                             Rng& rng);

/// Feeds prev through the network, samples the next frame and clamps it.
/// The returned state has consumed prev and holds the new frame as last_frame.
std::pair<ContinuousFrame, MdrnnState> predict_next(const MdrnnParams& params,
                                                    const MdrnnState& state,
                                                    const ContinuousFrame& prev,
                                                    const SamplingConfig& temps, double dt_max,
                                                    Rng& rng);

/// Single-precision copy of a network for callers that trade accuracy for speed.
/// Agrees with the double path to about 1e-5 on well-scaled inputs.
class MdrnnF32 {
 public:
  explicit MdrnnF32(const MdrnnParams& params);

  struct State {
    std::vector<std::vector<float>> h;
    std::vector<std::vector<float>> c;
  };

  State initial_state() const;
  /// Advances state in place and returns the mixture in double precision.
  MixtureParams forward_step(State& state, std::span<const double> x) const;

  const MdrnnShape& shape() const { return shape_; }

 private:
  struct Layer {
    int inputs;
    std::vector<float> w_in, w_rec, bias;
  };
  MdrnnShape shape_;
  std::vector<Layer> layers_;
  std::vector<float> w_pi_, b_pi_, w_mu_, b_mu_, w_sigma_, b_sigma_;
};

// Weight files ---------------------------------------------------------------

constexpr std::uint32_t kWeightFormatVersion = 1;

class WeightFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WeightHeader {
  std::uint32_t version = 0;
  MdrnnShape shape;
};

std::vector<std::uint8_t> serialize_weights(const MdrnnParams& params);
MdrnnParams parse_weights(std::span<const std::uint8_t> bytes);

void save_weights(const MdrnnParams& params, const std::filesystem::path& path);
MdrnnParams load_weights(const std::filesystem::path& path);

/// Reads only the fixed header; does not verify the checksum.
WeightHeader read_weight_header(const std::filesystem::path& path);

}  // namespace impsy
