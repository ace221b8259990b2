#pragma once

#include <vector>

namespace impsy {

/// One step of the performance state: D values in [0, 1] plus the time
/// (seconds) until the step takes effect.
struct ContinuousFrame {
  std::vector<double> values;
  double dt = 0.0;

  int dimension() const { return static_cast<int>(values.size()); }
  bool operator==(const ContinuousFrame&) const = default;
};

constexpr double kDefaultDtMax = 5.0;

/// Clips every value to [0, 1] and dt to [0, dt_max]. NaN maps to the lower bound.
ContinuousFrame clamp_frame(ContinuousFrame frame, double dt_max = kDefaultDtMax);

/// True when the frame satisfies the value and dt bounds.
bool frame_in_bounds(const ContinuousFrame& frame, double dt_max = kDefaultDtMax);

/// Which party produced an event.
enum class Source { human, ai };

const char* to_string(Source source);

}  // namespace impsy
