#include "impsy/frame.hpp"

#include <algorithm>
#include <cmath>

namespace impsy {

namespace {

double clip(double v, double lo, double hi) {
  if (std::isnan(v)) return lo;
  return std::clamp(v, lo, hi);
}

}  // namespace

ContinuousFrame clamp_frame(ContinuousFrame frame, double dt_max) {
  for (double& v : frame.values) v = clip(v, 0.0, 1.0);
  frame.dt = clip(frame.dt, 0.0, dt_max);
  return frame;
}

bool frame_in_bounds(const ContinuousFrame& frame, double dt_max) {
  if (frame.values.empty()) return false;
  if (!(frame.dt >= 0.0 && frame.dt <= dt_max)) return false;
  return std::all_of(frame.values.begin(), frame.values.end(),
                     [](double v) { return v >= 0.0 && v <= 1.0; });
}

const char* to_string(Source source) { return source == Source::human ? "human" : "ai"; }

}  // namespace impsy
