#pragma once

#include <numbers>

namespace qtrajgeom {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Wraps an angle into (-pi, pi].
double wrap_pi(double angle);

}  // namespace qtrajgeom
