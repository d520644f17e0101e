#pragma once

namespace twpa {

/// Magnetic flux quantum, Wb (CODATA; h/2e).
inline constexpr double kPhi0 = 2.067834e-15;

/// 2*pi/Phi0, converts flux (Wb) to Josephson phase (rad).
inline constexpr double kRadPerWb = 2.0 * 3.14159265358979323846 / kPhi0;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

}  // namespace twpa
