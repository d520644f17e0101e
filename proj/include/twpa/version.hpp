#pragma once

namespace twpa {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace twpa
