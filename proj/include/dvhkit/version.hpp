#pragma once

namespace dvhkit {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dvhkit
