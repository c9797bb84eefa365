#pragma once

namespace flockline {
inline constexpr const char* kVersion = "0.1.0";
}
