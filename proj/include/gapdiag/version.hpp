#pragma once

namespace gapdiag {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace gapdiag
