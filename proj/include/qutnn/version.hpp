#pragma once

namespace qutnn {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qutnn
