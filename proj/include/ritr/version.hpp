#pragma once

namespace ritr {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ritr
