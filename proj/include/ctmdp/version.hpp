#pragma once

namespace ctmdp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ctmdp
