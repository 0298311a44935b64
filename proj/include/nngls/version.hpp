#pragma once

namespace nngls {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace nngls
