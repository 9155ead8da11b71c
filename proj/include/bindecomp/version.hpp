#pragma once

namespace bindecomp {

inline constexpr const char* kToolkitName = "bindecomp";
inline constexpr const char* kToolkitVersion = "0.1.0";

}  // namespace bindecomp
