#pragma once

namespace resnetcrowd {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace resnetcrowd
