#pragma once

namespace pqnet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace pqnet
