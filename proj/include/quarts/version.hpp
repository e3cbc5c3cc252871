#pragma once

namespace quarts {

inline constexpr const char* version = "0.1.0";

}  // namespace quarts
