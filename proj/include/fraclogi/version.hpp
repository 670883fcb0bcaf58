#pragma once

namespace fraclogi {

inline constexpr const char* kVersion = "0.1.0";

}
