// SPDX-License-Identifier: MIT
#pragma once

namespace femlab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace femlab
