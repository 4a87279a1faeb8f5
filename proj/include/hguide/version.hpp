// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace hguide {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kArtifactFormatVersion = 1;

}  // namespace hguide
