#pragma once

namespace bsteer {

inline constexpr const char* kArtifactVersion = "0.1.0";

}  // namespace bsteer
