#pragma once

#include <array>
#include <string_view>

namespace cyto {

inline constexpr int kNumClasses = 5;

/// SIPaKMeD cell categories, indexed by class id.
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "Superficial-Intermediate", "Parabasal", "Koilocytotic", "Dyskaryotic", "Metaplastic"};

}  // namespace cyto
