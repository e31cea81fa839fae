#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cuneid {

// The seven language/dialect codes, in the fixed order used everywhere:
// class indices, decision-value layout, confusion-matrix axes, tie-breaks.
enum class LabelCode : int { LTB = 0, MPB, NE, NEB, OLB, STB, SUX };

inline constexpr int kNumLabels = 7;

inline constexpr std::array<std::string_view, kNumLabels> kLabelNames = {
    "LTB", "MPB", "NE", "NEB", "OLB", "STB", "SUX"};

inline constexpr std::array<LabelCode, kNumLabels> all_labels() {
  return {LabelCode::LTB, LabelCode::MPB, LabelCode::NE, LabelCode::NEB,
          LabelCode::OLB, LabelCode::STB, LabelCode::SUX};
}

inline constexpr std::string_view to_string(LabelCode code) {
  return kLabelNames[static_cast<int>(code)];
}

inline constexpr int label_index(LabelCode code) { return static_cast<int>(code); }

// Case-sensitive; anything outside the seven codes is rejected.
inline std::optional<LabelCode> parse_label(std::string_view name) {
  for (int i = 0; i < kNumLabels; ++i) {
    if (kLabelNames[i] == name) return static_cast<LabelCode>(i);
  }
  return std::nullopt;
}

inline LabelCode label_from_index(int i) {
  if (i < 0 || i >= kNumLabels)
    throw std::out_of_range("label index " + std::to_string(i) + " out of range");
  return static_cast<LabelCode>(i);
}

}  // namespace cuneid
