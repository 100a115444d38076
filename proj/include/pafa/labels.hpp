#pragma once

#include <array>
#include <string>
#include <string_view>

#include "pafa/errors.hpp"

namespace pafa {

// Index order is fixed to (Normal, Crackle, Wheeze, Both) everywhere;
// confusion matrices and serialized files rely on it.
enum class ClassLabel4 : int { Normal = 0, Crackle = 1, Wheeze = 2, Both = 3 };

enum class ClassLabel2 : int { Normal = 0, Abnormal = 1 };

inline constexpr int kNumClasses4 = 4;
inline constexpr int kNumClasses2 = 2;

inline constexpr std::array<ClassLabel4, 4> kAllLabels4 = {
    ClassLabel4::Normal, ClassLabel4::Crackle, ClassLabel4::Wheeze, ClassLabel4::Both};

inline ClassLabel4 label_from_bits(int crackle, int wheeze) {
  if (crackle != 0 && wheeze != 0) return ClassLabel4::Both;
  if (crackle != 0) return ClassLabel4::Crackle;
  if (wheeze != 0) return ClassLabel4::Wheeze;
  return ClassLabel4::Normal;
}

inline ClassLabel2 map_4to2(ClassLabel4 label) {
  return label == ClassLabel4::Normal ? ClassLabel2::Normal : ClassLabel2::Abnormal;
}

inline std::string_view to_string(ClassLabel4 label) {
  switch (label) {
    case ClassLabel4::Normal: return "normal";
    case ClassLabel4::Crackle: return "crackle";
    case ClassLabel4::Wheeze: return "wheeze";
    case ClassLabel4::Both: return "both";
  }
  return "?";
}

inline std::string_view to_string(ClassLabel2 label) {
  return label == ClassLabel2::Normal ? "normal" : "abnormal";
}

inline ClassLabel4 parse_label4(std::string_view text) {
  if (text == "normal") return ClassLabel4::Normal;
  if (text == "crackle") return ClassLabel4::Crackle;
  if (text == "wheeze") return ClassLabel4::Wheeze;
  if (text == "both") return ClassLabel4::Both;
  throw ParseError("unknown class label: '" + std::string(text) + "'");
}

}  // namespace pafa
