#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace tajweed {

inline constexpr std::size_t kNumRules = 3;

struct RuleInfo {
  std::string_view key;          // label-table column name
  std::string_view name;         // transliterated rule name
  std::string_view english;      // English gloss used in the literature
  std::string_view description;
};

// Output index order of the model, column order of labels.csv and of every
// per-rule array in this codebase. Changing it is an API break.
inline constexpr std::array<RuleInfo, kNumRules> kRules{{
    {"separate_stretching", "Al Mad", "separate stretching",
     "Elongation of a long vowel that meets a hamza across a word boundary; the "
     "recitation is correct when the vowel is held for its full count."},
    {"tight_noon", "Ghunnah", "tight noon",
     "Nasalization held on a doubled noon or meem; the recitation is correct when "
     "the nasal sound is sustained for about two counts."},
    {"hide", "Ikhfaa", "hide",
     "Partial concealment of a sakin noon or tanween before certain consonants; the "
     "recitation is correct when the noon is neither fully pronounced nor merged."},
}};

/// Short column names used in metrics.csv (acc_mad, acc_ghunnah, acc_ikhfaa).
inline constexpr std::array<std::string_view, kNumRules> kRuleShortNames{"mad", "ghunnah",
                                                                         "ikhfaa"};

}  // namespace tajweed
