#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace optdialog {

// Lowercase, trim, collapse inner whitespace.
std::string normalize_label(std::string_view text);

// Ordered, duplicate-free class names. Class indices are positions in this list.
class LabelSpace {
 public:
  LabelSpace() = default;
  // Throws InvalidLabelSpace on fewer than two classes, empty names, names
  // containing ';' or line breaks, or duplicates after normalization.
  explicit LabelSpace(std::vector<std::string> classes);

  std::size_t size() const { return classes_.size(); }
  const std::string& name(std::size_t index) const { return classes_.at(index); }
  const std::vector<std::string>& names() const { return classes_; }
  const std::vector<std::string>& normalized() const { return normalized_; }
  bool contains_index(std::size_t index) const { return index < classes_.size(); }

  // Exact lookup after normalization; npos when absent.
  std::size_t find(std::string_view name) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<std::string> classes_;
  std::vector<std::string> normalized_;
};

// Levenshtein distance extended with adjacent transpositions (optimal string
// alignment), so a swapped pair of letters costs one edit.
std::size_t edit_distance(std::string_view a, std::string_view b);

inline constexpr double kFuzzyMatchThreshold = 0.25;

// Resolves free text to a class index: exact match, then unique containment,
// then nearest class by normalized edit distance (distance / longer length
// <= kFuzzyMatchThreshold, unique minimum). Throws UnknownLabel or
// AmbiguousLabel; the error subject carries the candidate text.
std::size_t match_label(std::string_view candidate, const LabelSpace& labels);

}  // namespace optdialog
