#include "optdialog/labels.hpp"

#include <algorithm>
#include <cctype>
#include <limits>

#include "optdialog/error.hpp"

namespace optdialog {

std::string normalize_label(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

LabelSpace::LabelSpace(std::vector<std::string> classes) : classes_(std::move(classes)) {
  if (classes_.size() < 2) throw Error(ErrorCode::InvalidLabelSpace, "label space needs at least two classes");
  normalized_.reserve(classes_.size());
  for (const auto& name : classes_) {
    if (name.find_first_of(";\r\n") != std::string::npos) {
      throw Error(ErrorCode::InvalidLabelSpace, "class name may not contain ';' or line breaks", name);
    }
    auto norm = normalize_label(name);
    if (norm.empty()) throw Error(ErrorCode::InvalidLabelSpace, "class name is empty", name);
    if (std::find(normalized_.begin(), normalized_.end(), norm) != normalized_.end()) {
      throw Error(ErrorCode::InvalidLabelSpace, "duplicate class '" + name + "'", name);
    }
    normalized_.push_back(std::move(norm));
  }
}

std::size_t LabelSpace::find(std::string_view name) const {
  const auto norm = normalize_label(name);
  const auto it = std::find(normalized_.begin(), normalized_.end(), norm);
  return it == normalized_.end() ? npos : static_cast<std::size_t>(it - normalized_.begin());
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  // Three rolling rows: i-2, i-1, i.
  std::vector<std::size_t> prev2(m + 1), prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost});
      if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1]) {
        cur[j] = std::min(cur[j], prev2[j - 2] + 1);
      }
    }
    std::swap(prev2, prev);
    std::swap(prev, cur);
  }
  return prev[m];
}

namespace {

std::string strip_trailing_punctuation(std::string text) {
  while (!text.empty() && (std::ispunct(static_cast<unsigned char>(text.back())) || text.back() == ' ')) {
    text.pop_back();
  }
  return text;
}

std::string join_names(const LabelSpace& labels, const std::vector<std::size_t>& indices) {
  std::string out;
  for (auto i : indices) {
    if (!out.empty()) out += ", ";
    out += labels.name(i);
  }
  return out;
}

}  // namespace

std::size_t match_label(std::string_view candidate, const LabelSpace& labels) {
  const std::string norm = strip_trailing_punctuation(normalize_label(candidate));
  if (norm.empty()) throw Error(ErrorCode::UnknownLabel, "empty category", std::string(candidate));

  const auto& classes = labels.normalized();
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == norm) return i;
  }

  std::vector<std::size_t> containing;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (norm.find(classes[i]) != std::string::npos || classes[i].find(norm) != std::string::npos) {
      containing.push_back(i);
    }
  }
  if (containing.size() == 1) return containing.front();

  std::size_t best = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> nearest;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const std::size_t d = edit_distance(norm, classes[i]);
    const double ratio = static_cast<double>(d) / static_cast<double>(std::max(norm.size(), classes[i].size()));
    if (ratio > kFuzzyMatchThreshold) continue;
    if (d < best) {
      best = d;
      nearest.assign(1, i);
    } else if (d == best) {
      nearest.push_back(i);
    }
  }
  if (nearest.size() == 1) return nearest.front();
  if (nearest.size() > 1) {
    throw Error(ErrorCode::AmbiguousLabel, "'" + std::string(candidate) + "' is equally close to " +
                                               join_names(labels, nearest),
                std::string(candidate));
  }
  if (containing.size() > 1) {
    throw Error(ErrorCode::AmbiguousLabel, "'" + std::string(candidate) + "' mentions " +
                                               join_names(labels, containing),
                std::string(candidate));
  }
  throw Error(ErrorCode::UnknownLabel, "'" + std::string(candidate) + "' is not a listed class",
              std::string(candidate));
}

}  // namespace optdialog
