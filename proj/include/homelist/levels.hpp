#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "homelist/error.hpp"

namespace homelist {

enum class OrderedTrait : std::size_t { maintenance, energy_class, garage, garden, kitchen };
inline constexpr std::size_t kOrderedTraitCount = 5;

inline constexpr std::array<std::string_view, kOrderedTraitCount> kOrderedTraitNames{
    "maintenance", "energy_class", "garage", "garden", "kitchen"};

inline std::string lowercase_trimmed(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

/// Ordered category labels for one trait, listed from worst to best quality.
/// Label i (zero-based) encodes to level i + 1, so levels run 1..K.
class OrderedLevelScheme {
public:
  OrderedLevelScheme() = default;
  OrderedLevelScheme(std::string trait, std::vector<std::string> labels)
      : trait_(std::move(trait)), labels_(std::move(labels)) {
    if (labels_.size() < 2) {
      throw ValidationError("level scheme '" + trait_ + "' needs at least two labels");
    }
    for (auto& l : labels_) l = lowercase_trimmed(l);
    std::vector<std::string> sorted = labels_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ValidationError("level scheme '" + trait_ + "' has duplicate labels");
    }
  }

  const std::string& trait() const { return trait_; }
  int levels() const { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }

  // Accepts a label (case-insensitive) or an integer level written as text.
  std::optional<int> find(std::string_view label) const {
    const std::string key = lowercase_trimmed(label);
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] == key) return static_cast<int>(i) + 1;
    }
    int level = 0;
    const auto* first = key.data();
    const auto* last = key.data() + key.size();
    auto [ptr, ec] = std::from_chars(first, last, level);
    if (ec == std::errc{} && ptr == last && level >= 1 && level <= levels()) return level;
    return std::nullopt;
  }

  const std::string& label(int level) const {
    if (level < 1 || level > levels()) {
      throw ValidationError("level " + std::to_string(level) + " outside scheme '" + trait_ + "'");
    }
    return labels_[static_cast<std::size_t>(level - 1)];
  }

  bool operator==(const OrderedLevelScheme&) const = default;

private:
  std::string trait_;
  std::vector<std::string> labels_;
};

/// One scheme per ordered trait. Defaults: maintenance 4 levels, energy class
/// 8, garage 3, garden 3, kitchen 3.
struct LevelSchemes {
  std::array<OrderedLevelScheme, kOrderedTraitCount> schemes;

  const OrderedLevelScheme& operator[](OrderedTrait t) const {
    return schemes[static_cast<std::size_t>(t)];
  }
  OrderedLevelScheme& operator[](OrderedTrait t) { return schemes[static_cast<std::size_t>(t)]; }

  static const LevelSchemes& defaults() {
    static const LevelSchemes d{{
        OrderedLevelScheme("maintenance",
                           {"to be fully renovated", "to be partially renovated", "good", "new"}),
        OrderedLevelScheme("energy_class", {"g", "f", "e", "d", "c", "b", "a", "a+"}),
        OrderedLevelScheme("garage", {"none", "shared", "private"}),
        OrderedLevelScheme("garden", {"none", "shared", "private"}),
        OrderedLevelScheme("kitchen", {"kitchenette", "open", "separate"}),
    }};
    return d;
  }
};

/// Maps a label to its quality level. Missing stays missing; an unknown
/// label is an error.
inline std::optional<int> encode_ordered(const std::optional<std::string>& label,
                                         const OrderedLevelScheme& scheme) {
  if (!label || lowercase_trimmed(*label).empty()) return std::nullopt;
  auto level = scheme.find(*label);
  if (!level) {
    throw ValidationError("unknown label '" + *label + "' for " + scheme.trait());
  }
  return level;
}

}  // namespace homelist
