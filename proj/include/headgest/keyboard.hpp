#pragma once

// Clustered QWERTY keyboard: nine groups of neighbouring keys laid out on a
// 3x3 grid, numbered 1..9 row by row. Cluster 8 (bottom middle) is the
// space bar; the remaining eight clusters partition the 26 letters.

#include <array>
#include <compare>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "headgest/error.hpp"

namespace headgest {

inline constexpr int kNumClusters = 9;
inline constexpr int kSpaceCluster = 8;

class ClusterId {
 public:
  constexpr explicit ClusterId(int value) : value_(value) {
    if (value < 1 || value > kNumClusters) {
      throw InvalidCluster("cluster id must be in 1..9, got " + std::to_string(value));
    }
  }

  constexpr int value() const noexcept { return value_; }

  friend constexpr auto operator<=>(ClusterId, ClusterId) = default;

 private:
  int value_;
};

using ClusterSequence = std::vector<ClusterId>;

inline ClusterSequence make_sequence(std::initializer_list<int> ids) {
  ClusterSequence seq;
  seq.reserve(ids.size());
  for (int id : ids) seq.emplace_back(id);
  return seq;
}

inline ClusterSequence make_sequence(const std::vector<int>& ids) {
  ClusterSequence seq;
  seq.reserve(ids.size());
  for (int id : ids) seq.emplace_back(id);
  return seq;
}

inline std::vector<int> to_ints(const ClusterSequence& seq) {
  std::vector<int> out;
  out.reserve(seq.size());
  for (ClusterId c : seq) out.push_back(c.value());
  return out;
}

inline std::string to_string(const ClusterSequence& seq) {
  std::string out = "[";
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(seq[i].value());
  }
  return out + "]";
}

/// Integer grid position of a cluster; col grows rightwards, row downwards.
struct GridCoord {
  int col;
  int row;
  friend constexpr bool operator==(GridCoord, GridCoord) = default;
};

constexpr GridCoord coord_of(ClusterId c) noexcept {
  return {(c.value() - 1) % 3, (c.value() - 1) / 3};
}

class KeyboardLayout {
 public:
  /// The only layout consistent with every published example sequence.
  static const KeyboardLayout& standard() {
    static const KeyboardLayout layout({"qwe", "rtyu", "iop", "asd", "fgh", "jkl", "zxcv", " ", "bnm"});
    return layout;
  }

  /// Cluster holding `ch`; uppercase letters are folded to lowercase.
  ClusterId cluster_of(char ch) const {
    const int slot = slot_of(ch);
    if (slot < 0 || table_[slot] == 0) {
      throw UnsupportedCharacter(std::string("character '") + ch + "' is not on the clustered keyboard");
    }
    return ClusterId(table_[slot]);
  }

  bool maps(char ch) const noexcept {
    const int slot = slot_of(ch);
    return slot >= 0 && table_[slot] != 0;
  }

  const std::string& letters_of(ClusterId c) const noexcept { return letters_[c.value() - 1]; }

 private:
  explicit KeyboardLayout(std::array<std::string, kNumClusters> letters) : letters_(std::move(letters)) {
    table_.fill(0);
    for (int c = 0; c < kNumClusters; ++c) {
      for (char ch : letters_[c]) table_[slot_of(ch)] = c + 1;
    }
  }

  // 0..25 letters, 26 space, -1 anything else.
  static constexpr int slot_of(char ch) noexcept {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
    if (ch >= 'a' && ch <= 'z') return ch - 'a';
    if (ch == ' ') return 26;
    return -1;
  }

  std::array<std::string, kNumClusters> letters_;
  std::array<int, 27> table_{};
};

/// Drops adjacent duplicates: [6,6,3] -> [6,3].
inline ClusterSequence collapse_repeats(const ClusterSequence& seq) {
  ClusterSequence out;
  for (ClusterId c : seq) {
    if (out.empty() || out.back() != c) out.push_back(c);
  }
  return out;
}

inline ClusterSequence encode_text(std::string_view text, const KeyboardLayout& layout = KeyboardLayout::standard(),
                                   bool collapse = false) {
  if (text.empty()) throw EmptyText("cannot encode empty text");
  ClusterSequence seq;
  seq.reserve(text.size());
  for (char ch : text) seq.push_back(layout.cluster_of(ch));
  return collapse ? collapse_repeats(seq) : seq;
}

/// Number of adjacent equal pairs; CTC needs a blank frame between each.
inline std::size_t count_repeats(const ClusterSequence& seq) noexcept {
  std::size_t n = 0;
  for (std::size_t i = 1; i < seq.size(); ++i) n += seq[i] == seq[i - 1];
  return n;
}

}  // namespace headgest
