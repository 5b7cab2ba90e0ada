#pragma once

// Word suggestion from a cluster sequence: a trie whose edges are cluster
// ids. Words that share an encoding ("live", "love") end on the same node
// and are returned in frequency-rank order.

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "headgest/error.hpp"
#include "headgest/keyboard.hpp"

namespace headgest {

struct Suggestion {
  std::string word;
  int rank = 0;  // 1 = most frequent
  friend bool operator==(const Suggestion&, const Suggestion&) = default;
};

struct LexiconStats {
  std::size_t unique_sequences = 0;
  std::size_t words = 0;
  double avg_words_per_sequence = 0;
};

class ClusterTrie {
 public:
  struct BuildReport {
    std::size_t inserted = 0;
    std::size_t skipped_unsupported = 0;
    std::size_t skipped_duplicates = 0;
  };

  ClusterTrie() : nodes_(1) {}

  /// Builds from a rank-ordered word list: the word at position i gets rank
  /// i + 1. Words with characters other than letters, and repeats, are
  /// skipped and counted in `report`.
  static ClusterTrie build(const std::vector<std::string>& words, const KeyboardLayout& layout = KeyboardLayout::standard(),
                           bool collapse = false, BuildReport* report = nullptr) {
    ClusterTrie trie;
    trie.collapse_ = collapse;
    BuildReport local;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < words.size(); ++i) {
      std::string w = words[i];
      std::transform(w.begin(), w.end(), w.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
      const bool alphabetic = !w.empty() && std::all_of(w.begin(), w.end(), [](char ch) { return ch >= 'a' && ch <= 'z'; });
      if (!alphabetic || !std::all_of(w.begin(), w.end(), [&](char ch) { return layout.maps(ch); })) {
        ++local.skipped_unsupported;
        continue;
      }
      if (!seen.insert(w).second) {
        ++local.skipped_duplicates;
        continue;
      }
      ClusterSequence seq = encode_text(w, layout, collapse);
      trie.insert(seq, std::move(w), static_cast<int>(i + 1));
      ++local.inserted;
    }
    if (report) *report = local;
    return trie;
  }

  /// Words encoding exactly to `seq`, best rank first; limit 0 means all.
  /// A trie built with collapse merges repeats in the query as well.
  std::vector<Suggestion> suggest(const ClusterSequence& seq, std::size_t limit = 0) const {
    const int node = find(collapse_ ? collapse_repeats(seq) : seq);
    if (node < 0) return {};
    const auto& words = nodes_[static_cast<std::size_t>(node)].words;
    const std::size_t n = limit == 0 ? words.size() : std::min(limit, words.size());
    return {words.begin(), words.begin() + static_cast<std::ptrdiff_t>(n)};
  }

  LexiconStats stats() const {
    LexiconStats s;
    for (const auto& node : nodes_) {
      if (node.words.empty()) continue;
      ++s.unique_sequences;
      s.words += node.words.size();
    }
    if (s.unique_sequences == 0) throw EmptyLexicon("lexicon holds no words");
    s.avg_words_per_sequence = static_cast<double>(s.words) / static_cast<double>(s.unique_sequences);
    return s;
  }

  bool empty() const noexcept { return word_count_ == 0; }
  std::size_t size() const noexcept { return word_count_; }
  bool collapsed() const noexcept { return collapse_; }

 private:
  struct Node {
    std::array<int, kNumClusters> child;
    std::vector<Suggestion> words;  // kept sorted by rank
    Node() { child.fill(-1); }
  };

  void insert(const ClusterSequence& seq, std::string word, int rank) {
    std::size_t node = 0;
    for (ClusterId c : seq) {
      int& next = nodes_[node].child[static_cast<std::size_t>(c.value() - 1)];
      if (next < 0) {
        next = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
      }
      node = static_cast<std::size_t>(nodes_[node].child[static_cast<std::size_t>(c.value() - 1)]);
    }
    auto& words = nodes_[node].words;
    const auto at = std::upper_bound(words.begin(), words.end(), rank,
                                     [](int r, const Suggestion& s) { return r < s.rank; });
    words.insert(at, Suggestion{std::move(word), rank});
    ++word_count_;
  }

  int find(const ClusterSequence& seq) const {
    std::size_t node = 0;
    for (ClusterId c : seq) {
      const int next = nodes_[node].child[static_cast<std::size_t>(c.value() - 1)];
      if (next < 0) return -1;
      node = static_cast<std::size_t>(next);
    }
    return static_cast<int>(node);
  }

  std::vector<Node> nodes_;
  std::size_t word_count_ = 0;
  bool collapse_ = false;
};

/// One word per line; blank lines are ignored, CRs stripped.
inline std::vector<std::string> read_word_list(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open word list " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return words;
}

}  // namespace headgest
