#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "omnisat/core.hpp"

namespace omnisat {

using TokenStream = std::vector<int>;

struct Merge {
  int left = 0;
  int right = 0;
  int id = 0;

  bool operator==(const Merge&) const = default;
};

/// Ordered BPE merges over an integer alphabet [0, base_vocab). Merge k
/// produces id base_vocab + k.
class MergeTable {
 public:
  MergeTable() = default;
  MergeTable(int base_vocab, int max_vocab, std::vector<Merge> merges);

  int base_vocab() const { return base_vocab_; }
  int max_vocab() const { return max_vocab_; }
  /// base_vocab + number of merges.
  int vocab_size() const { return base_vocab_ + static_cast<int>(merges_.size()); }
  const std::vector<Merge>& merges() const { return merges_; }

  /// Appends the primitive ids that `id` expands to.
  void append_expansion(int id, std::vector<int>& out) const;

  /// Rank of the merge for (left, right), or -1.
  int rank(int left, int right) const;

  bool operator==(const MergeTable& o) const {
    return base_vocab_ == o.base_vocab_ && max_vocab_ == o.max_vocab_ && merges_ == o.merges_;
  }

 private:
  int base_vocab_ = 0;
  int max_vocab_ = 0;
  std::vector<Merge> merges_;
  std::unordered_map<std::uint64_t, int> rank_;
  std::vector<std::vector<int>> expansion_;  // indexed by id - base_vocab
};

/// Greedy most-frequent-pair merging. Streams are independent (no pair spans
/// two streams); ties go to the lexicographically smaller (left, right);
/// training stops at max_vocab or when no pair occurs at least twice.
MergeTable train_merges(std::span<const TokenStream> corpus, int base_vocab, int max_vocab);

TokenStream bpe_encode(const MergeTable& table, std::span<const int> stream);
TokenStream bpe_decode(const MergeTable& table, std::span<const int> ids);

}  // namespace omnisat
