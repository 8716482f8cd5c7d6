#include "omnisat/bpe.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <unordered_set>

namespace omnisat {

namespace {

std::uint64_t pair_key(int left, int right) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(left)) << 32) |
         static_cast<std::uint32_t>(right);
}

int key_left(std::uint64_t key) { return static_cast<int>(key >> 32); }
int key_right(std::uint64_t key) { return static_cast<int>(key & 0xffffffffu); }

// Replaces non-overlapping (left, right) occurrences, scanning left to right.
bool apply_merge(std::vector<int>& s, int left, int right, int id) {
  bool changed = false;
  std::size_t out = 0;
  for (std::size_t i = 0; i < s.size();) {
    if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
      s[out++] = id;
      i += 2;
      changed = true;
    } else {
      s[out++] = s[i++];
    }
  }
  s.resize(out);
  return changed;
}

}  // namespace

MergeTable::MergeTable(int base_vocab, int max_vocab, std::vector<Merge> merges)
    : base_vocab_(base_vocab), max_vocab_(max_vocab), merges_(std::move(merges)) {
  if (base_vocab_ < 0) throw Error("bpe: negative base vocabulary");
  if (max_vocab_ < vocab_size()) {
    throw Error("bpe: " + std::to_string(merges_.size()) + " merges exceed max vocabulary " +
                std::to_string(max_vocab_));
  }
  expansion_.reserve(merges_.size());
  for (std::size_t k = 0; k < merges_.size(); ++k) {
    const auto& m = merges_[k];
    if (m.id != base_vocab_ + static_cast<int>(k)) {
      throw Error("bpe: merge " + std::to_string(k) + " has id " + std::to_string(m.id) +
                  ", expected " + std::to_string(base_vocab_ + static_cast<int>(k)));
    }
    if (m.left < 0 || m.right < 0 || m.left >= m.id || m.right >= m.id) {
      throw Error("bpe: merge " + std::to_string(k) + " references an id not yet defined");
    }
    if (!rank_.emplace(pair_key(m.left, m.right), static_cast<int>(k)).second) {
      throw Error("bpe: duplicate merge for pair (" + std::to_string(m.left) + ", " +
                  std::to_string(m.right) + ")");
    }
    std::vector<int> expanded;
    append_expansion(m.left, expanded);
    append_expansion(m.right, expanded);
    expansion_.push_back(std::move(expanded));
  }
}

void MergeTable::append_expansion(int id, std::vector<int>& out) const {
  if (id >= 0 && id < base_vocab_) {
    out.push_back(id);
    return;
  }
  const auto k = static_cast<std::size_t>(id - base_vocab_);
  if (id < base_vocab_ || k >= expansion_.size()) {
    throw Error("bpe: unknown token id " + std::to_string(id));
  }
  out.insert(out.end(), expansion_[k].begin(), expansion_[k].end());
}

int MergeTable::rank(int left, int right) const {
  const auto it = rank_.find(pair_key(left, right));
  return it == rank_.end() ? -1 : it->second;
}

MergeTable train_merges(std::span<const TokenStream> corpus, int base_vocab, int max_vocab) {
  if (corpus.empty()) throw Error("train_merges: empty corpus");
  if (base_vocab <= 0) throw Error("train_merges: base vocabulary must be positive");
  std::vector<std::vector<int>> streams(corpus.begin(), corpus.end());
  for (std::size_t s = 0; s < streams.size(); ++s) {
    for (const int id : streams[s]) {
      if (id < 0 || id >= base_vocab) {
        throw Error("train_merges: id " + std::to_string(id) + " in stream " + std::to_string(s) +
                    " is outside the base vocabulary " + std::to_string(base_vocab));
      }
    }
  }

  std::unordered_map<std::uint64_t, std::int64_t> counts;
  std::unordered_map<std::uint64_t, std::unordered_set<std::uint32_t>> where;
  for (std::size_t s = 0; s < streams.size(); ++s) {
    const auto& st = streams[s];
    for (std::size_t i = 0; i + 1 < st.size(); ++i) {
      const auto key = pair_key(st[i], st[i + 1]);
      ++counts[key];
      where[key].insert(static_cast<std::uint32_t>(s));
    }
  }

  struct Entry {
    std::int64_t count;
    std::uint64_t key;
  };
  // Highest count first; ties to the smaller (left, right), which is the smaller key.
  const auto worse = [](const Entry& a, const Entry& b) {
    if (a.count != b.count) return a.count < b.count;
    return a.key > b.key;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> heap(worse);
  for (const auto& [key, count] : counts) heap.push({count, key});

  std::vector<Merge> merges;
  int next_id = base_vocab;
  std::vector<std::uint64_t> touched;
  while (next_id < max_vocab) {
    while (!heap.empty()) {
      const auto top = heap.top();
      const auto it = counts.find(top.key);
      if (it != counts.end() && it->second == top.count) break;
      heap.pop();
    }
    if (heap.empty() || heap.top().count < 2) break;
    const auto key = heap.top().key;
    heap.pop();
    const int left = key_left(key);
    const int right = key_right(key);
    const int id = next_id++;
    merges.push_back({left, right, id});

    std::vector<std::uint32_t> affected(where[key].begin(), where[key].end());
    std::sort(affected.begin(), affected.end());
    touched.clear();
    for (const auto s : affected) {
      auto& st = streams[s];
      std::vector<int> updated = st;
      if (!apply_merge(updated, left, right, id)) continue;
      for (std::size_t i = 0; i + 1 < st.size(); ++i) {
        const auto k = pair_key(st[i], st[i + 1]);
        if (--counts[k] == 0) counts.erase(k);
        touched.push_back(k);
      }
      st = std::move(updated);
      for (std::size_t i = 0; i + 1 < st.size(); ++i) {
        const auto k = pair_key(st[i], st[i + 1]);
        ++counts[k];
        where[k].insert(s);
        touched.push_back(k);
      }
    }
    where.erase(key);
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    for (const auto k : touched) {
      if (const auto it = counts.find(k); it != counts.end()) heap.push({it->second, k});
    }
  }
  return MergeTable(base_vocab, max_vocab, std::move(merges));
}

TokenStream bpe_encode(const MergeTable& table, std::span<const int> stream) {
  TokenStream out(stream.begin(), stream.end());
  for (const int id : out) {
    if (id < 0 || id >= table.base_vocab()) {
      throw Error("bpe_encode: id " + std::to_string(id) + " outside base vocabulary " +
                  std::to_string(table.base_vocab()));
    }
  }
  // Applying the lowest-ranked present merge first reproduces training order.
  while (out.size() > 1) {
    int best = std::numeric_limits<int>::max();
    for (std::size_t i = 0; i + 1 < out.size(); ++i) {
      const int r = table.rank(out[i], out[i + 1]);
      if (r >= 0 && r < best) best = r;
    }
    if (best == std::numeric_limits<int>::max()) break;
    const auto& m = table.merges()[static_cast<std::size_t>(best)];
    apply_merge(out, m.left, m.right, m.id);
  }
  return out;
}

TokenStream bpe_decode(const MergeTable& table, std::span<const int> ids) {
  TokenStream out;
  out.reserve(ids.size());
  for (const int id : ids) table.append_expansion(id, out);
  return out;
}

}  // namespace omnisat
