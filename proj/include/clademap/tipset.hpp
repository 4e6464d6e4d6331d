#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace clademap {

/// Fixed-size bitset over the tips (panel haplotypes) of a tree.
/// Bit k set means haplotype k descends from the branch.
class TipSet {
 public:
  TipSet() = default;
  explicit TipSet(std::size_t n_tips);

  static TipSet single(std::size_t n_tips, std::size_t tip);
  static TipSet full(std::size_t n_tips);

  std::size_t size() const { return n_; }
  std::size_t count() const;
  bool test(std::size_t tip) const {
    return (words_[tip >> 6] >> (tip & 63)) & 1u;
  }
  void set(std::size_t tip) { words_[tip >> 6] |= (std::uint64_t{1} << (tip & 63)); }
  void reset(std::size_t tip) { words_[tip >> 6] &= ~(std::uint64_t{1} << (tip & 63)); }

  bool none() const;
  bool any() const { return !none(); }
  bool intersects(const TipSet& other) const;
  bool is_subset_of(const TipSet& other) const;

  TipSet complement() const;
  TipSet& operator|=(const TipSet& other);
  TipSet& operator&=(const TipSet& other);
  friend TipSet operator|(TipSet a, const TipSet& b) { return a |= b; }
  friend TipSet operator&(TipSet a, const TipSet& b) { return a &= b; }
  /// Set difference a \ b.
  friend TipSet operator-(const TipSet& a, const TipSet& b);

  bool operator==(const TipSet& other) const = default;

  std::vector<std::size_t> members() const;

  /// Big-endian hex, ceil(n/4) digits; tip 0 is the lowest bit of the last digit.
  std::string to_hex() const;
  static TipSet from_hex(std::string_view hex, std::size_t n_tips);

 private:
  void clear_padding();

  std::size_t n_ = 0;
  std::vector<std::uint64_t> words_;
};

/// |A ∩ B| / |A ∪ B|; 1 when both are empty.
double jaccard(const TipSet& a, const TipSet& b);

}  // namespace clademap
