#include "clademap/tipset.hpp"

#include "clademap/errors.hpp"

#include <bit>

namespace clademap {

TipSet::TipSet(std::size_t n_tips) : n_(n_tips), words_((n_tips + 63) / 64, 0) {}

TipSet TipSet::single(std::size_t n_tips, std::size_t tip) {
  TipSet t(n_tips);
  t.set(tip);
  return t;
}

TipSet TipSet::full(std::size_t n_tips) {
  TipSet t(n_tips);
  for (auto& w : t.words_) w = ~std::uint64_t{0};
  t.clear_padding();
  return t;
}

void TipSet::clear_padding() {
  if (n_ % 64 != 0 && !words_.empty()) {
    words_.back() &= (std::uint64_t{1} << (n_ % 64)) - 1;
  }
}

std::size_t TipSet::count() const {
  std::size_t c = 0;
  for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
  return c;
}

bool TipSet::none() const {
  for (auto w : words_)
    if (w) return false;
  return true;
}

bool TipSet::intersects(const TipSet& other) const {
  for (std::size_t i = 0; i < words_.size(); ++i)
    if (words_[i] & other.words_[i]) return true;
  return false;
}

bool TipSet::is_subset_of(const TipSet& other) const {
  for (std::size_t i = 0; i < words_.size(); ++i)
    if (words_[i] & ~other.words_[i]) return false;
  return true;
}

TipSet TipSet::complement() const {
  TipSet t(*this);
  for (auto& w : t.words_) w = ~w;
  t.clear_padding();
  return t;
}

TipSet& TipSet::operator|=(const TipSet& other) {
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
  return *this;
}

TipSet& TipSet::operator&=(const TipSet& other) {
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= other.words_[i];
  return *this;
}

TipSet operator-(const TipSet& a, const TipSet& b) {
  TipSet t(a);
  for (std::size_t i = 0; i < t.words_.size(); ++i) t.words_[i] &= ~b.words_[i];
  return t;
}

std::vector<std::size_t> TipSet::members() const {
  std::vector<std::size_t> out;
  for (std::size_t w = 0; w < words_.size(); ++w) {
    auto bits = words_[w];
    while (bits) {
      out.push_back(w * 64 + static_cast<std::size_t>(std::countr_zero(bits)));
      bits &= bits - 1;
    }
  }
  return out;
}

std::string TipSet::to_hex() const {
  static constexpr char digits[] = "0123456789abcdef";
  const std::size_t n_digits = (n_ + 3) / 4;
  std::string out(n_digits, '0');
  for (std::size_t d = 0; d < n_digits; ++d) {
    const std::size_t bit = d * 4;
    const unsigned nibble = static_cast<unsigned>((words_[bit >> 6] >> (bit & 63)) & 0xF);
    out[n_digits - 1 - d] = digits[nibble];
  }
  return out;
}

TipSet TipSet::from_hex(std::string_view hex, std::size_t n_tips) {
  TipSet t(n_tips);
  const std::size_t n_digits = (n_tips + 3) / 4;
  if (hex.size() != n_digits) {
    throw InputError("tip-set hex has " + std::to_string(hex.size()) + " digits, expected " +
                     std::to_string(n_digits));
  }
  for (std::size_t d = 0; d < n_digits; ++d) {
    const char c = hex[n_digits - 1 - d];
    unsigned v;
    if (c >= '0' && c <= '9')
      v = static_cast<unsigned>(c - '0');
    else if (c >= 'a' && c <= 'f')
      v = static_cast<unsigned>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F')
      v = static_cast<unsigned>(c - 'A' + 10);
    else
      throw InputError(std::string("invalid hex digit '") + c + "' in tip set");
    const std::size_t bit = d * 4;
    t.words_[bit >> 6] |= static_cast<std::uint64_t>(v) << (bit & 63);
  }
  const TipSet before = t;
  t.clear_padding();
  if (!(before == t)) throw InputError("tip-set hex sets bits beyond the tip count");
  return t;
}

double jaccard(const TipSet& a, const TipSet& b) {
  const std::size_t uni = (a | b).count();
  if (uni == 0) return 1.0;
  return static_cast<double>((a & b).count()) / static_cast<double>(uni);
}

}  // namespace clademap
