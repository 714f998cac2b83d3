#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "etree/oblivious.hpp"

namespace etree {

using obl::word;

constexpr std::size_t words_for(std::size_t bits) { return (bits + 63) / 64; }

enum class Major { row, column };

/// Dense 0/1 matrix. Bits are packed along rows (Major::row) or along
/// columns (Major::column); the packed direction is the inner dimension of a
/// product, so a row-major left operand pairs with a column-major right one.
template <Major Layout>
class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), stride_(words_for(line_bits())), bits_(lines() * stride_, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t stride() const { return stride_; }

  /// Number of packed lines (rows for row-major, columns for column-major).
  std::size_t lines() const { return Layout == Major::row ? rows_ : cols_; }
  std::size_t line_bits() const { return Layout == Major::row ? cols_ : rows_; }

  std::span<word> line(std::size_t i) { return {bits_.data() + i * stride_, stride_}; }
  std::span<const word> line(std::size_t i) const { return {bits_.data() + i * stride_, stride_}; }

  std::span<word> words() { return bits_; }
  std::span<const word> words() const { return bits_; }

  bool get(std::size_t r, std::size_t c) const {
    check(r, c);
    const auto [l, b] = locate(r, c);
    return (bits_[l * stride_ + b / 64] >> (b % 64)) & 1;
  }

  void set(std::size_t r, std::size_t c, bool v = true) {
    check(r, c);
    const auto [l, b] = locate(r, c);
    word& w = bits_[l * stride_ + b / 64];
    const word m = word{1} << (b % 64);
    w = (w & ~m) | (word{v} << (b % 64));
  }

  /// Appends `n` zero lines (rows for row-major, columns for column-major).
  void append_lines(std::size_t n) {
    (Layout == Major::row ? rows_ : cols_) += n;
    bits_.resize(lines() * stride_, 0);
  }

  std::size_t popcount_line(std::size_t i) const {
    std::size_t n = 0;
    for (word w : line(i)) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  friend bool operator==(const BitMatrix&, const BitMatrix&) = default;

 private:
  std::pair<std::size_t, std::size_t> locate(std::size_t r, std::size_t c) const {
    return Layout == Major::row ? std::pair{r, c} : std::pair{c, r};
  }
  void check(std::size_t r, std::size_t c) const {
    if (r >= rows_ || c >= cols_) throw std::out_of_range("BitMatrix index");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t stride_ = 0;
  std::vector<word> bits_;
};

using BitRows = BitMatrix<Major::row>;
using BitColumns = BitMatrix<Major::column>;

/// Row-major integer result of a bit-matrix product. Entries are inner
/// products of one-hot rows with masks, bounded by the number of features.
class CountMatrix {
 public:
  using value_type = std::uint16_t;

  CountMatrix() = default;
  CountMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  value_type operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  value_type& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  std::span<const value_type> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<value_type> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<value_type> data_;
};

/// Integer product over {0,1}: out(n, c) = |lhs row n AND rhs column c|.
/// Loop bounds depend only on the shapes.
inline CountMatrix matmul_counts(const BitRows& lhs, const BitColumns& rhs) {
  if (lhs.cols() != rhs.rows())
    throw std::invalid_argument("matmul_counts: inner dimension mismatch (" + std::to_string(lhs.cols()) +
                                " vs " + std::to_string(rhs.rows()) + ")");
  obl::emit(obl::OpKind::matmul, {lhs.rows(), lhs.cols(), rhs.cols()});
  CountMatrix out(lhs.rows(), rhs.cols());
  const std::size_t stride = lhs.stride();
  const std::size_t width = rhs.cols();
  for (std::size_t n = 0; n < lhs.rows(); ++n) {
    const word* a = lhs.line(n).data();
    auto* dst = out.row(n).data();
    const word* b = rhs.words().data();
    switch (stride) {
      case 1:
        for (std::size_t c = 0; c < width; ++c)
          dst[c] = static_cast<CountMatrix::value_type>(std::popcount(a[0] & b[c]));
        break;
      case 2:
        for (std::size_t c = 0; c < width; ++c, b += 2)
          dst[c] = static_cast<CountMatrix::value_type>(std::popcount(a[0] & b[0]) +
                                                        std::popcount(a[1] & b[1]));
        break;
      default:
        for (std::size_t c = 0; c < width; ++c, b += stride) {
          int acc = 0;
          for (std::size_t w = 0; w < stride; ++w) acc += std::popcount(a[w] & b[w]);
          dst[c] = static_cast<CountMatrix::value_type>(acc);
        }
    }
  }
  return out;
}

}  // namespace etree
