// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>
#include <vector>

namespace cart {

// Row-major matrix of bits, 64 coordinates per word, little-endian bit order
// within each word.  Coordinates are 0-based here; the 1-based convention
// lives only at the serialization/CLI boundary.
class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(std::int64_t rows, int cols)
      : rows_(rows),
        cols_(cols),
        wpr_((cols + 63) / 64),
        words_(static_cast<std::size_t>(rows) * wpr_, 0) {}

  std::int64_t rows() const { return rows_; }
  int cols() const { return cols_; }
  int words_per_row() const { return wpr_; }

  int get(std::int64_t row, int col) const {
    const std::uint64_t w = words_[static_cast<std::size_t>(row) * wpr_ + col / 64];
    return static_cast<int>((w >> (col % 64)) & 1u);
  }

  void set(std::int64_t row, int col, int bit) {
    std::uint64_t& w = words_[static_cast<std::size_t>(row) * wpr_ + col / 64];
    const std::uint64_t mask = 1ULL << (col % 64);
    if (bit)
      w |= mask;
    else
      w &= ~mask;
  }

  const std::uint64_t* row_words(std::int64_t row) const {
    return words_.data() + static_cast<std::size_t>(row) * wpr_;
  }

  // Copies a whole row from a matrix with the same column count.
  void copy_row_from(std::int64_t row, const BitMatrix& src,
                     std::int64_t src_row) {
    const std::uint64_t* from = src.row_words(src_row);
    std::uint64_t* to = words_.data() + static_cast<std::size_t>(row) * wpr_;
    for (int w = 0; w < wpr_; ++w) to[w] = from[w];
  }

  bool operator==(const BitMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && words_ == o.words_;
  }

 private:
  std::int64_t rows_ = 0;
  int cols_ = 0;
  int wpr_ = 0;
  std::vector<std::uint64_t> words_;
};

}  // namespace cart
