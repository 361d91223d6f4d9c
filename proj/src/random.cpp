#include "hmcperfect/random.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace hmcperfect {

namespace {

constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;

// Fixed second key word; the master seed is the first.
constexpr std::uint64_t kKeyTag = 0x68636d7065726665ULL;

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
  const unsigned __int128 product = static_cast<unsigned __int128>(a) * b;
  hi = static_cast<std::uint64_t>(product >> 64);
  lo = static_cast<std::uint64_t>(product);
}

inline double to_open_unit(std::uint64_t x) { return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53; }

std::array<std::uint64_t, 4> counter_for(const StreamKey& key, std::uint64_t column_group) {
  if (key.row >= (1ULL << 32) || column_group >= (1ULL << 32)) {
    throw std::out_of_range("random stream row or column exceeds 2^32");
  }
  return {(key.row << 32) | column_group, key.block, key.sample_set, static_cast<std::uint64_t>(key.stream)};
}

}  // namespace

std::array<std::uint64_t, 4> philox4x64(std::array<std::uint64_t, 4> ctr, std::array<std::uint64_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    std::uint64_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

double uniform(const StreamKey& key) {
  const auto words = philox4x64(counter_for(key, key.column / 4), {key.master_seed, kKeyTag});
  return to_open_unit(words[key.column % 4]);
}

void fill_uniforms(const StreamKey& row_key, std::uint64_t first_column, std::span<double> out) {
  std::size_t j = 0;
  std::uint64_t column = first_column;
  while (j < out.size()) {
    const auto words = philox4x64(counter_for(row_key, column / 4), {row_key.master_seed, kKeyTag});
    for (std::uint64_t lane = column % 4; lane < 4 && j < out.size(); ++lane, ++j, ++column) {
      out[j] = to_open_unit(words[lane]);
    }
  }
}

Stream rounding_stream_for(Stream stream) {
  switch (stream) {
    case Stream::hmc: return Stream::rounding;
    case Stream::cftp: return Stream::cftp_rounding;
    case Stream::rocftp: return Stream::rocftp_rounding;
    case Stream::coupled: return Stream::coupled_rounding;
    default: return stream;
  }
}

RandomBlock::RandomBlock(std::uint64_t seed, Stream stream, std::uint64_t sample_set, std::uint64_t block, int n_rows,
                         int row_width, int dim, int row_offset)
    : base_{seed, stream, sample_set, block, 0, 0},
      n_rows_(n_rows),
      row_width_(row_width),
      dim_(dim),
      row_offset_(row_offset),
      rounding_(dim + 1) {
  if (n_rows < 0 || row_width <= 0 || dim <= 0 || row_offset < 0) {
    throw std::invalid_argument("RandomBlock: bad shape");
  }
  // Rounding variates sit in row 0 of the paired rounding stream, so they do
  // not depend on the number of trajectories in the block.
  StreamKey rk = base_;
  rk.stream = rounding_stream_for(stream);
  if (rk.stream == stream) rk.row = (1ULL << 32) - 1;
  fill_uniforms(rk, 0, std::span<double>(rounding_.data(), static_cast<std::size_t>(rounding_.size())));
}

void RandomBlock::fill_row(int i, int first_column, std::span<double> out) const {
  if (i < 0 || i >= n_rows_) throw std::out_of_range("RandomBlock: row index");
  if (first_column < 0 || first_column + static_cast<int>(out.size()) > row_width_) {
    throw std::out_of_range("RandomBlock: column range");
  }
  StreamKey key = base_;
  key.row = static_cast<std::uint64_t>(row_offset_ + i);
  fill_uniforms(key, static_cast<std::uint64_t>(first_column), out);
}

Vec RandomBlock::row(int i) const {
  Vec out(row_width_);
  fill_row(i, 0, std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
  return out;
}

RandomBlock RandomBlock::suffix(int n) const {
  if (n < 0 || n > n_rows_) throw std::out_of_range("RandomBlock: suffix length");
  RandomBlock out = *this;
  out.row_offset_ = row_offset_ + (n_rows_ - n);
  out.n_rows_ = n;
  return out;
}

Mat RandomBlock::materialize() const {
  Mat m(n_rows_, row_width_);
  for (int i = 0; i < n_rows_; ++i) m.row(i) = row(i).transpose();
  return m;
}

std::uint64_t RandomBlock::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  std::vector<double> buffer(static_cast<std::size_t>(row_width_));
  for (int i = 0; i < n_rows_; ++i) {
    fill_row(i, 0, buffer);
    for (double v : buffer) mix(v);
  }
  for (Eigen::Index j = 0; j < rounding_.size(); ++j) mix(rounding_[j]);
  return h;
}

RandomBlock block_uniforms(std::uint64_t seed, Stream stream, std::uint64_t sample_set, std::uint64_t block, int n_rows,
                           int row_width, int dim) {
  return RandomBlock(seed, stream, sample_set, block, n_rows, row_width, dim);
}

}  // namespace hmcperfect
