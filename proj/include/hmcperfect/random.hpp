#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "hmcperfect/types.hpp"

namespace hmcperfect {

/// Philox4x64 with 10 rounds (Salmon et al., Random123). Pure function of
/// counter and key.
std::array<std::uint64_t, 4> philox4x64(std::array<std::uint64_t, 4> counter, std::array<std::uint64_t, 2> key);

/// Independent families of variates. Values are part of the stream
/// definition; changing them changes every downstream result.
enum class Stream : std::uint32_t {
  hmc = 1,
  rounding = 2,
  start = 3,
  cftp = 4,
  cftp_rounding = 5,
  rocftp = 6,
  rocftp_rounding = 7,
  coupled = 8,
  coupled_rounding = 9,
  exploration = 10,
  test = 99,
};

/// Address of one uniform variate.
struct StreamKey {
  std::uint64_t master_seed = 0;
  Stream stream = Stream::test;
  std::uint64_t sample_set = 0;
  std::uint64_t block = 0;
  std::uint64_t row = 0;
  std::uint64_t column = 0;
};

/// The uniform in (0, 1) addressed by key. Never returns 0 or 1.
double uniform(const StreamKey& key);

/// Fills out[j] with the variates at columns first_column + j of one row.
void fill_uniforms(const StreamKey& row_key, std::uint64_t first_column, std::span<double> out);

/// Random numbers for one block: an n_T x d_R matrix (one row per
/// trajectory) plus the d + 1 rounding variates. Rows are generated on
/// demand from the block key, so a block can be regenerated bit-identically
/// at any time without storing it.
class RandomBlock {
 public:
  RandomBlock(std::uint64_t seed, Stream stream, std::uint64_t sample_set, std::uint64_t block, int n_rows,
              int row_width, int dim, int row_offset = 0);

  int rows() const { return n_rows_; }
  int row_width() const { return row_width_; }
  int dim() const { return dim_; }

  /// Columns [first, first + out.size()) of row i (i counted within this block).
  void fill_row(int i, int first_column, std::span<double> out) const;
  Vec row(int i) const;

  /// The d + 1 rounding variates: d congruence offsets then the M-H variate.
  const Vec& rounding() const { return rounding_; }

  /// Rows [rows() - n, rows()) as their own block; the rounding variates are shared.
  RandomBlock suffix(int n) const;

  Mat materialize() const;

  /// FNV-1a hash over every variate's bit pattern, rounding row included.
  std::uint64_t fingerprint() const;

 private:
  StreamKey base_;
  int n_rows_;
  int row_width_;
  int dim_;
  int row_offset_;
  Vec rounding_;
};

/// Stream used for the rounding variates paired with a given HMC stream.
Stream rounding_stream_for(Stream stream);

RandomBlock block_uniforms(std::uint64_t seed, Stream stream, std::uint64_t sample_set, std::uint64_t block, int n_rows,
                           int row_width, int dim);

}  // namespace hmcperfect
