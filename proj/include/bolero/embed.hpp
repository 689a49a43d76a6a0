#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bolero/dataset.hpp"

namespace bolero {

// Frozen per-row embeddings, n x d row-major float32. Immutable once built.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  // Throws NonFiniteValue on NaN/Inf and ShapeMismatch if data.size() != n*d.
  EmbeddingMatrix(std::size_t n, std::size_t d, std::vector<float> data);

  std::size_t rows() const { return n_; }
  std::size_t dim() const { return d_; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * d_, d_}; }
  std::span<const float> data() const { return data_; }

  std::uint64_t checksum() const;

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<float> data_;
};

// Format: ASCII line "BOLERO-EMB 1 <n> <d>\n" followed by n*d little-endian
// IEEE-754 float32 values, row-major.
std::vector<std::byte> encode_embeddings(const EmbeddingMatrix& matrix);
EmbeddingMatrix decode_embeddings(std::span<const std::byte> bytes, std::size_t expected_n);
void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& matrix);
EmbeddingMatrix load_embeddings(const std::filesystem::path& path, std::size_t expected_n);

inline constexpr std::size_t kStubBins = 8;

// Hashed-token stand-in for a pretrained row encoder.
//
// Each categorical (column, code) and each continuous (column, bin) pair is
// a token; bins are 8 equal-frequency bins fitted on Train rows. A token
// maps to a unit vector whose components come from SplitMix64 applied to
// hash(column name, token, seed) + component index. Row embedding = sum of
// its token vectors, L2-normalised. Requires a preprocessed dataset, d >= 8.
EmbeddingMatrix stub_embed(const TabularDataset& dataset, std::size_t d, std::uint64_t seed);

}  // namespace bolero
