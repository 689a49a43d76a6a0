#include "bolero/embed.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "bolero/error.hpp"
#include "bolero/hashing.hpp"

namespace bolero {

namespace {

constexpr std::string_view kMagic = "BOLERO-EMB";

void put_le32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::byte>((v >> (8 * k)) & 0xFFu));
}

std::uint32_t get_le32(const std::byte* p) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(p[k]) << (8 * k);
  return v;
}

// Equal-frequency cut points over the observed train values of one column.
std::vector<double> quantile_edges(const std::vector<double>& column, const std::vector<std::size_t>& train_rows) {
  std::vector<double> values;
  for (std::size_t r : train_rows)
    if (!std::isnan(column[r])) values.push_back(column[r]);
  std::sort(values.begin(), values.end());
  std::vector<double> edges;
  if (values.empty()) return edges;
  for (std::size_t k = 1; k < kStubBins; ++k) edges.push_back(values[k * values.size() / kStubBins]);
  return edges;
}

void add_token(std::vector<double>& acc, std::uint64_t key) {
  const std::size_t d = acc.size();
  std::vector<double> v(d);
  double norm2 = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    v[k] = 2.0 * unit_double(splitmix64(key + k)) - 1.0;
    norm2 += v[k] * v[k];
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (std::size_t k = 0; k < d; ++k) acc[k] += v[k] * inv;
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t n, std::size_t d, std::vector<float> data)
    : n_(n), d_(d), data_(std::move(data)) {
  if (data_.size() != n_ * d_)
    throw Error(ErrorCode::ShapeMismatch, fmt::format("{} values for a {}x{} embedding matrix", data_.size(), n_, d_));
  for (std::size_t i = 0; i < data_.size(); ++i)
    if (!std::isfinite(data_[i]))
      throw Error(ErrorCode::NonFiniteValue, fmt::format("embedding row {} column {} is not finite", i / d_, i % d_));
}

std::uint64_t EmbeddingMatrix::checksum() const {
  return fnv1a(std::as_bytes(std::span(data_)), hash_combine(n_, d_));
}

std::vector<std::byte> encode_embeddings(const EmbeddingMatrix& matrix) {
  const std::string header = fmt::format("{} 1 {} {}\n", kMagic, matrix.rows(), matrix.dim());
  std::vector<std::byte> out;
  out.reserve(header.size() + matrix.data().size() * 4);
  for (char c : header) out.push_back(static_cast<std::byte>(c));
  for (float f : matrix.data()) put_le32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

EmbeddingMatrix decode_embeddings(std::span<const std::byte> bytes, std::size_t expected_n) {
  const auto newline = std::find(bytes.begin(), bytes.end(), std::byte{'\n'});
  if (newline == bytes.end()) throw Error(ErrorCode::FormatError, "embedding header line is missing");
  std::string header;
  for (auto it = bytes.begin(); it != newline; ++it) header.push_back(static_cast<char>(*it));

  std::istringstream in(header);
  std::string magic;
  int version = 0;
  long long n = -1, d = -1;
  std::string trailing;
  if (!(in >> magic >> version >> n >> d) || (in >> trailing) || magic != kMagic || version != 1 || n < 0 || d <= 0)
    throw Error(ErrorCode::FormatError, fmt::format("bad embedding header '{}'", header));

  const std::size_t offset = static_cast<std::size_t>(newline - bytes.begin()) + 1;
  const std::size_t count = static_cast<std::size_t>(n) * static_cast<std::size_t>(d);
  if (bytes.size() - offset != count * 4)
    throw Error(ErrorCode::FormatError,
                fmt::format("expected {} payload bytes, found {}", count * 4, bytes.size() - offset));
  if (static_cast<std::size_t>(n) != expected_n)
    throw Error(ErrorCode::RowCountMismatch, fmt::format("file has {} rows, dataset has {}", n, expected_n));

  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = std::bit_cast<float>(get_le32(bytes.data() + offset + 4 * i));
  return EmbeddingMatrix(static_cast<std::size_t>(n), static_cast<std::size_t>(d), std::move(data));
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& matrix) {
  const auto bytes = encode_embeddings(matrix);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, fmt::format("cannot write {}", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path, std::size_t expected_n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_embeddings(std::as_bytes(std::span(raw)), expected_n);
}

EmbeddingMatrix stub_embed(const TabularDataset& dataset, std::size_t d, std::uint64_t seed) {
  if (d < 8) throw Error(ErrorCode::InvalidArgument, fmt::format("stub embedding dimension must be >= 8, got {}", d));
  if (!dataset.preprocessed()) throw Error(ErrorCode::SchemaMismatch, "stub_embed needs a preprocessed dataset");
  if (dataset.columns().empty()) throw Error(ErrorCode::InvalidArgument, "dataset has no feature columns to embed");

  const std::size_t n = dataset.num_rows();
  const auto train_rows = dataset.rows_in(Split::Train);
  const std::uint64_t seed_key = splitmix64(seed ^ 0xB0'1E'60ULL);

  struct ColumnPlan {
    std::uint64_t key;
    std::vector<double> edges;
  };
  std::vector<ColumnPlan> plans;
  for (const auto& col : dataset.columns()) {
    ColumnPlan plan{hash_combine(seed_key, fnv1a(col.name)), {}};
    if (col.kind == ColumnKind::Continuous) plan.edges = quantile_edges(col.values, train_rows);
    plans.push_back(std::move(plan));
  }

  std::vector<float> data(n * d);
  std::vector<double> acc(d);
  for (std::size_t r = 0; r < n; ++r) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t c = 0; c < dataset.columns().size(); ++c) {
      const auto& col = dataset.columns()[c];
      std::uint64_t token = 0;
      if (col.kind == ColumnKind::Categorical) {
        token = hash_combine(plans[c].key, 0x100000000ULL + col.codes[r]);
      } else {
        const double v = col.values[r];
        const std::size_t bin =
            std::isnan(v) ? kStubBins
                          : static_cast<std::size_t>(std::upper_bound(plans[c].edges.begin(), plans[c].edges.end(), v) -
                                                     plans[c].edges.begin());
        token = hash_combine(plans[c].key, 0x200000000ULL + bin);
      }
      add_token(acc, token);
    }
    double norm2 = 0.0;
    for (double x : acc) norm2 += x * x;
    const double inv = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 0.0;
    for (std::size_t k = 0; k < d; ++k) data[r * d + k] = static_cast<float>(acc[k] * inv);
  }
  return EmbeddingMatrix(n, d, std::move(data));
}

}  // namespace bolero
