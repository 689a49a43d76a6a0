#include <bit>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "bolero/error.hpp"
#include "bolero/gnn_head.hpp"

namespace bolero {

namespace {

constexpr std::string_view kMagic = "BOLERO-CKPT";

}  // namespace

std::vector<std::byte> encode_checkpoint(const GraphHeadParams<float>& params, const GraphHeadConfig& config,
                                         std::string_view config_hash) {
  const auto tensors = params.named_tensors();
  std::string header = fmt::format("{} 1\n", kMagic);
  header += fmt::format("config_hash {}\n", config_hash.empty() ? "-" : config_hash);
  header += fmt::format("hidden_dim {} num_layers {} num_heads {} dropout {:.17g} task {} num_classes {} precision {}\n",
                        config.hidden_dim, config.num_layers, config.num_heads, config.dropout, to_string(config.task),
                        config.num_classes, to_string(config.precision));
  header += fmt::format("tensors {}\n", tensors.size());
  for (const auto& [name, m] : tensors) header += fmt::format("{} {} {}\n", name, m->rows, m->cols);
  header += "end\n";

  std::vector<std::byte> out;
  for (char c : header) out.push_back(static_cast<std::byte>(c));
  for (const auto& [name, m] : tensors)
    for (float f : m->data) {
      const auto bits = std::bit_cast<std::uint32_t>(f);
      for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::byte>((bits >> (8 * k)) & 0xFFu));
    }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes) {
  // Header is line-oriented ASCII terminated by "end\n".
  std::string text;
  std::size_t pos = 0;
  const std::string terminator = "\nend\n";
  while (pos < bytes.size()) {
    text.push_back(static_cast<char>(bytes[pos++]));
    if (text.size() >= terminator.size() && text.ends_with(terminator)) break;
  }
  if (!text.ends_with(terminator)) throw Error(ErrorCode::FormatError, "checkpoint header is not terminated");

  std::istringstream in(text);
  std::string magic, key, task, precision;
  int version = 0;
  Checkpoint ck;
  auto expect = [&](std::string_view want) {
    if (!(in >> key) || key != want)
      throw Error(ErrorCode::FormatError, fmt::format("checkpoint header: expected '{}', got '{}'", want, key));
  };
  if (!(in >> magic >> version) || magic != kMagic || version != 1)
    throw Error(ErrorCode::FormatError, "not a version-1 checkpoint");
  expect("config_hash");
  in >> ck.config_hash;
  if (ck.config_hash == "-") ck.config_hash.clear();
  auto& c = ck.config;
  expect("hidden_dim");
  in >> c.hidden_dim;
  expect("num_layers");
  in >> c.num_layers;
  expect("num_heads");
  in >> c.num_heads;
  expect("dropout");
  in >> c.dropout;
  expect("task");
  in >> task;
  c.task = parse_task(task);
  expect("num_classes");
  in >> c.num_classes;
  expect("precision");
  in >> precision;
  c.precision = parse_precision(precision);
  expect("tensors");
  std::size_t count = 0;
  in >> count;
  if (!in) throw Error(ErrorCode::FormatError, "checkpoint header is truncated");

  // Shape the parameter set from the config, then check names and shapes.
  ck.params.layers.resize(c.num_layers);
  auto tensors = ck.params.named_tensors();
  if (tensors.size() != count)
    throw Error(ErrorCode::FormatError, fmt::format("{} tensors listed, config implies {}", count, tensors.size()));
  for (auto& [name, m] : tensors) {
    std::string listed;
    std::size_t rows = 0, cols = 0;
    if (!(in >> listed >> rows >> cols) || listed != name)
      throw Error(ErrorCode::FormatError, fmt::format("checkpoint tensor '{}' where '{}' was expected", listed, name));
    *m = Matrix<float>(rows, cols);
  }
  expect("end");

  std::size_t expected = 0;
  for (const auto& [name, m] : tensors) expected += m->size() * 4;
  if (bytes.size() - pos != expected)
    throw Error(ErrorCode::FormatError,
                fmt::format("checkpoint payload is {} bytes, expected {}", bytes.size() - pos, expected));
  for (auto& [name, m] : tensors)
    for (float& f : m->data) {
      std::uint32_t bits = 0;
      for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(bytes[pos + k]) << (8 * k);
      pos += 4;
      f = std::bit_cast<float>(bits);
    }
  return ck;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const GraphHeadParams<T>& params,
                     const GraphHeadConfig& config, std::string_view config_hash) {
  const auto bytes = encode_checkpoint(convert_params<float>(params), config, config_hash);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, fmt::format("cannot write {}", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

template void save_checkpoint<float>(const std::filesystem::path&, const GraphHeadParams<float>&,
                                     const GraphHeadConfig&, std::string_view);
template void save_checkpoint<double>(const std::filesystem::path&, const GraphHeadParams<double>&,
                                      const GraphHeadConfig&, std::string_view);

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::as_bytes(std::span(raw)));
}

}  // namespace bolero
