#pragma once

// Model persistence: <name>.bin holds every parameter as little-endian
// float64 in layer order (weight then bias); <name>.json carries the network
// description and tensor shapes needed to read it back.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "advtune/config.hpp"
#include "advtune/errors.hpp"
#include "advtune/network.hpp"

namespace advtune {

inline constexpr const char* kModelFormat = "advtune-model";
inline constexpr int kModelFormatVersion = 1;

inline std::filesystem::path model_header_path(const std::filesystem::path& bin) {
  auto p = bin;
  p.replace_extension(".json");
  return p;
}

inline std::string encode_f64_le(std::span<const double> values) {
  std::string out(values.size() * 8, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) out[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  return out;
}

inline std::vector<double> decode_f64_le(const std::string& bytes) {
  if (bytes.size() % 8 != 0) throw FormatError("model buffer length is not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

inline json model_header(const NetworkSpec& spec, const Params& params) {
  json tensors = json::array();
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    if (l.weight.size() == 0) continue;
    tensors.push_back({{"layer", i}, {"name", "weight"}, {"shape", l.weight.shape()}});
    tensors.push_back({{"layer", i}, {"name", "bias"}, {"shape", l.bias.shape()}});
  }
  return {{"format", kModelFormat},
          {"version", kModelFormatVersion},
          {"dtype", "float64"},
          {"byte_order", "little"},
          {"parameter_count", params.parameter_count()},
          {"network", network_to_json(spec)},
          {"tensors", tensors}};
}

// Writes <bin> and its JSON header next to it.
inline void save_model(const std::filesystem::path& bin, const NetworkSpec& spec,
                       const Params& params) {
  const auto flat = params.flatten();
  {
    std::ofstream f(bin, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + bin.string());
    const std::string bytes = encode_f64_le(flat);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f.flush()) throw IoError("write failed for " + bin.string());
  }
  std::ofstream h(model_header_path(bin), std::ios::trunc);
  if (!h) throw IoError("cannot write " + model_header_path(bin).string());
  h << model_header(spec, params).dump(2) << "\n";
  if (!h.flush()) throw IoError("write failed for " + model_header_path(bin).string());
}

struct LoadedModel {
  NetworkSpec spec;
  Params params;
};

inline LoadedModel load_model(const std::filesystem::path& bin) {
  const auto header_path = model_header_path(bin);
  std::ifstream h(header_path);
  if (!h) throw IoError("cannot open model header " + header_path.string());
  json header;
  try {
    header = json::parse(h);
  } catch (const json::parse_error& e) {
    throw FormatError("model header " + header_path.string() + ": " + e.what());
  }
  if (header.value("format", "") != kModelFormat ||
      header.value("version", 0) != kModelFormatVersion)
    throw FormatError("unsupported model header " + header_path.string());

  LoadedModel m;
  try {
    m.spec = network_from_json(header.at("network"));
  } catch (const SpecError& e) {
    throw FormatError(std::string("model header network: ") + e.what());
  }
  m.params = zero_params(m.spec);
  std::ifstream f(bin, std::ios::binary);
  if (!f) throw IoError("cannot open model " + bin.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto flat = decode_f64_le(bytes);
  if (flat.size() != m.params.parameter_count())
    throw FormatError("model " + bin.string() + " holds " + std::to_string(flat.size()) +
                      " values, network needs " + std::to_string(m.params.parameter_count()));
  m.params.assign_flat(flat);
  return m;
}

}  // namespace advtune
