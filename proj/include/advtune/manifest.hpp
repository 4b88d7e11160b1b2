#pragma once

// Run manifests: the effective config, seeds, tool version, and a SHA-256 of
// every artifact, enough to replay a run with `--config manifest.json`.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "advtune/errors.hpp"

#ifndef ADVTUNE_VERSION
#define ADVTUNE_VERSION "0.0.0"
#endif

namespace advtune {

inline constexpr int kManifestVersion = 1;

inline std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  std::string hex;
  hex.reserve(len * 2);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline std::string sha256_file(const std::filesystem::path& path) {
  return sha256_hex(read_file_bytes(path));
}

class Manifest {
 public:
  Manifest(std::string command, nlohmann::json effective_config)
      : doc_{{"manifest_version", kManifestVersion},
             {"tool", "advtune"},
             {"version", ADVTUNE_VERSION},
             {"command", std::move(command)},
             {"config", std::move(effective_config)},
             {"seeds", nlohmann::json::object()},
             {"artifacts", nlohmann::json::object()},
             {"timings", nlohmann::json::object()}} {}

  void seed(const std::string& name, std::uint64_t value) { doc_["seeds"][name] = value; }
  void timing(const std::string& name, nlohmann::json value) {
    doc_["timings"][name] = std::move(value);
  }
  void note(const std::string& key, nlohmann::json value) { doc_[key] = std::move(value); }

  // Records an artifact by its path relative to the output directory.
  void artifact(const std::filesystem::path& dir, const std::string& name) {
    doc_["artifacts"][name] = {{"sha256", sha256_file(dir / name)}};
  }

  const nlohmann::json& json() const { return doc_; }

  void write(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << doc_.dump(2) << "\n";
    if (!f.flush()) throw IoError("write failed for " + path.string());
  }

 private:
  nlohmann::json doc_;
};

}  // namespace advtune
