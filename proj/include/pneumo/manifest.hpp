#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <openssl/evp.h>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace pneumo {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kManifestName = "manifest.json";

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read '" + p.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline std::string sha256_file(const std::filesystem::path& p) { return sha256_hex(read_bytes(p)); }

/// Provenance record of one stage run. Written as `manifest.json`, last,
/// into the stage's output directory.
struct RunManifest {
  std::string stage;
  std::vector<std::string> argv;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> params;
  struct Config {
    std::string role;    // e.g. "plant", "gains"
    std::string source;  // path as given
    std::string copy;    // path of the stored copy, relative to the output dir
    std::string sha256;
  };
  std::vector<Config> configs;
  struct Input {
    std::string path;
    std::string manifest_sha256;  // empty when the input has no manifest
  };
  std::vector<Input> inputs;
  std::vector<std::string> outputs;  // relative to the output dir
  std::map<std::string, std::string> outputs_sha256;
  nlohmann::json summary = nlohmann::json::object();
  double wall_seconds = 0.0;

  /// Copies `src` into `<out>/config/<role>_<filename>` and records its hash.
  void add_config(const std::filesystem::path& out, const std::string& role, const std::filesystem::path& src) {
    const auto rel = std::filesystem::path("config") / (role + "_" + src.filename().string());
    std::filesystem::create_directories(out / "config");
    std::filesystem::copy_file(src, out / rel, std::filesystem::copy_options::overwrite_existing);
    configs.push_back({role, src.string(), rel.generic_string(), sha256_file(out / rel)});
  }

  /// Records an input path and, when it is (or sits in) a stage output
  /// directory, the hash of that directory's manifest.
  void add_input(const std::filesystem::path& p) {
    Input in{p.string(), {}};
    const auto dir = std::filesystem::is_directory(p) ? p : p.parent_path();
    const auto m = (dir.empty() ? std::filesystem::path(".") : dir) / kManifestName;
    if (std::filesystem::exists(m)) in.manifest_sha256 = sha256_file(m);
    inputs.push_back(std::move(in));
  }

  void add_output(const std::filesystem::path& out, const std::filesystem::path& file) {
    const auto rel = std::filesystem::relative(file, out).generic_string();
    outputs.push_back(rel);
    outputs_sha256[rel] = sha256_file(file);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["stage"] = stage;
    j["tool_version"] = kToolVersion;
    j["argv"] = argv;
    j["seeds"] = seeds;
    j["params"] = params;
    j["configs"] = nlohmann::json::array();
    for (const auto& c : configs)
      j["configs"].push_back({{"role", c.role}, {"source", c.source}, {"copy", c.copy}, {"sha256", c.sha256}});
    j["inputs"] = nlohmann::json::array();
    for (const auto& i : inputs) j["inputs"].push_back({{"path", i.path}, {"manifest_sha256", i.manifest_sha256}});
    j["outputs"] = outputs;
    j["outputs_sha256"] = outputs_sha256;
    j["summary"] = summary;
    j["wall_seconds"] = wall_seconds;
    return j;
  }

  /// Writes the manifest; call after every other output is complete.
  void write(const std::filesystem::path& out) const {
    const auto tmp = out / (std::string(kManifestName) + ".tmp");
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw std::runtime_error("cannot write manifest in '" + out.string() + "'");
      f << to_json().dump(2) << '\n';
    }
    std::filesystem::rename(tmp, out / kManifestName);
  }
};

inline nlohmann::json read_manifest(const std::filesystem::path& dir) {
  return nlohmann::json::parse(read_bytes(dir / kManifestName));
}

/// Checks every stored config copy and listed output against its recorded hash.
inline std::vector<std::string> verify_manifest(const std::filesystem::path& dir) {
  std::vector<std::string> problems;
  const auto j = read_manifest(dir);
  for (const auto& c : j.at("configs")) {
    const auto p = dir / c.at("copy").get<std::string>();
    if (!std::filesystem::exists(p)) problems.push_back("missing config copy " + p.string());
    else if (sha256_file(p) != c.at("sha256").get<std::string>()) problems.push_back("config hash mismatch " + p.string());
  }
  for (const auto& [rel, h] : j.at("outputs_sha256").items()) {
    const auto p = dir / rel;
    if (!std::filesystem::exists(p)) problems.push_back("missing output " + p.string());
    else if (sha256_file(p) != h.get<std::string>()) problems.push_back("output hash mismatch " + p.string());
  }
  return problems;
}

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

}  // namespace pneumo
