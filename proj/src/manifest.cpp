#include "mer/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "mer/kernels.hpp"
#include "mer/util.hpp"

namespace mer {

namespace {

uint64_t hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("manifest: cannot read " + path);
  uint64_t h = 1469598103934665603ull;
  std::vector<char> buf(1 << 16);
  while (is) {
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h = fnv1a64(buf.data(), static_cast<size_t>(is.gcount()), h);
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void write_run_manifest(const std::string& path, const nlohmann::json& resolved_config,
                        const std::vector<std::string>& input_files,
                        const nlohmann::json& output_layout) {
  nlohmann::json j;
  j["version"] = kVersionTag;
  j["kernels"] = kernels::active_name();
  j["config"] = resolved_config;
  j["outputs"] = output_layout;

  nlohmann::json files = nlohmann::json::array();
  uint64_t combined = 1469598103934665603ull;
  for (const auto& f : input_files) {
    uint64_t h = hash_file(f);
    files.push_back({{"path", f}, {"fnv64", hex64(h)}});
    combined = fnv1a64(&h, sizeof h, combined);
  }
  j["dataset"] = {{"count", input_files.size()}, {"fingerprint", hex64(combined)}, {"files", files}};

  std::ofstream os(path);
  if (!os) throw std::runtime_error("manifest: cannot write " + path);
  os << j.dump(2) << "\n";
}

}  // namespace mer
