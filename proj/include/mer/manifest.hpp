#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace mer {

inline constexpr const char* kVersionTag = "mer 1.0.0";

// Written before training starts. Records the resolved configuration, a
// fingerprint of every input file (FNV-1a 64), the code version and the kernel
// variant in use: enough to reproduce the run bit-exactly on the same platform.
void write_run_manifest(const std::string& path, const nlohmann::json& resolved_config,
                        const std::vector<std::string>& input_files,
                        const nlohmann::json& output_layout);

}  // namespace mer
