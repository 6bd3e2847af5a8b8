#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace lnprobe::detail {

// Two-file model serialization: <basename>.json holds the manifest,
// <basename>.bin the raw little-endian f64 values.
void save_model_pair(const std::filesystem::path& basename, nlohmann::json manifest,
                     const std::vector<double>& values);

struct ModelPair {
  nlohmann::json manifest;
  std::vector<double> values;
};

ModelPair load_model_pair(const std::filesystem::path& basename, const std::string& expected_format);

std::filesystem::path with_suffix(const std::filesystem::path& basename, const char* suffix);

}  // namespace lnprobe::detail
