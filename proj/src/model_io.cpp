#include "model_io.hpp"

#include <fstream>

#include "binary_io.hpp"
#include "lnprobe/error.hpp"

namespace lnprobe::detail {

std::filesystem::path with_suffix(const std::filesystem::path& basename, const char* suffix) {
  auto p = basename;
  p += suffix;
  return p;
}

void save_model_pair(const std::filesystem::path& basename, nlohmann::json manifest,
                     const std::vector<double>& values) {
  const auto json_path = with_suffix(basename, ".json");
  const auto blob_path = with_suffix(basename, ".bin");
  manifest["blob"] = blob_path.filename().string();
  manifest["blob_values"] = values.size();
  manifest["blob_encoding"] = "f64-le";

  std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
  if (!blob) throw Error(ErrorCode::IoError, "cannot open " + blob_path.string());
  for (const double v : values) put_f64(blob, v);
  blob.flush();
  if (!blob) throw Error(ErrorCode::IoError, "write failed: " + blob_path.string());

  std::ofstream meta(json_path, std::ios::trunc);
  if (!meta) throw Error(ErrorCode::IoError, "cannot open " + json_path.string());
  meta << manifest.dump(2) << '\n';
  if (!meta) throw Error(ErrorCode::IoError, "write failed: " + json_path.string());
}

ModelPair load_model_pair(const std::filesystem::path& basename, const std::string& expected_format) {
  const auto json_path = with_suffix(basename, ".json");
  std::ifstream meta(json_path);
  if (!meta) throw Error(ErrorCode::IoError, "cannot open " + json_path.string());
  ModelPair pair;
  try {
    pair.manifest = nlohmann::json::parse(meta);
    if (pair.manifest.at("format").get<std::string>() != expected_format) {
      throw Error(ErrorCode::ParseError, json_path.string() + ": format is not " + expected_format);
    }
    const auto blob_path = json_path.parent_path() / pair.manifest.at("blob").get<std::string>();
    const auto count = pair.manifest.at("blob_values").get<std::size_t>();
    std::ifstream blob(blob_path, std::ios::binary);
    if (!blob) throw Error(ErrorCode::IoError, "cannot open " + blob_path.string());
    ByteReader reader(blob);
    pair.values.resize(count);
    for (auto& v : pair.values) v = reader.f64("model blob");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, json_path.string() + ": " + e.what());
  }
  return pair;
}

}  // namespace lnprobe::detail
