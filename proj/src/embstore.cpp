#include "lnprobe/embstore.hpp"

#include <array>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>

#include "binary_io.hpp"
#include "lnprobe/error.hpp"

namespace lnprobe {
namespace {

constexpr std::array<char, 4> kMagic = {'E', 'M', 'B', '1'};

std::string at_sentence(std::size_t s) { return "sentence " + std::to_string(s); }

void validate_word_groups(const std::vector<std::vector<std::uint32_t>>& groups,
                          std::size_t num_tokens, std::size_t sentence) {
  std::size_t next = 0;
  for (std::size_t w = 0; w < groups.size(); ++w) {
    const auto& group = groups[w];
    if (group.empty()) {
      throw Error(ErrorCode::InvariantViolation,
                  at_sentence(sentence) + ": word_groups[" + std::to_string(w) + "] is empty");
    }
    for (const auto token : group) {
      if (token != next) {
        throw Error(ErrorCode::InvariantViolation,
                    at_sentence(sentence) + ": word_groups[" + std::to_string(w) +
                        "] breaks the contiguous partition (expected token " +
                        std::to_string(next) + ", found " + std::to_string(token) + ")");
      }
      ++next;
    }
  }
  if (next != num_tokens) {
    throw Error(ErrorCode::InvariantViolation,
                at_sentence(sentence) + ": word_groups cover " + std::to_string(next) + " of " +
                    std::to_string(num_tokens) + " tokens");
  }
}

nlohmann::json manifest_with_lang(const EmbeddingSet& set) {
  nlohmann::json manifest = set.manifest.is_object() ? set.manifest : nlohmann::json::object();
  manifest["lang"] = set.lang;
  return manifest;
}

// Remaining byte count of a seekable stream, if it can be determined.
std::optional<std::uint64_t> remaining_bytes(std::istream& in) {
  const auto here = in.tellg();
  if (here == std::istream::pos_type(-1)) return std::nullopt;
  in.seekg(0, std::ios::end);
  const auto end = in.tellg();
  in.seekg(here);
  if (end == std::istream::pos_type(-1) || !in) {
    in.clear();
    return std::nullopt;
  }
  return static_cast<std::uint64_t>(end - here);
}

}  // namespace

std::string_view repr_source_name(ReprSource source) {
  return source == ReprSource::Cls ? "cls" : "mean";
}

ReprSource parse_repr_source(std::string_view name) {
  if (name == "cls") return ReprSource::Cls;
  if (name == "mean" || name == "mean-pool" || name == "mean_pool") return ReprSource::MeanPool;
  throw Error(ErrorCode::ParseError, "unknown representation source '" + std::string(name) +
                                         "' (expected cls or mean)");
}

bool SentenceEmbeddings::operator==(const SentenceEmbeddings& other) const {
  if (word_groups != other.word_groups) return false;
  if (token_vectors.size() != other.token_vectors.size()) return false;
  if (cls_vectors.size() != other.cls_vectors.size()) return false;
  for (std::size_t l = 0; l < token_vectors.size(); ++l) {
    const auto& a = token_vectors[l];
    const auto& b = other.token_vectors[l];
    if (a.rows() != b.rows() || a.cols() != b.cols() || a != b) return false;
  }
  for (std::size_t l = 0; l < cls_vectors.size(); ++l) {
    if (cls_vectors[l].size() != other.cls_vectors[l].size() ||
        cls_vectors[l] != other.cls_vectors[l]) {
      return false;
    }
  }
  return true;
}

bool EmbeddingSet::operator==(const EmbeddingSet& other) const {
  return lang == other.lang && num_layers == other.num_layers &&
         hidden_dim == other.hidden_dim && sentences == other.sentences &&
         manifest_with_lang(*this) == manifest_with_lang(other);
}

void EmbeddingSet::validate() const {
  if (num_layers < 1) throw Error(ErrorCode::InvariantViolation, "num_layers must be >= 1");
  if (hidden_dim < 1) throw Error(ErrorCode::InvariantViolation, "hidden_dim must be >= 1");
  if (!manifest.is_object()) {
    throw Error(ErrorCode::InvariantViolation, "manifest must be a JSON object");
  }
  if (auto it = manifest.find("lang"); it != manifest.end() && *it != lang) {
    throw Error(ErrorCode::InvariantViolation, "manifest.lang disagrees with lang");
  }
  const auto dim = static_cast<Eigen::Index>(hidden_dim);
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto& sent = sentences[s];
    if (sent.token_vectors.size() != num_layers || sent.cls_vectors.size() != num_layers) {
      throw Error(ErrorCode::InvariantViolation,
                  at_sentence(s) + ": expected " + std::to_string(num_layers) + " layers");
    }
    const auto tokens = sent.token_vectors.front().rows();
    for (std::size_t l = 0; l < num_layers; ++l) {
      if (sent.cls_vectors[l].size() != dim) {
        throw Error(ErrorCode::InvariantViolation,
                    at_sentence(s) + ": cls vector of layer " + std::to_string(l) +
                        " has wrong dimension");
      }
      if (sent.token_vectors[l].rows() != tokens || sent.token_vectors[l].cols() != dim) {
        throw Error(ErrorCode::InvariantViolation,
                    at_sentence(s) + ": token matrix of layer " + std::to_string(l) +
                        " has wrong shape");
      }
    }
    validate_word_groups(sent.word_groups, static_cast<std::size_t>(tokens), s);
  }
}

std::size_t encoded_size(const EmbeddingSet& set) {
  std::size_t bytes = 4 + 4 * 4;
  bytes += 4 + manifest_with_lang(set).dump().size();
  for (const auto& sent : set.sentences) {
    bytes += 8;
    for (const auto& group : sent.word_groups) bytes += 4 + 4 * group.size();
    bytes += set.num_layers * (set.hidden_dim + sent.num_tokens() * set.hidden_dim) * 4;
  }
  return bytes;
}

std::size_t write_embedding_set(const EmbeddingSet& set, std::ostream& out) {
  set.validate();
  const std::string manifest = manifest_with_lang(set).dump();

  out.write(kMagic.data(), kMagic.size());
  detail::put_u32(out, kEmbFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(set.num_layers));
  detail::put_u32(out, static_cast<std::uint32_t>(set.hidden_dim));
  detail::put_u32(out, static_cast<std::uint32_t>(set.sentences.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(manifest.size()));
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));

  for (const auto& sent : set.sentences) {
    detail::put_u32(out, static_cast<std::uint32_t>(sent.num_tokens()));
    detail::put_u32(out, static_cast<std::uint32_t>(sent.word_groups.size()));
    for (const auto& group : sent.word_groups) {
      detail::put_u32(out, static_cast<std::uint32_t>(group.size()));
      for (const auto token : group) detail::put_u32(out, token);
    }
    for (std::size_t l = 0; l < set.num_layers; ++l) {
      detail::put_f32_array(out, sent.cls_vectors[l].data(), set.hidden_dim);
      detail::put_f32_array(out, sent.token_vectors[l].data(),
                            static_cast<std::size_t>(sent.token_vectors[l].size()));
    }
  }
  if (!out) throw Error(ErrorCode::IoError, "write to EMB1 sink failed");
  return encoded_size(set);
}

EmbeddingSet read_embedding_set(std::istream& in) {
  const auto available = remaining_bytes(in);
  detail::ByteReader reader(in);

  // Reject declared payloads that cannot fit in what is left of the stream
  // before allocating for them.
  auto require = [&](std::uint64_t bytes, const char* what) {
    if (available && reader.offset() + bytes > *available) {
      throw Error(ErrorCode::TruncatedPayload,
                  std::string(what) + " at offset " + std::to_string(reader.offset()) +
                      " needs " + std::to_string(bytes) + " bytes, stream has " +
                      std::to_string(*available - reader.offset()));
    }
  };

  std::array<char, 4> magic{};
  reader.read(magic.data(), 4, "magic");
  if (magic != kMagic) {
    throw Error(ErrorCode::BadMagic, "offset 0: expected \"EMB1\", found \"" +
                                         std::string(magic.data(), 4) + "\"");
  }
  const auto version = reader.u32("version");
  if (version != kEmbFormatVersion) {
    throw Error(ErrorCode::UnsupportedVersion,
                "offset 4: version " + std::to_string(version) + " (supported: 1)");
  }

  EmbeddingSet set;
  set.num_layers = reader.u32("num_layers");
  set.hidden_dim = reader.u32("hidden_dim");
  const auto num_sentences = reader.u32("num_sentences");
  if (set.num_layers < 1) throw Error(ErrorCode::InvariantViolation, "offset 8: num_layers is 0");
  if (set.hidden_dim < 1) throw Error(ErrorCode::InvariantViolation, "offset 12: hidden_dim is 0");

  const auto manifest_len = reader.u32("manifest length");
  require(manifest_len, "manifest");
  std::string manifest_text(manifest_len, '\0');
  reader.read(manifest_text.data(), manifest_len, "manifest");
  try {
    set.manifest = nlohmann::json::parse(manifest_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvariantViolation, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!set.manifest.is_object()) {
    throw Error(ErrorCode::InvariantViolation, "manifest must be a JSON object");
  }
  if (auto it = set.manifest.find("lang"); it != set.manifest.end()) {
    if (!it->is_string()) throw Error(ErrorCode::InvariantViolation, "manifest.lang must be a string");
    set.lang = it->get<std::string>();
  }

  const auto dim = static_cast<Eigen::Index>(set.hidden_dim);
  set.sentences.reserve(std::min<std::size_t>(num_sentences, 1u << 16));
  for (std::uint32_t s = 0; s < num_sentences; ++s) {
    SentenceEmbeddings sent;
    const auto num_tokens = reader.u32("num_tokens");
    const auto num_words = reader.u32("num_words");
    require(static_cast<std::uint64_t>(num_words) * 4, "word groups");
    sent.word_groups.resize(num_words);
    for (auto& group : sent.word_groups) {
      const auto len = reader.u32("group_len");
      require(static_cast<std::uint64_t>(len) * 4, "word group");
      group.resize(len);
      for (auto& token : group) token = reader.u32("token index");
    }
    validate_word_groups(sent.word_groups, num_tokens, s);

    const std::uint64_t layer_bytes =
        (static_cast<std::uint64_t>(num_tokens) + 1) * set.hidden_dim * 4;
    require(layer_bytes * set.num_layers, "token payload");
    sent.cls_vectors.resize(set.num_layers);
    sent.token_vectors.resize(set.num_layers);
    for (std::size_t l = 0; l < set.num_layers; ++l) {
      sent.cls_vectors[l].resize(dim);
      reader.f32_array(sent.cls_vectors[l].data(), set.hidden_dim, "cls payload");
      sent.token_vectors[l].resize(num_tokens, dim);
      reader.f32_array(sent.token_vectors[l].data(),
                       static_cast<std::size_t>(num_tokens) * set.hidden_dim, "token payload");
    }
    set.sentences.push_back(std::move(sent));
  }
  return set;
}

void save_embedding_set(const EmbeddingSet& set, const std::filesystem::path& path) {
  set.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  write_embedding_set(set, out);
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

EmbeddingSet load_embedding_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return read_embedding_set(in);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " +
                              std::string(e.what()).substr(error_code_name(e.code()).size() + 2));
  }
}

namespace {

void check_indices(const EmbeddingSet& set, std::size_t sentence, std::size_t layer) {
  if (sentence >= set.sentences.size()) {
    throw Error(ErrorCode::IndexOutOfRange, "sentence " + std::to_string(sentence) + " of " +
                                                std::to_string(set.sentences.size()));
  }
  if (layer >= set.num_layers) {
    throw Error(ErrorCode::IndexOutOfRange,
                "layer " + std::to_string(layer) + " of " + std::to_string(set.num_layers));
  }
}

}  // namespace

SentenceRepr sentence_repr(const EmbeddingSet& set, std::size_t sentence, std::size_t layer,
                           ReprSource source) {
  check_indices(set, sentence, layer);
  const auto& sent = set.sentences[sentence];
  SentenceRepr repr;
  repr.source = source;
  repr.layer = layer;
  if (source == ReprSource::Cls) {
    repr.vector = sent.cls_vectors[layer].cast<double>();
    return repr;
  }
  const auto& tokens = sent.token_vectors[layer];
  if (tokens.rows() == 0) {
    throw Error(ErrorCode::EmptyInput, at_sentence(sentence) + " has no tokens to mean-pool");
  }
  repr.vector = tokens.cast<double>().colwise().sum().transpose() / static_cast<double>(tokens.rows());
  return repr;
}

std::vector<SentenceRepr> sentence_reprs(const EmbeddingSet& set, std::size_t layer,
                                         ReprSource source) {
  std::vector<SentenceRepr> out;
  out.reserve(set.sentences.size());
  for (std::size_t s = 0; s < set.sentences.size(); ++s) {
    out.push_back(sentence_repr(set, s, layer, source));
  }
  return out;
}

Eigen::MatrixXd word_vectors(const EmbeddingSet& set, std::size_t sentence, std::size_t layer) {
  check_indices(set, sentence, layer);
  const auto& sent = set.sentences[sentence];
  const auto& tokens = sent.token_vectors[layer];
  Eigen::MatrixXd words(static_cast<Eigen::Index>(sent.word_groups.size()), tokens.cols());
  for (std::size_t w = 0; w < sent.word_groups.size(); ++w) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(tokens.cols());
    for (const auto token : sent.word_groups[w]) {
      sum += tokens.row(token).cast<double>().transpose();
    }
    words.row(static_cast<Eigen::Index>(w)) =
        (sum / static_cast<double>(sent.word_groups[w].size())).transpose();
  }
  return words;
}

}  // namespace lnprobe
