#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace lnprobe {

using FloatRows = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::uint32_t kEmbFormatVersion = 1;

enum class ReprSource { Cls, MeanPool };

std::string_view repr_source_name(ReprSource source);  // "cls" / "mean"
ReprSource parse_repr_source(std::string_view name);

// Contextual states of one sentence. Token states exclude special tokens;
// word_groups maps each surface word to its contiguous run of subword tokens.
struct SentenceEmbeddings {
  std::vector<FloatRows> token_vectors;       // per layer, [num_tokens x hidden_dim]
  std::vector<Eigen::VectorXf> cls_vectors;   // per layer, [hidden_dim]
  std::vector<std::vector<std::uint32_t>> word_groups;

  std::size_t num_tokens() const {
    return token_vectors.empty() ? 0 : static_cast<std::size_t>(token_vectors.front().rows());
  }
  std::size_t num_words() const { return word_groups.size(); }

  bool operator==(const SentenceEmbeddings& other) const;
};

// All layers of one corpus in one language. Layer 0 is the embedding-layer
// output; indices increase toward the encoder output.
struct EmbeddingSet {
  std::string lang;
  std::size_t num_layers = 0;
  std::size_t hidden_dim = 0;
  std::vector<SentenceEmbeddings> sentences;
  nlohmann::json manifest = nlohmann::json::object();

  std::size_t size() const { return sentences.size(); }

  // Throws Error(InvariantViolation) naming the first broken field.
  void validate() const;

  bool operator==(const EmbeddingSet& other) const;
};

// One fixed-width vector per sentence for a given (layer, source).
struct SentenceRepr {
  Eigen::VectorXd vector;
  ReprSource source = ReprSource::MeanPool;
  std::size_t layer = 0;
};

std::size_t write_embedding_set(const EmbeddingSet& set, std::ostream& out);
EmbeddingSet read_embedding_set(std::istream& in);

void save_embedding_set(const EmbeddingSet& set, const std::filesystem::path& path);
EmbeddingSet load_embedding_set(const std::filesystem::path& path);

// Exact byte count write_embedding_set produces for a valid set.
std::size_t encoded_size(const EmbeddingSet& set);

SentenceRepr sentence_repr(const EmbeddingSet& set, std::size_t sentence, std::size_t layer,
                           ReprSource source);

// Representations of every sentence in the set.
std::vector<SentenceRepr> sentence_reprs(const EmbeddingSet& set, std::size_t layer,
                                         ReprSource source);

// Row w is the mean of the subword token states of word w.
Eigen::MatrixXd word_vectors(const EmbeddingSet& set, std::size_t sentence, std::size_t layer);

}  // namespace lnprobe
