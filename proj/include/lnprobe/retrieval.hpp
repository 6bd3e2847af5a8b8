#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lnprobe/embstore.hpp"
#include "lnprobe/geometry.hpp"

namespace lnprobe {

enum class Transform { Plain, Centered, Projected };

std::string_view transform_name(Transform t);  // "plain" / "centered" / "projected"
Transform parse_transform(std::string_view name);

struct RetrievalResult {
  std::string source_lang;
  std::string target_lang;
  std::size_t layer = 0;
  ReprSource repr_source = ReprSource::MeanPool;
  Transform transform = Transform::Plain;
  std::vector<std::size_t> predictions;  // one target index per source sentence
  double accuracy = 0.0;
};

// Nearest target (cosine distance) for every source sentence of an
// index-aligned parallel corpus. Ties go to the smallest target index; a zero
// vector raises ZeroVector naming the side and sentence.
RetrievalResult retrieve(std::span<const SentenceRepr> source, std::span<const SentenceRepr> target,
                         unsigned threads = 1);

using LangReprs = std::map<std::string, std::vector<SentenceRepr>>;

struct RetrievalOptions {
  Transform transform = Transform::Plain;
  std::string pivot = "en";
  // Parallel data for fitting the per-language maps into the pivot space;
  // required for Projected and must be disjoint from the evaluation corpus.
  const LangReprs* fit_corpus = nullptr;
  // Sentences used to estimate the centroids for Centered; defaults to the
  // evaluation corpus itself.
  const LangReprs* centroid_corpus = nullptr;
  double ridge_lambda = 0.0;
  unsigned threads = 1;
};

using PairKey = std::pair<std::string, std::string>;

// retrieve() for every ordered pair of distinct languages.
std::map<PairKey, RetrievalResult> retrieval_matrix(const LangReprs& corpus,
                                                    const RetrievalOptions& options);

double mean_accuracy(const std::map<PairKey, RetrievalResult>& results);

}  // namespace lnprobe
