#include "lnprobe/retrieval.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#include "lnprobe/error.hpp"
#include "lnprobe/parallel.hpp"

namespace lnprobe {

unsigned default_thread_count() {
  if (const char* env = std::getenv("LNPROBE_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

std::string_view transform_name(Transform t) {
  switch (t) {
    case Transform::Plain: return "plain";
    case Transform::Centered: return "centered";
    case Transform::Projected: return "projected";
  }
  return "plain";
}

Transform parse_transform(std::string_view name) {
  if (name == "plain") return Transform::Plain;
  if (name == "centered") return Transform::Centered;
  if (name == "projected") return Transform::Projected;
  throw Error(ErrorCode::ParseError,
              "unknown transform '" + std::string(name) + "' (expected plain, centered or projected)");
}

namespace {

Eigen::MatrixXd unit_rows(std::span<const SentenceRepr> reprs, const char* side) {
  Eigen::MatrixXd rows = stack_rows(reprs);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double norm = rows.row(i).norm();
    if (norm == 0.0) {
      throw Error(ErrorCode::ZeroVector,
                  std::string(side) + " sentence " + std::to_string(i) + " has a zero vector");
    }
    rows.row(i) /= norm;
  }
  return rows;
}

}  // namespace

RetrievalResult retrieve(std::span<const SentenceRepr> source, std::span<const SentenceRepr> target,
                         unsigned threads) {
  if (source.size() != target.size()) {
    throw Error(ErrorCode::LengthMismatch, "source has " + std::to_string(source.size()) +
                                               " sentences, target has " +
                                               std::to_string(target.size()));
  }
  if (source.empty()) throw Error(ErrorCode::EmptyInput, "retrieval over an empty corpus");
  if (source.front().vector.size() != target.front().vector.size()) {
    throw Error(ErrorCode::DimensionMismatch, "source and target dimensions differ");
  }

  const Eigen::MatrixXd src = unit_rows(source, "source");
  const Eigen::MatrixXd tgt = unit_rows(target, "target");
  const std::size_t n = source.size();

  RetrievalResult result;
  result.layer = source.front().layer;
  result.repr_source = source.front().source;
  result.predictions.assign(n, 0);

  parallel_for(n, threads, [&](std::size_t i) {
    const Eigen::VectorXd cosines = tgt * src.row(static_cast<Eigen::Index>(i)).transpose();
    std::size_t best = 0;
    double best_distance = 1.0 - std::clamp(cosines(0), -1.0, 1.0);
    for (Eigen::Index j = 1; j < cosines.size(); ++j) {
      const double d = 1.0 - std::clamp(cosines(j), -1.0, 1.0);
      if (d < best_distance) {
        best_distance = d;
        best = static_cast<std::size_t>(j);
      }
    }
    result.predictions[i] = best;
  });

  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) correct += result.predictions[i] == i ? 1 : 0;
  result.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return result;
}

std::map<PairKey, RetrievalResult> retrieval_matrix(const LangReprs& corpus,
                                                    const RetrievalOptions& options) {
  if (corpus.size() < 2) {
    throw Error(ErrorCode::MissingInput, "retrieval needs at least two languages");
  }
  const auto& first = *corpus.begin();
  for (const auto& [lang, reprs] : corpus) {
    if (reprs.size() != first.second.size()) {
      throw Error(ErrorCode::LengthMismatch,
                  "corpus sizes differ: " + first.first + " has " +
                      std::to_string(first.second.size()) + " sentences, " + lang + " has " +
                      std::to_string(reprs.size()));
    }
  }

  LangReprs transformed;
  switch (options.transform) {
    case Transform::Plain:
      transformed = corpus;
      break;
    case Transform::Centered: {
      const LangReprs& reference = options.centroid_corpus ? *options.centroid_corpus : corpus;
      for (const auto& [lang, reprs] : corpus) {
        auto it = reference.find(lang);
        if (it == reference.end()) {
          throw Error(ErrorCode::MissingInput, "no centroid data for language " + lang);
        }
        transformed[lang] = center(reprs, compute_centroid(it->second, lang));
      }
      break;
    }
    case Transform::Projected: {
      if (!options.fit_corpus) {
        throw Error(ErrorCode::MissingInput, "projected retrieval requires a fitting corpus");
      }
      const auto& fit = *options.fit_corpus;
      auto pivot_it = fit.find(options.pivot);
      if (pivot_it == fit.end()) {
        throw Error(ErrorCode::MissingInput,
                    "fitting corpus lacks the pivot language " + options.pivot);
      }
      const Eigen::MatrixXd pivot_rows = stack_rows(pivot_it->second);
      for (const auto& [lang, reprs] : corpus) {
        if (lang == options.pivot) {
          transformed[lang] = reprs;
          continue;
        }
        auto it = fit.find(lang);
        if (it == fit.end()) {
          throw Error(ErrorCode::MissingInput, "fitting corpus lacks language " + lang);
        }
        if (it->second.size() != pivot_it->second.size()) {
          throw Error(ErrorCode::LengthMismatch,
                      "fitting corpus sizes differ: " + lang + " has " +
                          std::to_string(it->second.size()) + ", " + options.pivot + " has " +
                          std::to_string(pivot_it->second.size()));
        }
        LinearMap map = fit_projection(stack_rows(it->second), pivot_rows, options.ridge_lambda);
        map.source_lang = lang;
        map.target_lang = options.pivot;
        transformed[lang] = project(reprs, map);
      }
      break;
    }
  }

  std::map<PairKey, RetrievalResult> results;
  for (const auto& [src_lang, src] : transformed) {
    for (const auto& [tgt_lang, tgt] : transformed) {
      if (src_lang == tgt_lang) continue;
      RetrievalResult r;
      try {
        r = retrieve(src, tgt, options.threads);
      } catch (const Error& e) {
        throw Error(e.code(), src_lang + "->" + tgt_lang + ": " + e.what());
      }
      r.source_lang = src_lang;
      r.target_lang = tgt_lang;
      r.transform = options.transform;
      results.emplace(PairKey{src_lang, tgt_lang}, std::move(r));
    }
  }
  return results;
}

double mean_accuracy(const std::map<PairKey, RetrievalResult>& results) {
  if (results.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [key, r] : results) sum += r.accuracy;
  return sum / static_cast<double>(results.size());
}

}  // namespace lnprobe
