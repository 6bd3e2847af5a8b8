#include "lnprobe/alignment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "lnprobe/error.hpp"
#include "lnprobe/hungarian.hpp"
#include "lnprobe/parallel.hpp"

namespace lnprobe {

EdgeCover min_weight_edge_cover(const Eigen::MatrixXd& weights) {
  const Eigen::Index rows = weights.rows();
  const Eigen::Index cols = weights.cols();
  if (rows < 1 || cols < 1) {
    throw Error(ErrorCode::EmptyInput, "edge cover needs at least one vertex on each side");
  }
  if (!weights.allFinite()) {
    throw Error(ErrorCode::InvariantViolation, "edge weights must be finite");
  }

  LinkSet links;
  std::vector<char> row_covered(rows, 0), col_covered(cols, 0);
  auto take = [&](Eigen::Index i, Eigen::Index j) {
    links.insert(Link{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
    row_covered[i] = 1;
    col_covered[j] = 1;
  };

  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (weights(i, j) < 0.0) take(i, j);
    }
  }

  // Cheapest incident edge of every still-uncovered vertex; all of its edges
  // are non-negative, otherwise it would already be covered.
  std::vector<Eigen::Index> free_rows, free_cols;
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (!row_covered[i]) free_rows.push_back(i);
  }
  for (Eigen::Index j = 0; j < cols; ++j) {
    if (!col_covered[j]) free_cols.push_back(j);
  }
  std::vector<Eigen::Index> row_best(rows, 0), col_best(cols, 0);
  for (const auto i : free_rows) weights.row(i).minCoeff(&row_best[i]);
  for (const auto j : free_cols) weights.col(j).minCoeff(&col_best[j]);

  if (!free_rows.empty() && !free_cols.empty()) {
    const auto n = static_cast<Eigen::Index>(std::max(free_rows.size(), free_cols.size()));
    Eigen::MatrixXd reduced = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t r = 0; r < free_rows.size(); ++r) {
      const auto i = free_rows[r];
      for (std::size_t c = 0; c < free_cols.size(); ++c) {
        const auto j = free_cols[c];
        const double gain = weights(i, j) - weights(i, row_best[i]) - weights(col_best[j], j);
        reduced(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = std::min(gain, 0.0);
      }
    }
    const auto assignment = solve_assignment(reduced);
    for (std::size_t r = 0; r < free_rows.size(); ++r) {
      const auto c = static_cast<std::size_t>(assignment[r]);
      if (c >= free_cols.size()) continue;
      if (reduced(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) < 0.0) {
        take(free_rows[r], free_cols[c]);
      }
    }
  }

  for (const auto i : free_rows) {
    if (!row_covered[i]) take(i, row_best[i]);
  }
  for (const auto j : free_cols) {
    if (!col_covered[j]) take(col_best[j], j);
  }

  // Drop non-negative edges whose endpoints are both covered elsewhere; this
  // only happens through zero-weight ties and never raises the cost.
  std::vector<int> row_degree(rows, 0), col_degree(cols, 0);
  for (const auto& l : links) {
    ++row_degree[l.source];
    ++col_degree[l.target];
  }
  for (auto it = links.end(); it != links.begin();) {
    --it;
    if (weights(it->source, it->target) >= 0.0 && row_degree[it->source] > 1 &&
        col_degree[it->target] > 1) {
      --row_degree[it->source];
      --col_degree[it->target];
      it = links.erase(it);
    }
  }

  EdgeCover cover;
  cover.links = std::move(links);
  for (const auto& l : cover.links) cover.cost += weights(l.source, l.target);
  return cover;
}

Eigen::MatrixXd cosine_distance_matrix(const Eigen::MatrixXd& source_words,
                                       const Eigen::MatrixXd& target_words) {
  if (source_words.cols() != target_words.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "source and target word vectors differ in dimension");
  }
  auto unit = [](const Eigen::MatrixXd& m, const char* side) {
    Eigen::MatrixXd out = m;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double norm = out.row(i).norm();
      if (norm == 0.0) {
        throw Error(ErrorCode::ZeroVector,
                    std::string(side) + " word " + std::to_string(i) + " has a zero vector");
      }
      out.row(i) /= norm;
    }
    return out;
  };
  const Eigen::MatrixXd cosines = unit(source_words, "source") * unit(target_words, "target").transpose();
  return (1.0 - cosines.array().min(1.0).max(-1.0)).matrix();
}

EdgeCover align_words(const Eigen::MatrixXd& source_words, const Eigen::MatrixXd& target_words) {
  return min_weight_edge_cover(cosine_distance_matrix(source_words, target_words));
}

EdgeCover align_sentence_pair(const EmbeddingSet& source, const EmbeddingSet& target,
                              std::size_t sentence, std::size_t layer) {
  if (source.size() != target.size()) {
    throw Error(ErrorCode::LengthMismatch, "source has " + std::to_string(source.size()) +
                                               " sentences, target has " +
                                               std::to_string(target.size()));
  }
  try {
    return align_words(word_vectors(source, sentence, layer), word_vectors(target, sentence, layer));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ZeroVector) throw;
    throw Error(e.code(), "sentence " + std::to_string(sentence) + ": " + e.what());
  }
}

AlignmentCounts& AlignmentCounts::operator+=(const AlignmentCounts& other) {
  predicted += other.predicted;
  predicted_in_possible += other.predicted_in_possible;
  sure += other.sure;
  sure_found += other.sure_found;
  return *this;
}

AlignmentScores AlignmentCounts::scores() const {
  AlignmentScores s;
  s.precision = predicted ? static_cast<double>(predicted_in_possible) / static_cast<double>(predicted) : 0.0;
  s.recall = sure ? static_cast<double>(sure_found) / static_cast<double>(sure) : 0.0;
  s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

AlignmentCounts alignment_counts(const LinkSet& predicted, const GoldAlignment& gold) {
  AlignmentCounts c;
  c.predicted = predicted.size();
  c.sure = gold.sure.size();
  for (const auto& link : predicted) {
    if (gold.possible.count(link) || gold.sure.count(link)) ++c.predicted_in_possible;
    if (gold.sure.count(link)) ++c.sure_found;
  }
  return c;
}

AlignmentScores alignment_f1(const LinkSet& predicted, const GoldAlignment& gold) {
  return alignment_counts(predicted, gold).scores();
}

AlignmentScores corpus_alignment_f1(std::span<const LinkSet> predicted,
                                    std::span<const GoldAlignment> gold) {
  if (predicted.size() != gold.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(predicted.size()) +
                                               " predicted sentence pairs vs " +
                                               std::to_string(gold.size()) + " gold");
  }
  AlignmentCounts total;
  for (std::size_t k = 0; k < predicted.size(); ++k) total += alignment_counts(predicted[k], gold[k]);
  return total.scores();
}

namespace {

double align_corpus(std::span<const Eigen::MatrixXd> source, std::span<const Eigen::MatrixXd> target,
                    const LinearMap* map, std::vector<EdgeCover>& out, unsigned threads) {
  out.assign(source.size(), EdgeCover{});
  parallel_for(source.size(), threads, [&](std::size_t k) {
    try {
      out[k] = map ? align_words(apply_projection_rows(*map, source[k]), target[k])
                   : align_words(source[k], target[k]);
    } catch (const Error& e) {
      throw Error(e.code(), "sentence pair " + std::to_string(k) + ": " + e.what());
    }
  });
  double total = 0.0;
  for (const auto& cover : out) total += cover.cost;
  return total;
}

}  // namespace

EmAlignment em_align_project(std::span<const Eigen::MatrixXd> source_words,
                             std::span<const Eigen::MatrixXd> target_words, std::size_t iterations,
                             double ridge_lambda, unsigned threads) {
  if (source_words.size() != target_words.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(source_words.size()) +
                                               " source sentences vs " +
                                               std::to_string(target_words.size()) + " target");
  }
  if (source_words.empty()) throw Error(ErrorCode::EmptyInput, "no sentence pairs to align");

  const auto dim = source_words.front().cols();
  EmAlignment result;
  result.map = LinearMap::identity(static_cast<std::size_t>(dim));
  result.map.ridge_lambda = ridge_lambda;
  result.iteration_costs.push_back(
      align_corpus(source_words, target_words, nullptr, result.alignments, threads));

  for (std::size_t it = 0; it < iterations; ++it) {
    std::size_t pairs = 0;
    for (const auto& cover : result.alignments) pairs += cover.links.size();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(pairs), dim);
    Eigen::MatrixXd y(static_cast<Eigen::Index>(pairs), target_words.front().cols());
    Eigen::Index row = 0;
    for (std::size_t k = 0; k < result.alignments.size(); ++k) {
      for (const auto& link : result.alignments[k].links) {
        x.row(row) = source_words[k].row(link.source);
        y.row(row) = target_words[k].row(link.target);
        ++row;
      }
    }
    result.map = fit_projection(x, y, ridge_lambda);
    result.iteration_costs.push_back(
        align_corpus(source_words, target_words, &result.map, result.alignments, threads));
  }
  return result;
}

double link_change_fraction(std::span<const LinkSet> a, std::span<const LinkSet> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::LengthMismatch, "link set lists differ in length");
  }
  std::size_t shared = 0, either = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (const auto& l : a[k]) shared += b[k].count(l);
    either += a[k].size() + b[k].size();
  }
  either -= shared;
  return either ? 1.0 - static_cast<double>(shared) / static_cast<double>(either) : 0.0;
}

namespace {

std::uint32_t parse_index(std::string_view text, std::size_t line, const std::string& token) {
  std::uint32_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line) + ": bad link '" + token + "'");
  }
  return v;
}

}  // namespace

std::vector<GoldAlignment> read_alignment_file(std::istream& in) {
  std::vector<GoldAlignment> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    GoldAlignment gold;
    std::istringstream tokens(line);
    std::string token;
    while (tokens >> token) {
      const auto sep = token.find_first_of("-?");
      if (sep == std::string::npos) {
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(line_no) + ": bad link '" + token + "'");
      }
      const std::string_view view(token);
      const Link link{parse_index(view.substr(0, sep), line_no, token),
                      parse_index(view.substr(sep + 1), line_no, token)};
      if (token[sep] == '-') gold.sure.insert(link);
      gold.possible.insert(link);
    }
    out.push_back(std::move(gold));
  }
  return out;
}

void write_alignment_file(std::ostream& out, std::span<const LinkSet> links) {
  for (const auto& set : links) {
    bool first = true;
    for (const auto& l : set) {
      if (!first) out << ' ';
      out << l.source << '-' << l.target;
      first = false;
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write of alignment file failed");
}

}  // namespace lnprobe
