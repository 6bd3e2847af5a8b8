#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <set>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "lnprobe/embstore.hpp"
#include "lnprobe/geometry.hpp"

namespace lnprobe {

struct Link {
  std::uint32_t source = 0;
  std::uint32_t target = 0;
  auto operator<=>(const Link&) const = default;
};

using LinkSet = std::set<Link>;

// Gold standard for one sentence pair; every sure link is also possible.
struct GoldAlignment {
  LinkSet sure;
  LinkSet possible;
};

struct EdgeCover {
  LinkSet links;
  double cost = 0.0;
};

// Minimum-weight edge cover of the complete bipartite graph whose edge (i, j)
// weighs weights(i, j): every row and every column is incident to at least one
// chosen edge, and the total weight is minimal.
//
// Negative edges are always taken. The remaining vertices are covered by the
// classical matching reduction: with a(v) the cheapest incident non-negative
// edge of v, the cover costs sum a(v) plus the minimum-weight matching under
// reduced weights w(i,j) - a(i) - a(j); vertices left unmatched take their
// cheapest edge (lowest index on ties).
EdgeCover min_weight_edge_cover(const Eigen::MatrixXd& weights);

// Pairwise cosine distances between the rows of two word-vector matrices.
// Throws ZeroVector naming the side and word index.
Eigen::MatrixXd cosine_distance_matrix(const Eigen::MatrixXd& source_words,
                                       const Eigen::MatrixXd& target_words);

// Aligns sentence `sentence` of two parallel embedding sets at `layer` using
// subword-averaged word vectors.
EdgeCover align_sentence_pair(const EmbeddingSet& source, const EmbeddingSet& target,
                              std::size_t sentence, std::size_t layer);

EdgeCover align_words(const Eigen::MatrixXd& source_words, const Eigen::MatrixXd& target_words);

struct AlignmentScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Link counts behind precision (against possible) and recall (against sure).
// Summing counts over sentence pairs gives the micro-averaged corpus score.
struct AlignmentCounts {
  std::size_t predicted = 0;
  std::size_t predicted_in_possible = 0;
  std::size_t sure = 0;
  std::size_t sure_found = 0;

  AlignmentCounts& operator+=(const AlignmentCounts& other);
  AlignmentScores scores() const;
};

AlignmentCounts alignment_counts(const LinkSet& predicted, const GoldAlignment& gold);
AlignmentScores alignment_f1(const LinkSet& predicted, const GoldAlignment& gold);
AlignmentScores corpus_alignment_f1(std::span<const LinkSet> predicted,
                                    std::span<const GoldAlignment> gold);

struct EmAlignment {
  LinearMap map;                        // identity when iterations == 0
  std::vector<EdgeCover> alignments;    // final alignment per sentence pair
  std::vector<double> iteration_costs;  // total cover cost, index 0 = plain alignment
};

// Alternates alignment and projection: iteration 0 aligns the raw word vectors;
// each further iteration fits an affine map on the currently linked word pairs
// and re-aligns with projected source vectors.
EmAlignment em_align_project(std::span<const Eigen::MatrixXd> source_words,
                             std::span<const Eigen::MatrixXd> target_words, std::size_t iterations,
                             double ridge_lambda = 0.0, unsigned threads = 1);

// 1 - |a & b| / |a | b| over all sentence pairs; 0 when both are empty.
double link_change_fraction(std::span<const LinkSet> a, std::span<const LinkSet> b);

// Alignment file: one line per sentence pair, whitespace-separated links,
// "i-j" sure, "i?j" possible, 0-based (source, target) word indices.
std::vector<GoldAlignment> read_alignment_file(std::istream& in);
void write_alignment_file(std::ostream& out, std::span<const LinkSet> links);

}  // namespace lnprobe
