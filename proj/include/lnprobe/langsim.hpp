#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lnprobe/geometry.hpp"

namespace lnprobe {

// One agglomeration step. Node ids 0..n-1 are the leaves (in `leaves`
// order); merge k creates node n + k.
struct Merge {
  std::size_t left = 0;
  std::size_t right = 0;
  double distance = 0.0;
  std::size_t size = 0;  // leaves under the new node
};

struct ClusterTree {
  std::vector<std::string> leaves;  // sorted language codes
  std::vector<Merge> merges;        // n - 1 merges in the order performed
};

// Average-linkage agglomerative clustering of language centroids under cosine
// distance. Leaves are ordered by language code; among equally distant
// cluster pairs, the pair whose (smallest member code, smallest member code)
// is lexicographically least merges first. Duplicate codes are rejected.
ClusterTree agglomerative_cluster(std::span<const Centroid> centroids);

using Partition = std::vector<std::vector<std::string>>;

// Flat clustering obtained by undoing the k - 1 last (largest) merges. Each
// cluster is sorted, and clusters are ordered by their first member.
Partition cut_tree(const ClusterTree& tree, std::size_t k);

nlohmann::json tree_to_json(const ClusterTree& tree);

using FamilyLabeling = std::map<std::string, std::string>;

struct VMeasure {
  double homogeneity = 0.0;
  double completeness = 0.0;
  double v = 0.0;
};

// V-measure of a clustering against reference classes (entropies in nats).
// Conventions: H(class) = 0 gives h = 1, H(cluster) = 0 gives c = 1, and
// h = c = 0 gives v = 0.
VMeasure v_measure(const Partition& clusters, const FamilyLabeling& families);

// Same score over parallel label vectors.
VMeasure v_measure_labels(std::span<const int> clusters, std::span<const int> classes);

std::size_t distinct_families(const FamilyLabeling& families);

// Two-column TSV "lang<TAB>family"; blank lines and '#' comments are skipped.
FamilyLabeling read_family_labeling(std::istream& in);

// CSV with header "lang,dim0,...,dimD-1", one row per centroid. Returns the
// number of data rows.
std::size_t export_centroids(std::span<const Centroid> centroids, std::ostream& out);
std::vector<Centroid> read_centroids_csv(std::istream& in);

}  // namespace lnprobe
