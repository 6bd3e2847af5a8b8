#include "lnprobe/langsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "lnprobe/error.hpp"

namespace lnprobe {

ClusterTree agglomerative_cluster(std::span<const Centroid> centroids) {
  if (centroids.size() < 2) {
    throw Error(ErrorCode::EmptyInput, "clustering needs at least two centroids");
  }
  std::vector<const Centroid*> sorted;
  for (const auto& c : centroids) sorted.push_back(&c);
  std::sort(sorted.begin(), sorted.end(),
            [](const Centroid* a, const Centroid* b) { return a->lang < b->lang; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->lang == sorted[i - 1]->lang) {
      throw Error(ErrorCode::InvariantViolation, "duplicate language " + sorted[i]->lang);
    }
    if (sorted[i]->vector.size() != sorted[0]->vector.size()) {
      throw Error(ErrorCode::DimensionMismatch, "centroid of " + sorted[i]->lang +
                                                    " has dimension " +
                                                    std::to_string(sorted[i]->vector.size()));
    }
  }

  const std::size_t n = sorted.size();
  const std::size_t nodes = 2 * n - 1;
  ClusterTree tree;
  for (const auto* c : sorted) tree.leaves.push_back(c->lang);

  Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nodes),
                                               static_cast<Eigen::Index>(nodes));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double d;
      try {
        d = cosine_distance(sorted[i]->vector, sorted[j]->vector);
      } catch (const Error& e) {
        throw Error(e.code(), "centroids of " + sorted[i]->lang + " and " + sorted[j]->lang);
      }
      dist(i, j) = dist(j, i) = d;
    }
  }

  // Active nodes kept ordered by their smallest leaf index, which is also the
  // order of their smallest language code.
  std::vector<std::size_t> active(n), key(nodes), size(nodes, 1);
  for (std::size_t i = 0; i < n; ++i) active[i] = key[i] = i;

  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t best_a = 0, best_b = 1;
    double best = dist(active[0], active[1]);
    for (std::size_t a = 0; a < active.size(); ++a) {
      for (std::size_t b = a + 1; b < active.size(); ++b) {
        const double d = dist(active[a], active[b]);
        if (d < best) {
          best = d;
          best_a = a;
          best_b = b;
        }
      }
    }
    const std::size_t left = active[best_a], right = active[best_b];
    const std::size_t merged = n + step;
    size[merged] = size[left] + size[right];
    key[merged] = std::min(key[left], key[right]);
    tree.merges.push_back(Merge{left, right, best, size[merged]});

    active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_b));
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_a));
    const double wl = static_cast<double>(size[left]);
    const double wr = static_cast<double>(size[right]);
    for (const auto other : active) {
      const double d = (wl * dist(left, other) + wr * dist(right, other)) / (wl + wr);
      dist(merged, other) = dist(other, merged) = d;
    }
    active.insert(std::lower_bound(active.begin(), active.end(), merged,
                                   [&](std::size_t x, std::size_t y) { return key[x] < key[y]; }),
                  merged);
  }
  return tree;
}

Partition cut_tree(const ClusterTree& tree, std::size_t k) {
  const std::size_t n = tree.leaves.size();
  if (k < 1 || k > n) {
    throw Error(ErrorCode::IndexOutOfRange,
                "cut into " + std::to_string(k) + " clusters, tree has " + std::to_string(n) + " leaves");
  }
  std::vector<std::vector<std::string>> members(n + tree.merges.size());
  std::set<std::size_t> roots;
  for (std::size_t i = 0; i < n; ++i) {
    members[i] = {tree.leaves[i]};
    roots.insert(i);
  }
  for (std::size_t m = 0; m + k < n; ++m) {
    const auto& merge = tree.merges[m];
    auto& out = members[n + m];
    out = members[merge.left];
    out.insert(out.end(), members[merge.right].begin(), members[merge.right].end());
    roots.erase(merge.left);
    roots.erase(merge.right);
    roots.insert(n + m);
  }
  Partition partition;
  for (const auto r : roots) {
    auto cluster = members[r];
    std::sort(cluster.begin(), cluster.end());
    partition.push_back(std::move(cluster));
  }
  std::sort(partition.begin(), partition.end());
  return partition;
}

nlohmann::json tree_to_json(const ClusterTree& tree) {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& m : tree.merges) {
    merges.push_back({{"left", m.left}, {"right", m.right}, {"distance", m.distance}, {"size", m.size}});
  }
  return {{"leaves", tree.leaves}, {"merges", std::move(merges)}};
}

namespace {

double entropy(const std::map<int, std::size_t>& counts, double total) {
  double h = 0.0;
  for (const auto& [label, count] : counts) {
    const double p = static_cast<double>(count) / total;
    h -= p * std::log(p);
  }
  return h;
}

// H(A | B) from the joint counts of (a, b) and the marginal counts of b.
double conditional_entropy(const std::map<std::pair<int, int>, std::size_t>& joint,
                           const std::map<int, std::size_t>& given, double total, bool a_first) {
  double h = 0.0;
  for (const auto& [ab, count] : joint) {
    const int b = a_first ? ab.second : ab.first;
    h -= static_cast<double>(count) / total *
         std::log(static_cast<double>(count) / static_cast<double>(given.at(b)));
  }
  return h;
}

}  // namespace

VMeasure v_measure_labels(std::span<const int> clusters, std::span<const int> classes) {
  if (clusters.size() != classes.size()) {
    throw Error(ErrorCode::LengthMismatch, "cluster and class label vectors differ in length");
  }
  if (clusters.empty()) throw Error(ErrorCode::EmptyInput, "V-measure of an empty labeling");
  const double total = static_cast<double>(clusters.size());
  std::map<int, std::size_t> cluster_counts, class_counts;
  std::map<std::pair<int, int>, std::size_t> joint;  // (class, cluster)
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    ++cluster_counts[clusters[i]];
    ++class_counts[classes[i]];
    ++joint[{classes[i], clusters[i]}];
  }
  const double h_class = entropy(class_counts, total);
  const double h_cluster = entropy(cluster_counts, total);
  const double h_class_given_cluster = conditional_entropy(joint, cluster_counts, total, true);
  const double h_cluster_given_class = conditional_entropy(joint, class_counts, total, false);

  VMeasure v;
  v.homogeneity = h_class == 0.0 ? 1.0 : 1.0 - h_class_given_cluster / h_class;
  v.completeness = h_cluster == 0.0 ? 1.0 : 1.0 - h_cluster_given_class / h_cluster;
  v.homogeneity = std::clamp(v.homogeneity, 0.0, 1.0);
  v.completeness = std::clamp(v.completeness, 0.0, 1.0);
  const double denom = v.homogeneity + v.completeness;
  v.v = denom == 0.0 ? 0.0 : 2.0 * v.homogeneity * v.completeness / denom;
  return v;
}

VMeasure v_measure(const Partition& clusters, const FamilyLabeling& families) {
  std::map<std::string, int> cluster_of;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (const auto& lang : clusters[c]) {
      if (!cluster_of.emplace(lang, static_cast<int>(c)).second) {
        throw Error(ErrorCode::InvariantViolation, "language " + lang + " appears in two clusters");
      }
    }
  }
  if (cluster_of.size() != families.size()) {
    throw Error(ErrorCode::UnknownLabel, "clustering covers " + std::to_string(cluster_of.size()) +
                                             " languages, family labeling " +
                                             std::to_string(families.size()));
  }
  std::map<std::string, int> family_id;
  for (const auto& [lang, family] : families) family_id.emplace(family, static_cast<int>(family_id.size()));

  std::vector<int> cluster_labels, class_labels;
  for (const auto& [lang, cluster] : cluster_of) {
    auto it = families.find(lang);
    if (it == families.end()) {
      throw Error(ErrorCode::UnknownLabel, "language " + lang + " has no family label");
    }
    cluster_labels.push_back(cluster);
    class_labels.push_back(family_id.at(it->second));
  }
  return v_measure_labels(cluster_labels, class_labels);
}

std::size_t distinct_families(const FamilyLabeling& families) {
  std::set<std::string> names;
  for (const auto& [lang, family] : families) names.insert(family);
  return names.size();
}

FamilyLabeling read_family_labeling(std::istream& in) {
  FamilyLabeling labeling;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
      throw Error(ErrorCode::ParseError, "family file line " + std::to_string(line_no) +
                                             ": expected lang<TAB>family");
    }
    const auto lang = line.substr(0, tab);
    if (!labeling.emplace(lang, line.substr(tab + 1)).second) {
      throw Error(ErrorCode::ParseError, "family file line " + std::to_string(line_no) +
                                             ": duplicate language " + lang);
    }
  }
  return labeling;
}

std::size_t export_centroids(std::span<const Centroid> centroids, std::ostream& out) {
  const Eigen::Index dim = centroids.empty() ? 0 : centroids.front().vector.size();
  out << "lang";
  for (Eigen::Index d = 0; d < dim; ++d) out << ",dim" << d;
  out << '\n';
  char buf[32];
  for (const auto& c : centroids) {
    if (c.vector.size() != dim) {
      throw Error(ErrorCode::DimensionMismatch, "centroid of " + c.lang + " has dimension " +
                                                    std::to_string(c.vector.size()));
    }
    out << c.lang;
    for (Eigen::Index d = 0; d < dim; ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", c.vector(d));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write of centroid CSV failed");
  return centroids.size();
}

std::vector<Centroid> read_centroids_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("lang", 0) != 0) {
    throw Error(ErrorCode::ParseError, "centroid CSV must start with a 'lang,...' header");
  }
  const auto dim = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));
  std::vector<Centroid> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    Centroid c;
    std::getline(fields, c.lang, ',');
    c.vector.resize(dim);
    c.sample_count = 1;
    std::string cell;
    Eigen::Index d = 0;
    while (std::getline(fields, cell, ',')) {
      if (d >= dim) break;
      try {
        c.vector(d++) = std::stod(cell);
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "centroid CSV line " + std::to_string(line_no) +
                                               ": bad value '" + cell + "'");
      }
    }
    if (d != dim) {
      throw Error(ErrorCode::ParseError, "centroid CSV line " + std::to_string(line_no) +
                                             ": expected " + std::to_string(dim) + " values");
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace lnprobe
