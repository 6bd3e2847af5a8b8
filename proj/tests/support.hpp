#pragma once

// Test-only generators and brute-force oracles. Nothing here calls into the
// code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

#include "lnprobe/embstore.hpp"

namespace lnprobe::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double sigma = 1.0) {
  std::normal_distribution<double> n(0.0, sigma);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  }
  return m;
}

inline Eigen::MatrixXd uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform(rng);
  }
  return m;
}

// Haar-ish random orthogonal matrix via QR of a Gaussian matrix.
inline Eigen::MatrixXd random_rotation(Rng& rng, Eigen::Index dim) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(rng, dim, dim));
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (r(i, i) < 0) q.col(i) *= -1.0;
  }
  return q;
}

inline std::vector<SentenceRepr> reprs_from_rows(const Eigen::MatrixXd& rows, std::size_t layer = 0,
                                                 ReprSource source = ReprSource::MeanPool) {
  std::vector<SentenceRepr> out;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out.push_back(SentenceRepr{rows.row(i).transpose(), source, layer});
  }
  return out;
}

// Random EmbeddingSet with the given word lengths (subwords per word) for
// each sentence.
inline EmbeddingSet random_set(Rng& rng, const std::string& lang, std::size_t layers, std::size_t dim,
                               const std::vector<std::vector<std::uint32_t>>& word_lengths) {
  EmbeddingSet set;
  set.lang = lang;
  set.num_layers = layers;
  set.hidden_dim = dim;
  set.manifest = {{"lang", lang}, {"model", "synthetic"}, {"tokenizer", "none"}};
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (const auto& lengths : word_lengths) {
    SentenceEmbeddings sent;
    std::uint32_t next = 0;
    for (const auto len : lengths) {
      std::vector<std::uint32_t> group;
      for (std::uint32_t k = 0; k < len; ++k) group.push_back(next++);
      sent.word_groups.push_back(std::move(group));
    }
    for (std::size_t l = 0; l < layers; ++l) {
      Eigen::VectorXf cls(static_cast<Eigen::Index>(dim));
      for (auto& v : cls) v = n(rng);
      FloatRows tokens(next, static_cast<Eigen::Index>(dim));
      for (Eigen::Index i = 0; i < tokens.size(); ++i) tokens.data()[i] = n(rng);
      sent.cls_vectors.push_back(std::move(cls));
      sent.token_vectors.push_back(std::move(tokens));
    }
    set.sentences.push_back(std::move(sent));
  }
  return set;
}

// Exhaustive minimum-weight edge cover: every subset of the S*T edges.
inline double brute_force_edge_cover_cost(const Eigen::MatrixXd& w) {
  const int s = static_cast<int>(w.rows());
  const int t = static_cast<int>(w.cols());
  const int edges = s * t;
  const std::uint32_t full_rows = (1u << s) - 1;
  const std::uint32_t full_cols = (1u << t) - 1;
  double best = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 1; mask < (1u << edges); ++mask) {
    std::uint32_t rows = 0, cols = 0;
    double cost = 0.0;
    for (int e = 0; e < edges; ++e) {
      if (mask & (1u << e)) {
        rows |= 1u << (e / t);
        cols |= 1u << (e % t);
        cost += w(e / t, e % t);
      }
    }
    if (rows == full_rows && cols == full_cols) best = std::min(best, cost);
  }
  return best;
}

// V-measure through joint entropy: H(A|B) = H(A,B) - H(B).
struct OracleV {
  double h, c, v;
};

inline OracleV direct_v_measure(const std::vector<int>& clusters, const std::vector<int>& classes) {
  const double n = static_cast<double>(clusters.size());
  auto entropy_of = [n](const auto& counts) {
    long double h = 0.0L;
    for (const auto& kv : counts) {
      const long double p = static_cast<long double>(kv.second) / n;
      h -= p * std::log(p);
    }
    return h;
  };
  std::map<int, int> kc, cc;
  std::map<std::pair<int, int>, int> joint;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    ++kc[clusters[i]];
    ++cc[classes[i]];
    ++joint[{clusters[i], classes[i]}];
  }
  const long double hk = entropy_of(kc), hc = entropy_of(cc), hj = entropy_of(joint);
  const long double h = hc == 0 ? 1.0L : 1.0L - (hj - hk) / hc;
  const long double c = hk == 0 ? 1.0L : 1.0L - (hj - hc) / hk;
  const long double v = (h + c) == 0 ? 0.0L : 2 * h * c / (h + c);
  return {static_cast<double>(h), static_cast<double>(c), static_cast<double>(v)};
}

// Pearson via raw sums in extended precision.
inline double direct_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const long double n = static_cast<long double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    syy += static_cast<long double>(y[i]) * y[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  return static_cast<double>((n * sxy - sx * sy) /
                             std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy)));
}

// Ridge solution [w; b] from the normal equations, by Gauss-Jordan
// elimination with partial pivoting in extended precision.
inline std::vector<double> normal_equations_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                                  double lambda) {
  const std::size_t d = static_cast<std::size_t>(x.cols()) + 1;
  std::vector<std::vector<long double>> a(d, std::vector<long double>(d + 1, 0.0L));
  auto feature = [&](Eigen::Index i, std::size_t j) -> long double {
    return j + 1 == d ? 1.0L : static_cast<long double>(x(i, static_cast<Eigen::Index>(j)));
  };
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) a[r][c] += feature(i, r) * feature(i, c);
      a[r][d] += feature(i, r) * y(i);
    }
  }
  for (std::size_t r = 0; r + 1 < d; ++r) a[r][r] += lambda;
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < d; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    for (std::size_t r = 0; r < d; ++r) {
      if (r == col) continue;
      const long double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= d; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<double> out(d);
  for (std::size_t r = 0; r < d; ++r) out[r] = static_cast<double>(a[r][d] / a[r][r]);
  return out;
}

// Average linkage recomputed from leaf-pair distances at every step.
struct OracleMerge {
  std::set<std::string> left, right;
  double distance;
};

inline std::vector<OracleMerge> naive_average_linkage(const std::vector<std::string>& langs,
                                                      const std::vector<Eigen::VectorXd>& vecs) {
  auto cosd = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return 1.0 - a.dot(b) / (a.norm() * b.norm());
  };
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < langs.size(); ++i) clusters.push_back({i});
  auto min_lang = [&](const std::vector<std::size_t>& c) {
    std::string m = langs[c[0]];
    for (auto i : c) m = std::min(m, langs[i]);
    return m;
  };
  std::vector<OracleMerge> merges;
  while (clusters.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::pair<std::string, std::string> best_key;
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        double sum = 0;
        for (auto i : clusters[a]) {
          for (auto j : clusters[b]) sum += cosd(vecs[i], vecs[j]);
        }
        const double d = sum / static_cast<double>(clusters[a].size() * clusters[b].size());
        std::pair<std::string, std::string> key{min_lang(clusters[a]), min_lang(clusters[b])};
        if (key.second < key.first) std::swap(key.first, key.second);
        if (d < best - 1e-12 || (std::fabs(d - best) <= 1e-12 && key < best_key)) {
          best = d;
          best_key = key;
          ba = a;
          bb = b;
        }
      }
    }
    OracleMerge m;
    for (auto i : clusters[ba]) m.left.insert(langs[i]);
    for (auto i : clusters[bb]) m.right.insert(langs[i]);
    m.distance = best;
    merges.push_back(m);
    clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
  }
  return merges;
}

}  // namespace lnprobe::testing
