#pragma once

// Synthetic parallel corpora written to disk for CLI-level tests.

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lnprobe/alignment.hpp"
#include "lnprobe/embstore.hpp"

namespace lnprobe::testing {

struct CorpusShape {
  std::size_t sentences = 40;
  std::size_t layers = 3;
  std::size_t dim = 16;
  double shift = 2.0;
  double noise = 0.1;
  std::uint64_t seed = 1;
};

struct ParallelCorpus {
  std::vector<EmbeddingSet> sets;
  std::vector<GoldAlignment> gold;  // between sets[0] and sets[1]
};

// Every sentence is a bag of latent word vectors shared by all languages.
// Language l sees word k through its own linear distortion and constant
// shift; odd languages reverse the word order, and words randomly split into
// one or two subwords.
inline ParallelCorpus make_parallel_corpus(const std::vector<std::string>& langs, const CorpusShape& shape) {
  std::mt19937_64 rng(shape.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(shape.dim);
  auto gauss = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };

  std::vector<Eigen::MatrixXd> distort;
  std::vector<Eigen::VectorXd> shift;
  for (std::size_t l = 0; l < langs.size(); ++l) {
    distort.push_back(Eigen::MatrixXd::Identity(d, d) + 0.3 / std::sqrt(static_cast<double>(d)) * gauss(d, d));
    shift.push_back(shape.shift * gauss(d, 1));
  }

  ParallelCorpus out;
  for (std::size_t l = 0; l < langs.size(); ++l) {
    EmbeddingSet set;
    set.lang = langs[l];
    set.num_layers = shape.layers;
    set.hidden_dim = shape.dim;
    set.manifest = {{"lang", langs[l]}, {"model", "synthetic"}, {"tokenizer", "synthetic"}};
    out.sets.push_back(std::move(set));
  }

  for (std::size_t s = 0; s < shape.sentences; ++s) {
    const auto words = static_cast<Eigen::Index>(2 + rng() % 5);
    const Eigen::MatrixXd latent = gauss(words, d);
    for (std::size_t l = 0; l < langs.size(); ++l) {
      const bool reversed = l % 2 == 1;
      SentenceEmbeddings sent;
      std::vector<Eigen::Index> order;
      std::vector<std::uint32_t> lengths;
      std::uint32_t tokens = 0;
      for (Eigen::Index w = 0; w < words; ++w) {
        order.push_back(reversed ? words - 1 - w : w);
        lengths.push_back(1 + static_cast<std::uint32_t>(rng() % 2));
        std::vector<std::uint32_t> group;
        for (std::uint32_t k = 0; k < lengths.back(); ++k) group.push_back(tokens++);
        sent.word_groups.push_back(std::move(group));
      }
      for (std::size_t layer = 0; layer < shape.layers; ++layer) {
        const double scale = 1.0 + 0.2 * static_cast<double>(layer);
        FloatRows states(tokens, d);
        Eigen::Index row = 0;
        for (std::size_t w = 0; w < order.size(); ++w) {
          const Eigen::VectorXd base = scale * (distort[l] * latent.row(order[w]).transpose()) + shift[l];
          for (std::uint32_t k = 0; k < lengths[w]; ++k) {
            states.row(row++) = (base + shape.noise * gauss(d, 1)).transpose().cast<float>();
          }
        }
        const Eigen::VectorXd cls =
            scale * (distort[l] * latent.colwise().mean().transpose()) + shift[l] + shape.noise * gauss(d, 1);
        sent.cls_vectors.push_back(cls.cast<float>());
        sent.token_vectors.push_back(std::move(states));
      }
      out.sets[l].sentences.push_back(std::move(sent));
    }
    if (langs.size() >= 2) {
      GoldAlignment g;
      for (Eigen::Index w = 0; w < words; ++w) {
        const Link link{static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(words - 1 - w)};
        g.sure.insert(link);
        g.possible.insert(link);
      }
      out.gold.push_back(std::move(g));
    }
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline void write_gold(const std::filesystem::path& path, const std::vector<GoldAlignment>& gold) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& g : gold) {
    bool first = true;
    for (const auto& l : g.sure) {
      out << (first ? "" : " ") << l.source << '-' << l.target;
      first = false;
    }
    out << '\n';
  }
}

// Writes a complete CLI workspace under `dir`:
//   {en,de,fr,hi}.emb1          evaluation corpora (parallel)
//   fit/{en,de,fr,hi}.emb1      disjoint parallel corpora for fitting
//   short.emb1                  en corpus with one sentence fewer
//   gold.en-de.txt              gold alignment between en and de
//   families.tsv, langid.tsv    family labeling and langid listing
//   qe/{src,mt,valid_src,valid_mt}.emb1 + labels, texts
inline void write_cli_workspace(const std::filesystem::path& dir, std::uint64_t seed = 7) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "fit");
  fs::create_directories(dir / "qe");
  const std::vector<std::string> langs = {"en", "de", "fr", "hi"};

  CorpusShape shape;
  shape.seed = seed;
  const auto eval = make_parallel_corpus(langs, shape);
  shape.seed = seed + 1000;
  shape.sentences = 60;
  const auto fit = make_parallel_corpus(langs, shape);
  for (std::size_t l = 0; l < langs.size(); ++l) {
    save_embedding_set(eval.sets[l], dir / (langs[l] + ".emb1"));
    save_embedding_set(fit.sets[l], dir / "fit" / (langs[l] + ".emb1"));
  }
  auto shorter = eval.sets[0];
  shorter.sentences.pop_back();
  save_embedding_set(shorter, dir / "short.emb1");
  write_gold(dir / "gold.en-de.txt", eval.gold);
  write_text(dir / "families.tsv", "# lang\tfamily\nen\tgermanic\nde\tgermanic\nfr\tromance\nhi\tindic\n");
  write_text(dir / "langid.tsv", "en\ten.emb1\nde\tde.emb1\nfr\tfr.emb1\nhi\thi.emb1\n");

  // QE: the MT side is a noisier copy of the target whose noise level is the label.
  std::mt19937_64 rng(seed + 2000);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  auto qe_split = [&](const std::string& prefix, const ParallelCorpus& corpus) {
    EmbeddingSet src = corpus.sets[0];
    EmbeddingSet mt = corpus.sets[1];
    std::string labels, src_text, mt_text;
    for (std::size_t s = 0; s < mt.size(); ++s) {
      const double quality = unit(rng);
      for (std::size_t layer = 0; layer < mt.num_layers; ++layer) {
        auto& states = mt.sentences[s].token_vectors[layer];
        for (Eigen::Index i = 0; i < states.size(); ++i) states.data()[i] += 3.0f * static_cast<float>(quality) * normal(rng);
        auto& cls = mt.sentences[s].cls_vectors[layer];
        for (Eigen::Index i = 0; i < cls.size(); ++i) cls(i) += 3.0f * static_cast<float>(quality) * normal(rng);
      }
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", quality);
      labels += std::string("s") + std::to_string(s) + "\t" + buf + "\n";
      src_text += "source sentence " + std::to_string(s) + "\n";
      mt_text += "machine translation " + std::to_string(s) + "\n";
    }
    save_embedding_set(src, dir / "qe" / (prefix + "src.emb1"));
    save_embedding_set(mt, dir / "qe" / (prefix + "mt.emb1"));
    write_text(dir / "qe" / (prefix + "labels.tsv"), labels);
    write_text(dir / "qe" / (prefix + "src.txt"), src_text);
    write_text(dir / "qe" / (prefix + "mt.txt"), mt_text);
  };
  qe_split("", eval);
  qe_split("valid_", fit);
}

}  // namespace lnprobe::testing
