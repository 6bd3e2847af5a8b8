#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "lnprobe/alignment.hpp"
#include "lnprobe/embstore.hpp"
#include "lnprobe/error.hpp"
#include "lnprobe/geometry.hpp"
#include "lnprobe/langid.hpp"
#include "lnprobe/langsim.hpp"
#include "lnprobe/parallel.hpp"
#include "lnprobe/qe.hpp"
#include "lnprobe/report.hpp"
#include "lnprobe/retrieval.hpp"

namespace lnprobe::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::size_t> layer;
  std::string source = "mean";
  std::string transform = "plain";
  double lambda = 0.0;
  bool lambda_given = false;
  std::uint64_t seed = 42;
  std::string output;
  std::string format = "json";
  bool all_layers = false;
  unsigned threads = 1;

  ReprSource repr_source() const { return parse_repr_source(source); }
  Transform transform_kind() const { return parse_transform(transform); }
};

// Subcommand arguments; each subcommand reads only its own fields.
struct Args {
  std::vector<std::string> files;
  std::vector<std::string> fit;
  std::string input, output_path, reference, gold, model, map, families, listing, csv;
  std::string pivot = "en";
  std::string features = "both";
  std::string src, mt, labels, src_text, mt_text, fit_src, fit_mt;
  std::string valid_src, valid_mt, valid_labels;
  std::string alignments, map_out;
  std::size_t iterations = 5;
  std::size_t k = 0;
  bool per_pair = false;
  TrainingConfig training;
};

class Run {
 public:
  Run(const Globals& g, std::string command) : g_(g), command_(std::move(command)) {}

  const Globals& globals() const { return g_; }
  json& config() { return config_; }

  // Every input path goes through here before any computation starts.
  fs::path input(const std::string& path) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) throw Error(ErrorCode::IoError, "input file not found: " + path);
    inputs_.push_back({{"path", path}, {"bytes", fs::file_size(path)}});
    return path;
  }

  fs::path model_input(const std::string& basename) {
    input(basename + ".json");
    input(basename + ".bin");
    return basename;
  }

  fs::path output(const std::string& path) const {
    const fs::path p(path);
    const auto parent = p.parent_path();
    std::error_code ec;
    if (!parent.empty() && !fs::is_directory(parent, ec)) {
      throw Error(ErrorCode::IoError, "output directory does not exist: " + parent.string());
    }
    for (const auto& in : inputs_) {
      if (fs::exists(p, ec) && fs::equivalent(p, in.at("path").get<std::string>(), ec)) {
        throw Error(ErrorCode::InvariantViolation, "refusing to overwrite input file " + path);
      }
    }
    return p;
  }

  Report report(std::string task, std::vector<std::string> columns) const {
    Report r;
    r.task = std::move(task);
    r.columns = std::move(columns);
    return r;
  }

  json provenance() const {
    json cfg = {{"layer", g_.all_layers ? json("all") : g_.layer ? json(*g_.layer) : json("last")},
                {"source", g_.source},
                {"transform", g_.transform},
                {"lambda", g_.lambda},
                {"seed", g_.seed},
                {"format", g_.format}};
    cfg.update(config_);
    return {{"tool", "lnprobe"},
            {"version", LNPROBE_VERSION},
            {"command", command_},
            {"inputs", inputs_},
            {"config", cfg}};
  }

 private:
  const Globals& g_;
  std::string command_;
  json inputs_ = json::array();
  json config_ = json::object();
};

void emit(const Run& run, Report& report, std::ostream& out) {
  report.provenance = run.provenance();
  const auto text = render_report(report, parse_report_format(run.globals().format));
  const auto& path = run.globals().output;
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream file(run.output(path), std::ios::binary);
  file << text;
  if (!file) throw Error(ErrorCode::IoError, "cannot write " + path);
}

std::vector<std::size_t> layers_of(const Globals& g, std::size_t num_layers) {
  if (num_layers == 0) throw Error(ErrorCode::InvariantViolation, "file has no layers");
  if (g.all_layers) {
    std::vector<std::size_t> all(num_layers);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  const std::size_t layer = g.layer.value_or(num_layers - 1);
  if (layer >= num_layers) {
    throw Error(ErrorCode::IndexOutOfRange, "layer " + std::to_string(layer) + " out of range (" +
                                                std::to_string(num_layers) + " layers)");
  }
  return {layer};
}

// Per-layer artifact name: the basename itself for a single layer, else
// "<stem>.layer<k><ext>".
fs::path per_layer(const fs::path& base, std::size_t layer, bool all_layers, bool keep_extension = false) {
  if (!all_layers) return base;
  const std::string tag = ".layer" + std::to_string(layer);
  if (keep_extension && base.has_extension()) {
    return base.parent_path() / (base.stem().string() + tag + base.extension().string());
  }
  return base.string() + tag;
}

Cell layer_cell(std::size_t layer) { return static_cast<std::int64_t>(layer); }
Cell count_cell(std::size_t n) { return static_cast<std::int64_t>(n); }

std::vector<EmbeddingSet> load_sets(const std::vector<fs::path>& paths) {
  std::vector<EmbeddingSet> sets;
  for (const auto& p : paths) sets.push_back(load_embedding_set(p));
  for (const auto& s : sets) {
    if (s.num_layers != sets.front().num_layers || s.hidden_dim != sets.front().hidden_dim) {
      throw Error(ErrorCode::DimensionMismatch,
                  "files disagree on shape: " + sets.front().lang + " has " +
                      std::to_string(sets.front().num_layers) + "x" + std::to_string(sets.front().hidden_dim) +
                      ", " + s.lang + " has " + std::to_string(s.num_layers) + "x" +
                      std::to_string(s.hidden_dim));
    }
  }
  return sets;
}

void require_distinct_langs(const std::vector<EmbeddingSet>& sets) {
  std::set<std::string> seen;
  for (const auto& s : sets) {
    if (!seen.insert(s.lang).second) throw Error(ErrorCode::InvariantViolation, "language " + s.lang + " given twice");
  }
}

std::vector<fs::path> inputs(Run& run, const std::vector<std::string>& files) {
  std::vector<fs::path> out;
  for (const auto& f : files) out.push_back(run.input(f));
  return out;
}

// Mean-pool centroid over the sentences that have tokens.
Centroid mean_pool_centroid(const EmbeddingSet& set, std::size_t layer) {
  std::vector<SentenceRepr> reprs;
  for (std::size_t s = 0; s < set.size(); ++s) {
    if (set.sentences[s].num_tokens() > 0) reprs.push_back(sentence_repr(set, s, layer, ReprSource::MeanPool));
  }
  return compute_centroid(reprs, set.lang);
}

std::vector<SentenceRepr> centered_by_own(const std::vector<SentenceRepr>& reprs) {
  return center(reprs, compute_centroid(reprs));
}

double linf(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// ---------------------------------------------------------------- info

void cmd_info(Run& run, const Args& a, std::ostream& out) {
  const auto path = run.input(a.input);
  const auto set = load_embedding_set(path);
  std::size_t tokens = 0, words = 0;
  for (const auto& s : set.sentences) {
    tokens += s.num_tokens();
    words += s.num_words();
  }
  auto report = run.report("info", {"lang", "num_layers", "hidden_dim", "num_sentences", "num_tokens", "num_words"});
  report.add_row({set.lang, count_cell(set.num_layers), count_cell(set.hidden_dim), count_cell(set.size()),
                  count_cell(tokens), count_cell(words)});
  report.details["manifest"] = set.manifest;
  emit(run, report, out);
}

// ------------------------------------------------------------ centroids

void cmd_centroid(Run& run, const Args& a, std::ostream& out) {
  const auto sets = load_sets(inputs(run, a.files));
  const auto& g = run.globals();
  auto report = run.report("centroid", {"lang", "layer", "source", "sample_count", "linf"});
  json vectors = json::array();
  for (const auto& set : sets) {
    for (const auto layer : layers_of(g, set.num_layers)) {
      const auto c = g.repr_source() == ReprSource::MeanPool
                         ? mean_pool_centroid(set, layer)
                         : compute_centroid(sentence_reprs(set, layer, ReprSource::Cls), set.lang);
      report.add_row({set.lang, layer_cell(layer), g.source, count_cell(c.sample_count), linf(c.vector)});
      vectors.push_back({{"lang", set.lang}, {"layer", layer}, {"vector", vector_json(c.vector)}});
    }
  }
  report.details["centroids"] = std::move(vectors);
  emit(run, report, out);
}

void cmd_export_centroids(Run& run, const Args& a, std::ostream& out) {
  const auto sets = load_sets(inputs(run, a.files));
  require_distinct_langs(sets);
  const auto& g = run.globals();
  run.config()["csv"] = a.csv;
  auto report = run.report("export-centroids", {"layer", "source", "languages", "dim", "path"});
  for (const auto layer : layers_of(g, sets.front().num_layers)) {
    std::vector<Centroid> cs;
    for (const auto& set : sets) {
      cs.push_back(g.repr_source() == ReprSource::MeanPool
                       ? mean_pool_centroid(set, layer)
                       : compute_centroid(sentence_reprs(set, layer, ReprSource::Cls), set.lang));
    }
    const auto path = run.output(per_layer(a.csv, layer, g.all_layers, true).string());
    std::ofstream file(path, std::ios::binary);
    const auto rows = export_centroids(cs, file);
    if (!file) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    report.add_row({layer_cell(layer), g.source, count_cell(rows), count_cell(sets.front().hidden_dim), path.string()});
  }
  emit(run, report, out);
}

// Subtracts, for every layer, the [cls] centroid from the [cls] vectors and the
// mean-pool centroid from every token state, so both pooled representations of
// the output are centered. The reference corpus defaults to the input.
void cmd_center(Run& run, const Args& a, std::ostream& out) {
  const auto in_path = run.input(a.input);
  const auto ref_path = a.reference.empty() ? in_path : run.input(a.reference);
  const auto out_path = run.output(a.output_path);
  run.config()["output"] = a.output_path;
  if (!a.reference.empty()) run.config()["reference"] = a.reference;

  auto set = load_embedding_set(in_path);
  const auto ref = a.reference.empty() ? set : load_embedding_set(ref_path);
  if (ref.num_layers != set.num_layers || ref.hidden_dim != set.hidden_dim) {
    throw Error(ErrorCode::DimensionMismatch, "reference corpus shape differs from the input");
  }
  auto report = run.report("center", {"layer", "cls_centroid_linf", "mean_centroid_linf"});
  for (std::size_t layer = 0; layer < set.num_layers; ++layer) {
    const Eigen::VectorXf cls = compute_centroid(sentence_reprs(ref, layer, ReprSource::Cls)).vector.cast<float>();
    const Eigen::VectorXf mean = mean_pool_centroid(ref, layer).vector.cast<float>();
    for (auto& sent : set.sentences) {
      sent.cls_vectors[layer] -= cls;
      sent.token_vectors[layer].rowwise() -= mean.transpose();
    }
    report.add_row({layer_cell(layer), static_cast<double>(cls.cwiseAbs().maxCoeff()),
                    static_cast<double>(mean.cwiseAbs().maxCoeff())});
  }
  set.manifest["centered"] = {{"reference", ref_path.string()}, {"tool_version", LNPROBE_VERSION}};
  save_embedding_set(set, out_path);
  emit(run, report, out);
}

// ------------------------------------------------------------ projection

void cmd_fit_proj(Run& run, const Args& a, std::ostream& out) {
  const auto sets = load_sets({run.input(a.files.at(0)), run.input(a.files.at(1))});
  const auto& g = run.globals();
  if (sets[0].size() != sets[1].size()) {
    throw Error(ErrorCode::LengthMismatch, "parallel corpora differ in size: " + std::to_string(sets[0].size()) +
                                               " vs " + std::to_string(sets[1].size()));
  }
  run.config()["model"] = a.model;
  auto report = run.report("fit-proj", {"source_lang", "target_lang", "layer", "source", "sentences", "rmse"});
  for (const auto layer : layers_of(g, sets[0].num_layers)) {
    const auto x = stack_rows(sentence_reprs(sets[0], layer, g.repr_source()));
    const auto y = stack_rows(sentence_reprs(sets[1], layer, g.repr_source()));
    auto map = fit_projection(x, y, g.lambda);
    map.source_lang = sets[0].lang;
    map.target_lang = sets[1].lang;
    const double rmse = std::sqrt((apply_projection_rows(map, x) - y).squaredNorm() / static_cast<double>(y.size()));
    save_linear_map(map, run.output(per_layer(a.model, layer, g.all_layers).string()));
    report.add_row({map.source_lang, map.target_lang, layer_cell(layer), g.source, count_cell(sets[0].size()), rmse});
  }
  emit(run, report, out);
}

// ------------------------------------------------------------- retrieval

LangReprs lang_reprs(const std::vector<EmbeddingSet>& sets, std::size_t layer, ReprSource source) {
  LangReprs out;
  for (const auto& s : sets) out[s.lang] = sentence_reprs(s, layer, source);
  return out;
}

void cmd_retrieve(Run& run, const Args& a, std::ostream& out) {
  const auto sets = load_sets(inputs(run, a.files));
  const auto fit_sets = load_sets(inputs(run, a.fit));
  const auto& g = run.globals();
  if (sets.size() < 2) throw UsageError("retrieve needs at least two corpora");
  require_distinct_langs(sets);
  require_distinct_langs(fit_sets);
  const auto transform = g.transform_kind();
  if (transform == Transform::Projected && fit_sets.empty()) {
    throw UsageError("projected retrieval needs --fit corpora disjoint from the evaluation data");
  }
  run.config()["pivot"] = a.pivot;
  run.config()["per_pair"] = a.per_pair;

  auto report = a.per_pair
                    ? run.report("retrieve", {"source_lang", "target_lang", "layer", "source", "transform", "accuracy"})
                    : run.report("retrieve", {"layer", "source", "transform", "pairs", "accuracy"});
  json pairs = json::array();
  for (const auto layer : layers_of(g, sets.front().num_layers)) {
    const auto corpus = lang_reprs(sets, layer, g.repr_source());
    const auto fit = lang_reprs(fit_sets, layer, g.repr_source());
    RetrievalOptions opts;
    opts.transform = transform;
    opts.pivot = a.pivot;
    opts.ridge_lambda = g.lambda;
    opts.threads = g.threads;
    if (!fit_sets.empty()) {
      opts.fit_corpus = &fit;
      opts.centroid_corpus = &fit;
    }
    const auto results = retrieval_matrix(corpus, opts);
    for (const auto& [key, r] : results) {
      pairs.push_back({{"source_lang", key.first}, {"target_lang", key.second}, {"layer", layer}, {"accuracy", r.accuracy}});
      if (a.per_pair) report.add_row({key.first, key.second, layer_cell(layer), g.source, g.transform, r.accuracy});
    }
    if (!a.per_pair) {
      report.add_row({layer_cell(layer), g.source, g.transform, count_cell(results.size()), mean_accuracy(results)});
    }
  }
  if (g.all_layers) {
    add_best_rows(report, a.per_pair ? std::vector<std::string>{"source_lang", "target_lang"}
                                     : std::vector<std::string>{"source", "transform"},
                  "layer", "accuracy");
  }
  report.details["pairs"] = std::move(pairs);
  emit(run, report, out);
}

// ------------------------------------------------------------- alignment

struct WordCorpus {
  std::vector<Eigen::MatrixXd> source, target;
  std::vector<std::size_t> index;  // sentence index of every non-empty pair
  std::size_t sentences = 0;
};

WordCorpus word_corpus(const EmbeddingSet& src, const EmbeddingSet& tgt, std::size_t layer, Transform transform,
                       const LinearMap* map) {
  if (src.size() != tgt.size()) {
    throw Error(ErrorCode::LengthMismatch, "parallel corpora differ in size: " + std::to_string(src.size()) +
                                               " vs " + std::to_string(tgt.size()));
  }
  std::optional<Eigen::RowVectorXd> src_shift, tgt_shift;
  if (transform == Transform::Centered) {
    src_shift = mean_pool_centroid(src, layer).vector.transpose();
    tgt_shift = mean_pool_centroid(tgt, layer).vector.transpose();
  }
  WordCorpus wc;
  wc.sentences = src.size();
  for (std::size_t s = 0; s < src.size(); ++s) {
    if (src.sentences[s].num_words() == 0 || tgt.sentences[s].num_words() == 0) continue;
    Eigen::MatrixXd sw = word_vectors(src, s, layer);
    Eigen::MatrixXd tw = word_vectors(tgt, s, layer);
    if (src_shift) {
      sw.rowwise() -= *src_shift;
      tw.rowwise() -= *tgt_shift;
    } else if (map) {
      sw = apply_projection_rows(*map, sw);
    }
    wc.source.push_back(std::move(sw));
    wc.target.push_back(std::move(tw));
    wc.index.push_back(s);
  }
  return wc;
}

std::vector<LinkSet> align_corpus(const WordCorpus& wc, unsigned threads, double* total_cost) {
  std::vector<EdgeCover> covers(wc.index.size());
  parallel_for(covers.size(), threads, [&](std::size_t i) {
    try {
      covers[i] = align_words(wc.source[i], wc.target[i]);
    } catch (const Error& e) {
      throw Error(e.code(), "sentence " + std::to_string(wc.index[i]) + ": " + e.what());
    }
  });
  std::vector<LinkSet> links(wc.sentences);
  double cost = 0.0;
  for (std::size_t i = 0; i < covers.size(); ++i) {
    cost += covers[i].cost;
    links[wc.index[i]] = std::move(covers[i].links);
  }
  if (total_cost) *total_cost = cost;
  return links;
}

std::optional<LinearMap> load_map_for(Run& run, const Args& a, std::size_t layer) {
  if (run.globals().transform_kind() != Transform::Projected) return std::nullopt;
  return load_linear_map(per_layer(a.map, layer, run.globals().all_layers));
}

void check_map_args(Run& run, const Args& a, const std::vector<std::size_t>& layers) {
  if (run.globals().transform_kind() != Transform::Projected) return;
  if (a.map.empty()) throw UsageError("--transform projected needs --map (see fit-proj)");
  run.config()["map"] = a.map;
  for (const auto layer : layers) run.model_input(per_layer(a.map, layer, run.globals().all_layers).string());
}

std::size_t link_count(const std::vector<LinkSet>& links) {
  std::size_t n = 0;
  for (const auto& l : links) n += l.size();
  return n;
}

void write_links(Run& run, const std::string& path, std::size_t layer, const std::vector<LinkSet>& links) {
  const auto p = run.output(per_layer(path, layer, run.globals().all_layers, true).string());
  std::ofstream file(p, std::ios::binary);
  write_alignment_file(file, links);
  if (!file) throw Error(ErrorCode::IoError, "cannot write " + p.string());
}

void cmd_align(Run& run, const Args& a, std::ostream& out) {
  const auto sets = load_sets({run.input(a.files.at(0)), run.input(a.files.at(1))});
  const auto& g = run.globals();
  const auto layers = layers_of(g, sets[0].num_layers);
  check_map_args(run, a, layers);
  if (!a.alignments.empty()) run.config()["alignments"] = a.alignments;

  auto report = run.report("align", {"layer", "transform", "sentences", "links", "cost"});
  for (const auto layer : layers) {
    const auto map = load_map_for(run, a, layer);
    const auto wc = word_corpus(sets[0], sets[1], layer, g.transform_kind(), map ? &*map : nullptr);
    double cost = 0.0;
    const auto links = align_corpus(wc, g.threads, &cost);
    if (!a.alignments.empty()) write_links(run, a.alignments, layer, links);
    report.add_row({layer_cell(layer), g.transform, count_cell(wc.sentences), count_cell(link_count(links)), cost});
  }
  emit(run, report, out);
}

std::vector<GoldAlignment> load_gold(const fs::path& path, std::size_t sentences) {
  std::ifstream in(path, std::ios::binary);
  auto gold = read_alignment_file(in);
  // A trailing blank line for the last pair may be missing.
  if (gold.size() + 1 == sentences) gold.emplace_back();
  if (gold.size() != sentences) {
    throw Error(ErrorCode::LengthMismatch, "gold file has " + std::to_string(gold.size()) + " lines, corpus has " +
                                               std::to_string(sentences) + " sentence pairs");
  }
  return gold;
}

void cmd_align_eval(Run& run, const Args& a, std::ostream& out) {
  const auto sets = load_sets({run.input(a.files.at(0)), run.input(a.files.at(1))});
  const auto gold_path = run.input(a.gold);
  const auto& g = run.globals();
  const auto layers = layers_of(g, sets[0].num_layers);
  check_map_args(run, a, layers);
  const auto gold = load_gold(gold_path, sets[0].size());

  auto report = run.report("align-eval", {"layer", "transform", "precision", "recall", "f1"});
  for (const auto layer : layers) {
    const auto map = load_map_for(run, a, layer);
    const auto wc = word_corpus(sets[0], sets[1], layer, g.transform_kind(), map ? &*map : nullptr);
    const auto links = align_corpus(wc, g.threads, nullptr);
    const auto s = corpus_alignment_f1(links, gold);
    report.add_row({layer_cell(layer), g.transform, s.precision, s.recall, s.f1});
  }
  if (g.all_layers) add_best_rows(report, {"transform"}, "layer", "f1");
  emit(run, report, out);
}

void cmd_em_align(Run& run, const Args& a, std::ostream& out) {
  const auto sets = load_sets({run.input(a.files.at(0)), run.input(a.files.at(1))});
  const auto& g = run.globals();
  if (g.transform_kind() == Transform::Projected) {
    throw UsageError("em-align learns its own projection; use --transform plain or centered");
  }
  const auto gold_path = a.gold.empty() ? fs::path{} : run.input(a.gold);
  const auto layers = layers_of(g, sets[0].num_layers);
  run.config()["iterations"] = a.iterations;
  if (!a.alignments.empty()) run.config()["alignments"] = a.alignments;
  if (!a.map_out.empty()) run.config()["map_out"] = a.map_out;
  std::optional<std::vector<GoldAlignment>> gold;
  if (!gold_path.empty()) gold = load_gold(gold_path, sets[0].size());

  std::vector<std::string> columns = {"layer", "transform", "iterations", "initial_cost", "final_cost",
                                      "changed_links"};
  if (gold) columns.insert(columns.end(), {"precision", "recall", "f1"});
  auto report = run.report("em-align", columns);
  json costs = json::object();
  for (const auto layer : layers) {
    const auto wc = word_corpus(sets[0], sets[1], layer, g.transform_kind(), nullptr);
    auto em = em_align_project(wc.source, wc.target, a.iterations, g.lambda, g.threads);
    const auto plain = align_corpus(wc, g.threads, nullptr);
    std::vector<LinkSet> final(wc.sentences);
    for (std::size_t i = 0; i < wc.index.size(); ++i) final[wc.index[i]] = em.alignments[i].links;
    em.map.source_lang = sets[0].lang;
    em.map.target_lang = sets[1].lang;
    if (!a.alignments.empty()) write_links(run, a.alignments, layer, final);
    if (!a.map_out.empty()) save_linear_map(em.map, run.output(per_layer(a.map_out, layer, g.all_layers).string()));
    std::vector<Cell> row = {layer_cell(layer), g.transform, count_cell(a.iterations), em.iteration_costs.front(),
                             em.iteration_costs.back(), link_change_fraction(plain, final)};
    if (gold) {
      const auto s = corpus_alignment_f1(final, *gold);
      row.insert(row.end(), {s.precision, s.recall, s.f1});
    }
    report.add_row(std::move(row));
    costs[std::to_string(layer)] = em.iteration_costs;
  }
  if (gold && g.all_layers) add_best_rows(report, {"transform"}, "layer", "f1");
  report.details["iteration_costs"] = std::move(costs);
  emit(run, report, out);
}

// ------------------------------------------------------ language similarity

std::vector<Centroid> centroids_at(const std::vector<EmbeddingSet>& sets, std::size_t layer, ReprSource source) {
  std::vector<Centroid> cs;
  for (const auto& set : sets) {
    auto c = source == ReprSource::MeanPool ? mean_pool_centroid(set, layer)
                                            : compute_centroid(sentence_reprs(set, layer, ReprSource::Cls), set.lang);
    c.layer = layer;
    cs.push_back(std::move(c));
  }
  return cs;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

std::string node_label(const ClusterTree& tree, std::size_t node) {
  const std::size_t n = tree.leaves.size();
  if (node < n) return tree.leaves[node];
  std::vector<std::string> members;
  std::vector<std::size_t> stack = {node};
  while (!stack.empty()) {
    const auto id = stack.back();
    stack.pop_back();
    if (id < n) {
      members.push_back(tree.leaves[id]);
    } else {
      stack.push_back(tree.merges[id - n].left);
      stack.push_back(tree.merges[id - n].right);
    }
  }
  std::sort(members.begin(), members.end());
  return join(members, "+");
}

void cmd_cluster(Run& run, const Args& a, std::ostream& out) {
  const auto sets = load_sets(inputs(run, a.files));
  require_distinct_langs(sets);
  const auto& g = run.globals();
  auto report = run.report("cluster", {"layer", "step", "left", "right", "distance", "size"});
  json trees = json::object();
  for (const auto layer : layers_of(g, sets.front().num_layers)) {
    const auto tree = agglomerative_cluster(centroids_at(sets, layer, g.repr_source()));
    for (std::size_t k = 0; k < tree.merges.size(); ++k) {
      const auto& m = tree.merges[k];
      report.add_row({layer_cell(layer), count_cell(k), node_label(tree, m.left), node_label(tree, m.right),
                      m.distance, count_cell(m.size)});
    }
    trees[std::to_string(layer)] = tree_to_json(tree);
  }
  report.details["trees"] = std::move(trees);
  emit(run, report, out);
}

void cmd_vmeasure(Run& run, const Args& a, std::ostream& out) {
  const auto sets = load_sets(inputs(run, a.files));
  const auto fam_path = run.input(a.families);
  require_distinct_langs(sets);
  const auto& g = run.globals();
  std::ifstream fam_in(fam_path, std::ios::binary);
  const auto all_families = read_family_labeling(fam_in);
  FamilyLabeling families;
  for (const auto& s : sets) {
    const auto it = all_families.find(s.lang);
    if (it == all_families.end()) throw Error(ErrorCode::UnknownLabel, "language " + s.lang + " has no family label");
    families.emplace(s.lang, it->second);
  }
  const std::size_t k = a.k ? a.k : distinct_families(families);
  run.config()["k"] = k;

  auto report = run.report("vmeasure", {"layer", "source", "k", "homogeneity", "completeness", "v"});
  json partitions = json::object();
  for (const auto layer : layers_of(g, sets.front().num_layers)) {
    const auto tree = agglomerative_cluster(centroids_at(sets, layer, g.repr_source()));
    const auto partition = cut_tree(tree, k);
    const auto v = v_measure(partition, families);
    report.add_row({layer_cell(layer), g.source, count_cell(k), v.homogeneity, v.completeness, v.v});
    partitions[std::to_string(layer)] = partition;
  }
  if (g.all_layers) add_best_rows(report, {"source"}, "layer", "v");
  report.details["partitions"] = std::move(partitions);
  emit(run, report, out);
}

// ------------------------------------------------------------ language ID

struct ListingEntry {
  std::string lang;
  fs::path path;
};

std::vector<ListingEntry> read_listing(Run& run, const std::string& listing) {
  const auto path = run.input(listing);
  std::ifstream in(path, std::ios::binary);
  std::vector<ListingEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
      throw Error(ErrorCode::ParseError, listing + " line " + std::to_string(line_no) + ": expected lang<TAB>path");
    }
    fs::path file = line.substr(tab + 1);
    if (file.is_relative()) file = path.parent_path() / file;
    entries.push_back({line.substr(0, tab), run.input(file.string())});
  }
  if (entries.empty()) throw Error(ErrorCode::EmptyInput, listing + " lists no corpora");
  return entries;
}

struct LangidCorpus {
  std::vector<EmbeddingSet> sets;
  std::vector<std::string> langs;
};

LangidCorpus load_langid(const std::vector<ListingEntry>& entries) {
  LangidCorpus c;
  std::vector<fs::path> paths;
  for (const auto& e : entries) {
    paths.push_back(e.path);
    c.langs.push_back(e.lang);
  }
  c.sets = load_sets(paths);
  return c;
}

// Centered: every language is shifted by its own centroid.
std::vector<LabeledRepr> langid_data(const LangidCorpus& c, std::size_t layer, ReprSource source, Transform t) {
  std::map<std::string, std::vector<SentenceRepr>> by_lang;
  for (std::size_t i = 0; i < c.sets.size(); ++i) {
    auto reprs = sentence_reprs(c.sets[i], layer, source);
    auto& dst = by_lang[c.langs[i]];
    dst.insert(dst.end(), reprs.begin(), reprs.end());
  }
  std::vector<LabeledRepr> data;
  for (auto& [lang, reprs] : by_lang) {
    if (t == Transform::Centered) reprs = centered_by_own(reprs);
    for (auto& r : reprs) data.push_back({std::move(r), lang});
  }
  return data;
}

void reject_projected(const Globals& g, const char* command) {
  if (g.transform_kind() == Transform::Projected) {
    throw UsageError(std::string(command) + " supports --transform plain or centered");
  }
}

void cmd_langid_train(Run& run, const Args& a, std::ostream& out) {
  const auto& g = run.globals();
  reject_projected(g, "langid-train");
  const auto corpus = load_langid(read_listing(run, a.listing));
  TrainingConfig cfg = a.training;
  cfg.seed = g.seed;
  run.config()["model"] = a.model;
  run.config()["training"] = {{"epochs", cfg.epochs},
                              {"learning_rate", cfg.learning_rate},
                              {"batch_size", cfg.batch_size},
                              {"l2", cfg.l2}};
  auto report = run.report("langid-train", {"layer", "source", "transform", "classes", "examples", "final_loss"});
  json history = json::object();
  for (const auto layer : layers_of(g, corpus.sets.front().num_layers)) {
    const auto data = langid_data(corpus, layer, g.repr_source(), g.transform_kind());
    const auto clf = train_classifier(data, cfg);
    save_classifier(clf, run.output(per_layer(a.model, layer, g.all_layers).string()));
    report.add_row({layer_cell(layer), g.source, g.transform, count_cell(clf.class_labels.size()),
                    count_cell(data.size()), clf.meta.final_loss});
    history[std::to_string(layer)] = clf.meta.loss_history;
  }
  report.details["loss_history"] = std::move(history);
  emit(run, report, out);
}

void cmd_langid_eval(Run& run, const Args& a, std::ostream& out) {
  const auto& g = run.globals();
  reject_projected(g, "langid-eval");
  const auto corpus = load_langid(read_listing(run, a.listing));
  const auto layers = layers_of(g, corpus.sets.front().num_layers);
  for (const auto layer : layers) run.model_input(per_layer(a.model, layer, g.all_layers).string());
  run.config()["model"] = a.model;

  auto report = run.report("langid-eval", {"layer", "source", "transform", "examples", "accuracy"});
  json per_layer_details = json::object();
  for (const auto layer : layers) {
    const auto clf = load_classifier(per_layer(a.model, layer, g.all_layers));
    const auto eval = evaluate_classifier(clf, langid_data(corpus, layer, g.repr_source(), g.transform_kind()));
    report.add_row({layer_cell(layer), g.source, g.transform, count_cell(eval.total), eval.accuracy});
    per_layer_details[std::to_string(layer)] = {{"per_language", eval.per_language}, {"confusion", eval.confusion}};
  }
  if (g.all_layers) add_best_rows(report, {"source", "transform"}, "layer", "accuracy");
  report.details["layers"] = std::move(per_layer_details);
  emit(run, report, out);
}

// ---------------------------------------------------------------------- QE

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// One score per line; tab-separated lines take the last field.
std::vector<double> read_labels(const fs::path& path) {
  std::vector<double> labels;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto field = lines[i].substr(lines[i].rfind('\t') + 1);
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(field, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || field.find_first_not_of(" \t", used) != std::string::npos) {
      throw Error(ErrorCode::ParseError, path.string() + " line " + std::to_string(i + 1) + ": not a number");
    }
    labels.push_back(value);
  }
  return labels;
}

struct QEData {
  EmbeddingSet src, mt;
  std::vector<double> labels;
};

QEData load_qe(Run& run, const std::string& src, const std::string& mt, const std::string& labels,
               const std::string& src_text = {}, const std::string& mt_text = {}) {
  if (src.empty() || mt.empty() || labels.empty()) throw UsageError("QE needs --src, --mt and --labels");
  const auto src_path = run.input(src), mt_path = run.input(mt), labels_path = run.input(labels);
  const auto src_text_path = src_text.empty() ? fs::path{} : run.input(src_text);
  const auto mt_text_path = mt_text.empty() ? fs::path{} : run.input(mt_text);
  auto sets = load_sets({src_path, mt_path});
  QEData d{std::move(sets[0]), std::move(sets[1]), read_labels(labels_path)};
  const auto n = d.src.size();
  auto check = [n](std::size_t count, const std::string& what) {
    if (count != n) {
      throw Error(ErrorCode::LengthMismatch, what + " has " + std::to_string(count) + " lines, source corpus has " +
                                                 std::to_string(n) + " sentences");
    }
  };
  check(d.mt.size(), "MT corpus");
  check(d.labels.size(), "label file");
  if (!src_text_path.empty()) check(read_lines(src_text_path).size(), "source text");
  if (!mt_text_path.empty()) check(read_lines(mt_text_path).size(), "MT text");
  return d;
}

std::vector<QERecord> qe_records(const QEData& d, std::size_t layer, ReprSource source) {
  const auto src = sentence_reprs(d.src, layer, source);
  const auto mt = sentence_reprs(d.mt, layer, source);
  std::vector<QERecord> out;
  for (std::size_t i = 0; i < src.size(); ++i) out.push_back({src[i], mt[i], d.labels[i]});
  return out;
}

// Feature-space transform for supervised QE: each side centered by its own
// centroid, or the source projected into the MT space.
std::vector<QERecord> transform_records(std::vector<QERecord> recs, Transform t, const LinearMap* map) {
  if (t == Transform::Centered) {
    std::vector<SentenceRepr> src, mt;
    for (const auto& r : recs) {
      src.push_back(r.source_repr);
      mt.push_back(r.mt_repr);
    }
    const auto cs = compute_centroid(src), cm = compute_centroid(mt);
    for (auto& r : recs) {
      r.source_repr.vector -= cs.vector;
      r.mt_repr.vector -= cm.vector;
    }
  } else if (t == Transform::Projected) {
    for (auto& r : recs) r.source_repr.vector = apply_projection(*map, r.source_repr.vector);
  }
  return recs;
}

void cmd_qe_score(Run& run, const Args& a, std::ostream& out) {
  const auto& g = run.globals();
  const auto d = load_qe(run, a.src, a.mt, a.labels, a.src_text, a.mt_text);
  const auto layers = layers_of(g, d.src.num_layers);
  check_map_args(run, a, layers);
  std::optional<QEData> fit;
  if (!a.fit_src.empty() || !a.fit_mt.empty()) {
    if (a.fit_src.empty() || a.fit_mt.empty()) throw UsageError("--fit-src and --fit-mt go together");
    auto sets = load_sets({run.input(a.fit_src), run.input(a.fit_mt)});
    fit = QEData{std::move(sets[0]), std::move(sets[1]), {}};
  }

  auto report = run.report("qe-score", {"layer", "source", "transform", "records", "pearson"});
  for (const auto layer : layers) {
    const auto recs = qe_records(d, layer, g.repr_source());
    const auto map = load_map_for(run, a, layer);
    std::optional<QECentroids> cents;
    if (fit && g.transform_kind() == Transform::Centered) {
      cents = QECentroids{compute_centroid(sentence_reprs(fit->src, layer, g.repr_source())),
                          compute_centroid(sentence_reprs(fit->mt, layer, g.repr_source()))};
    }
    const auto scores = distance_score(recs, g.transform_kind(), map ? &*map : nullptr, cents ? &*cents : nullptr);
    report.add_row({layer_cell(layer), g.source, g.transform, count_cell(recs.size()), pearson(scores, d.labels)});
  }
  if (g.all_layers) add_best_rows(report, {"source", "transform"}, "layer", "pearson");
  emit(run, report, out);
}

void cmd_qe_train(Run& run, const Args& a, std::ostream& out) {
  const auto& g = run.globals();
  const auto train = load_qe(run, a.src, a.mt, a.labels, a.src_text, a.mt_text);
  const auto valid = load_qe(run, a.valid_src, a.valid_mt, a.valid_labels);
  const auto layers = layers_of(g, train.src.num_layers);
  check_map_args(run, a, layers);
  const auto mode = parse_feature_mode(a.features);
  const auto grid = g.lambda_given ? std::vector<double>{g.lambda} : default_lambda_grid();
  run.config()["features"] = a.features;
  run.config()["lambda_grid"] = grid;
  run.config()["model"] = a.model;

  auto report = run.report("qe-train", {"layer", "features", "lambda", "validation_pearson", "selected"});
  for (const auto layer : layers) {
    const auto map = load_map_for(run, a, layer);
    const auto t = g.transform_kind();
    const auto tr = transform_records(qe_records(train, layer, g.repr_source()), t, map ? &*map : nullptr);
    const auto va = transform_records(qe_records(valid, layer, g.repr_source()), t, map ? &*map : nullptr);
    const auto sel = select_qe_lambda(tr, va, mode, grid);
    save_qe_model(sel.model, run.output(per_layer(a.model, layer, g.all_layers).string()));
    for (std::size_t i = 0; i < sel.lambdas.size(); ++i) {
      report.add_row({layer_cell(layer), a.features, sel.lambdas[i], sel.validation_pearson[i],
                      count_cell(sel.lambdas[i] == sel.model.ridge_lambda ? 1 : 0)});
    }
  }
  if (g.all_layers) add_best_rows(report, {"features"}, "layer", "validation_pearson");
  emit(run, report, out);
}

void cmd_qe_eval(Run& run, const Args& a, std::ostream& out) {
  const auto& g = run.globals();
  const auto d = load_qe(run, a.src, a.mt, a.labels, a.src_text, a.mt_text);
  const auto layers = layers_of(g, d.src.num_layers);
  check_map_args(run, a, layers);
  for (const auto layer : layers) run.model_input(per_layer(a.model, layer, g.all_layers).string());
  run.config()["model"] = a.model;

  auto report = run.report("qe-eval", {"layer", "features", "lambda", "records", "pearson"});
  for (const auto layer : layers) {
    const auto model = load_qe_model(per_layer(a.model, layer, g.all_layers));
    const auto map = load_map_for(run, a, layer);
    const auto recs = transform_records(qe_records(d, layer, g.repr_source()), g.transform_kind(), map ? &*map : nullptr);
    const auto predictions = predict_qe(model, recs);
    report.add_row({layer_cell(layer), std::string(feature_mode_name(model.mode)), model.ridge_lambda,
                    count_cell(recs.size()), pearson(predictions, d.labels)});
  }
  if (g.all_layers) add_best_rows(report, {"features"}, "layer", "pearson");
  emit(run, report, out);
}

// ------------------------------------------------------------- dispatch

using Handler = void (*)(Run&, const Args&, std::ostream&);

void add_globals(CLI::App& app, Globals& g) {
  app.add_option("--layer", g.layer, "Layer index (default: last layer)");
  app.add_option("--source", g.source, "Sentence representation")->check(CLI::IsMember({"cls", "mean"}));
  app.add_option("--transform", g.transform, "Representation transform")
      ->check(CLI::IsMember({"plain", "centered", "projected"}));
  app.add_option("--lambda", g.lambda, "Ridge penalty")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("-o,--output", g.output, "Report path (default: stdout)");
  app.add_option("--format", g.format, "Report format")->check(CLI::IsMember({"json", "text", "csv"}));
  app.add_flag("--all-layers", g.all_layers, "Run every layer and add best-layer rows");
  app.add_option("--threads", g.threads, "Worker thread cap")->check(CLI::PositiveNumber);
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Globals g;
  g.threads = default_thread_count();
  Args a;

  CLI::App app{"Language-neutrality probes for multilingual contextual embeddings", "lnprobe"};
  app.require_subcommand(1);
  add_globals(app, g);

  std::vector<std::pair<CLI::App*, Handler>> commands;
  auto sub = [&](const char* name, const char* help, Handler h) {
    auto* s = app.add_subcommand(name, help);
    s->fallthrough();
    commands.emplace_back(s, h);
    return s;
  };

  auto* info = sub("info", "Print the manifest and shape of an EMB1 file", cmd_info);
  info->add_option("file", a.input, "EMB1 file")->required();

  auto* centroid = sub("centroid", "Language centroids per file", cmd_centroid);
  centroid->add_option("files", a.files, "EMB1 files")->required();

  auto* center = sub("center", "Write a copy of a corpus with its language centroid removed", cmd_center);
  center->add_option("input", a.input, "EMB1 input")->required();
  center->add_option("output", a.output_path, "EMB1 output")->required();
  center->add_option("--reference", a.reference, "Corpus that defines the centroid (default: input)");

  auto* fit = sub("fit-proj", "Fit an affine map from source to target representations", cmd_fit_proj);
  fit->add_option("files", a.files, "Parallel source and target EMB1 files")->required()->expected(2);
  fit->add_option("--model", a.model, "Output basename (<name>.json + <name>.bin)")->required();

  auto* retrieve = sub("retrieve", "Parallel sentence retrieval between every language pair", cmd_retrieve);
  retrieve->add_option("files", a.files, "One parallel EMB1 file per language")->required();
  retrieve->add_option("--fit", a.fit, "Parallel corpora for projection maps and centroids");
  retrieve->add_option("--pivot", a.pivot, "Language the projections map into");
  retrieve->add_flag("--per-pair", a.per_pair, "One row per language pair instead of the mean");

  auto* align = sub("align", "Word alignment by minimum-weight edge cover", cmd_align);
  align->add_option("files", a.files, "Parallel source and target EMB1 files")->required()->expected(2);
  align->add_option("--alignments", a.alignments, "Write links in i-j format");
  align->add_option("--map", a.map, "Linear map basename for --transform projected");

  auto* align_eval = sub("align-eval", "Alignment precision, recall and F1 against a gold standard", cmd_align_eval);
  align_eval->add_option("files", a.files, "Parallel source and target EMB1 files")->required()->expected(2);
  align_eval->add_option("--gold", a.gold, "Gold alignment file")->required();
  align_eval->add_option("--map", a.map, "Linear map basename for --transform projected");

  auto* em = sub("em-align", "Alternate alignment and projection fitting", cmd_em_align);
  em->add_option("files", a.files, "Parallel source and target EMB1 files")->required()->expected(2);
  em->add_option("--iterations", a.iterations, "Projection iterations after the plain alignment");
  em->add_option("--gold", a.gold, "Gold alignment file for scoring");
  em->add_option("--alignments", a.alignments, "Write final links in i-j format");
  em->add_option("--map-out", a.map_out, "Write the final map to this basename");

  auto* cluster = sub("cluster", "Average-linkage clustering of language centroids", cmd_cluster);
  cluster->add_option("files", a.files, "One EMB1 file per language")->required();

  auto* vm = sub("vmeasure", "V-measure of the centroid clustering against language families", cmd_vmeasure);
  vm->add_option("files", a.files, "One EMB1 file per language")->required();
  vm->add_option("--families", a.families, "TSV lang<TAB>family")->required();
  vm->add_option("--k", a.k, "Number of clusters (default: number of families)");

  auto* exp = sub("export-centroids", "Write language centroids as CSV", cmd_export_centroids);
  exp->add_option("files", a.files, "One EMB1 file per language")->required();
  exp->add_option("--csv", a.csv, "Output CSV")->required();

  auto* lt = sub("langid-train", "Train a linear language classifier", cmd_langid_train);
  lt->add_option("listing", a.listing, "TSV lang<TAB>emb1-path")->required();
  lt->add_option("--model", a.model, "Output basename")->required();
  lt->add_option("--epochs", a.training.epochs);
  lt->add_option("--learning-rate", a.training.learning_rate)->check(CLI::PositiveNumber);
  lt->add_option("--batch-size", a.training.batch_size)->check(CLI::PositiveNumber);
  lt->add_option("--l2", a.training.l2)->check(CLI::NonNegativeNumber);

  auto* le = sub("langid-eval", "Evaluate a language classifier", cmd_langid_eval);
  le->add_option("listing", a.listing, "TSV lang<TAB>emb1-path")->required();
  le->add_option("--model", a.model, "Classifier basename")->required();

  auto qe_inputs = [&](CLI::App* s) {
    s->add_option("--src", a.src, "Source-side EMB1")->required();
    s->add_option("--mt", a.mt, "MT-side EMB1")->required();
    s->add_option("--labels", a.labels, "One quality score per line")->required();
    s->add_option("--src-text", a.src_text, "Source sentences, checked for line count");
    s->add_option("--mt-text", a.mt_text, "MT sentences, checked for line count");
    s->add_option("--map", a.map, "Linear map basename for --transform projected");
  };
  auto* qs = sub("qe-score", "Correlate source/MT distance with quality labels", cmd_qe_score);
  qe_inputs(qs);
  qs->add_option("--fit-src", a.fit_src, "Source corpus for centroids");
  qs->add_option("--fit-mt", a.fit_mt, "MT corpus for centroids");

  auto* qt = sub("qe-train", "Ridge regression from representations to quality labels", cmd_qe_train);
  qe_inputs(qt);
  qt->add_option("--valid-src", a.valid_src)->required();
  qt->add_option("--valid-mt", a.valid_mt)->required();
  qt->add_option("--valid-labels", a.valid_labels)->required();
  qt->add_option("--features", a.features)->check(CLI::IsMember({"src", "mt", "both"}));
  qt->add_option("--model", a.model, "Output basename")->required();

  auto* qv = sub("qe-eval", "Pearson correlation of QE model predictions", cmd_qe_eval);
  qe_inputs(qv);
  qv->add_option("--model", a.model, "QE model basename")->required();

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "lnprobe: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }
  g.lambda_given = app.count("--lambda") > 0;

  for (const auto& [command, handler] : commands) {
    if (!command->parsed()) continue;
    Run run(g, command->get_name());
    try {
      handler(run, a, out);
      return kExitOk;
    } catch (const UsageError& e) {
      err << "lnprobe " << command->get_name() << ": " << e.what() << "\n";
      return kExitUsage;
    } catch (const Error& e) {
      err << "lnprobe " << command->get_name() << ": " << e.what() << "\n";
      return kExitData;
    } catch (const std::exception& e) {
      err << "lnprobe " << command->get_name() << ": " << e.what() << "\n";
      return kExitData;
    }
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace lnprobe::cli
