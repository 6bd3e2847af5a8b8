// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

#include <unistd.h>

#include "cli.hpp"
#include "fixtures.hpp"
#include "lnprobe/alignment.hpp"
#include "lnprobe/geometry.hpp"
#include "lnprobe/langid.hpp"
#include "lnprobe/langsim.hpp"
#include "lnprobe/qe.hpp"
#include "lnprobe/retrieval.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace lnprobe;
using namespace lnprobe::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

char buf[256];

const char* fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// ----------------------------------------------------------- edge cover

Outcome edge_cover_optimality() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const auto s = static_cast<Eigen::Index>(1 + rng() % 4);
    const auto t = static_cast<Eigen::Index>(1 + rng() % 4);
    const Eigen::MatrixXd w = uniform_matrix(rng, s, t);
    worst = std::max(worst, std::abs(min_weight_edge_cover(w).cost - brute_force_edge_cover_cost(w)));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.require(worst <= 1e-9, fmt("max |cost - oracle| = %.3g", worst));
  o.require(secs < 10.0, fmt("took %.2f s", secs));
  o.detail = o.pass ? fmt("200 instances, max error %.2g, %.3f s", worst, secs) : o.detail;
  return o;
}

// ------------------------------------------------------------ projection

Outcome projection_recovery() {
  Outcome o;
  double worst = 0.0, worst_acc = 1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Eigen::MatrixXd x = gaussian(rng, 64, 8);
    const Eigen::MatrixXd w = gaussian(rng, 8, 8);
    const Eigen::VectorXd b = gaussian(rng, 8, 1);
    Eigen::MatrixXd y = x * w;
    y.rowwise() += b.transpose();
    const auto map = fit_projection(x, y, 0.0);
    worst = std::max({worst, (map.weights - w).cwiseAbs().maxCoeff(), (map.bias - b).cwiseAbs().maxCoeff()});

    const Eigen::MatrixXd src = gaussian(rng, 100, 16);
    const Eigen::MatrixXd tgt = src * random_rotation(rng, 16);
    const auto rot = fit_projection(src, tgt, 0.0);
    worst_acc = std::min(worst_acc, retrieve(project(reprs_from_rows(src), rot), reprs_from_rows(tgt)).accuracy);
  }
  o.require(worst <= 1e-6, fmt("max-abs parameter error %.3g", worst));
  o.require(worst_acc == 1.0, fmt("rotated retrieval accuracy %.4f", worst_acc));
  o.detail = o.pass ? fmt("20 seeds, max error %.2g, min accuracy %.1f", worst, worst_acc) : o.detail;
  return o;
}

// ------------------------------------------------------------- centering

Outcome centering_identity(const fs::path& workspace) {
  Outcome o;
  double worst_ratio = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const double scale = std::pow(10.0, uniform(rng, -3, 3));
    Eigen::MatrixXd rows = gaussian(rng, static_cast<Eigen::Index>(1 + rng() % 200), 12, scale);
    const Eigen::RowVectorXd offset = scale * 5.0 * gaussian(rng, 1, 12);
    rows.rowwise() += offset;
    const auto reprs = reprs_from_rows(rows);
    const auto centered = center(reprs, compute_centroid(reprs));
    const double ratio = compute_centroid(centered).vector.cwiseAbs().maxCoeff() / rows.cwiseAbs().maxCoeff();
    worst_ratio = std::max(worst_ratio, ratio);
  }
  o.require(worst_ratio <= 1e-6, fmt("library centroid ratio %.3g", worst_ratio));

  // centroid -> center -> centroid through the command line, on stored f32 data.
  const auto en = (workspace / "en.emb1").string();
  const auto centered = (workspace / "out" / "en.centered.accept.emb1").string();
  std::ostringstream out, err;
  const int rc = cli::dispatch({"lnprobe", "center", en, centered}, out, err);
  o.require(rc == 0, "center exited with " + std::to_string(rc) + ": " + err.str());
  double cli_ratio = 0.0;
  if (rc == 0) {
    const auto original = load_embedding_set(en);
    for (const char* source : {"mean", "cls"}) {
      std::ostringstream report;
      cli::dispatch({"lnprobe", "centroid", centered, "--all-layers", "--source", source}, report, err);
      const auto rows = nlohmann::json::parse(report.str()).at("rows");
      for (const auto& row : rows) {
        const auto layer = row.at("layer").get<std::size_t>();
        double magnitude = 0.0;
        for (const auto& s : original.sentences) {
          magnitude = std::max({magnitude, static_cast<double>(s.token_vectors[layer].cwiseAbs().maxCoeff()),
                                static_cast<double>(s.cls_vectors[layer].cwiseAbs().maxCoeff())});
        }
        cli_ratio = std::max(cli_ratio, row.at("linf").get<double>() / magnitude);
      }
    }
  }
  o.require(cli_ratio <= 1e-6, fmt("CLI centroid ratio %.3g", cli_ratio));
  o.detail = o.pass ? fmt("50 corpora max ratio %.2g; CLI round trip max ratio %.2g", worst_ratio, cli_ratio)
                    : o.detail;
  return o;
}

// --------------------------------------------------- language-shift benchmark

Outcome language_shift_benchmark() {
  Outcome o;
  const Eigen::Index dim = 32, n_eval = 200, n_fit = 500;
  double min_projected = 1.0, max_plain = 0.0;
  std::string trace;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Eigen::MatrixXd latent_eval = gaussian(rng, n_eval, dim);
    const Eigen::MatrixXd latent_fit = gaussian(rng, n_fit, dim);
    LangReprs eval, fit;
    for (const char* lang : {"en", "xa", "xb"}) {
      const Eigen::RowVectorXd shift = 3.0 * gaussian(rng, 1, dim);
      auto language = [&](const Eigen::MatrixXd& latent) {
        Eigen::MatrixXd m = latent + gaussian(rng, latent.rows(), dim, 0.1);
        m.rowwise() += shift;
        return reprs_from_rows(m);
      };
      eval[lang] = language(latent_eval);
      fit[lang] = language(latent_fit);
    }
    RetrievalOptions plain_opts;
    RetrievalOptions centered_opts;
    centered_opts.transform = Transform::Centered;
    RetrievalOptions projected_opts;
    projected_opts.transform = Transform::Projected;
    projected_opts.fit_corpus = &fit;
    const double plain = mean_accuracy(retrieval_matrix(eval, plain_opts));
    const double centered = mean_accuracy(retrieval_matrix(eval, centered_opts));
    const double projected = mean_accuracy(retrieval_matrix(eval, projected_opts));
    o.require(plain < centered, fmt("seed plain %.4f !< centered %.4f", plain, centered));
    o.require(centered <= projected, fmt("centered %.4f > projected %.4f", centered, projected));
    o.require(projected >= 0.99, fmt("projected %.4f < 0.99", projected));
    min_projected = std::min(min_projected, projected);
    max_plain = std::max(max_plain, plain);
    if (seed == 0) trace = fmt("seed 0: plain %.3f, centered %.3f, projected %.3f", plain, centered, projected);
  }
  o.detail = o.pass ? trace + fmt("; max plain %.3f, min projected %.3f", max_plain, min_projected) : o.detail;
  return o;
}

// --------------------------------------------------------------- V-measure

Outcome v_measure_oracle() {
  Outcome o;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t n = 1 + rng() % 12;
    const int kk = 1 + static_cast<int>(rng() % n), kc = 1 + static_cast<int>(rng() % n);
    std::vector<int> clusters(n), classes(n);
    for (std::size_t i = 0; i < n; ++i) {
      clusters[i] = static_cast<int>(rng() % kk);
      classes[i] = static_cast<int>(rng() % kc);
    }
    const auto got = v_measure_labels(clusters, classes);
    const auto want = direct_v_measure(clusters, classes);
    worst = std::max({worst, std::abs(got.homogeneity - want.h), std::abs(got.completeness - want.c),
                      std::abs(got.v - want.v)});
  }
  o.require(worst <= 1e-12, fmt("max deviation %.3g", worst));
  const FamilyLabeling fam = {{"de", "g"}, {"nl", "g"}, {"fr", "r"}, {"es", "r"}, {"hi", "i"}};
  const auto perfect = v_measure({{"de", "nl"}, {"es", "fr"}, {"hi"}}, fam);
  o.require(perfect.v == 1.0, fmt("perfect partition gives %.17g", perfect.v));
  o.detail = o.pass ? fmt("100 partitions, max deviation %.2g; perfect = 1.0", worst) : o.detail;
  return o;
}

// ------------------------------------------------------------ alignment F1

AlignmentScores set_oracle(const LinkSet& a, const GoldAlignment& gold) {
  LinkSet in_possible, in_sure;
  std::set_intersection(a.begin(), a.end(), gold.possible.begin(), gold.possible.end(),
                        std::inserter(in_possible, in_possible.end()));
  std::set_intersection(a.begin(), a.end(), gold.sure.begin(), gold.sure.end(),
                        std::inserter(in_sure, in_sure.end()));
  AlignmentScores s;
  s.precision = a.empty() ? 0.0 : static_cast<double>(in_possible.size()) / static_cast<double>(a.size());
  s.recall = gold.sure.empty() ? 0.0 : static_cast<double>(in_sure.size()) / static_cast<double>(gold.sure.size());
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

Outcome alignment_f1_oracle() {
  Outcome o;
  GoldAlignment hand;
  hand.sure = {{0, 0}};
  hand.possible = {{0, 0}, {1, 1}};
  const auto h = alignment_f1({{0, 0}, {1, 0}}, hand);
  o.require(h.precision == 0.5 && h.recall == 1.0 && h.f1 == 2.0 / 3.0,
            fmt("hand case gives (%.17g, %.17g, %.17g)", h.precision, h.recall, h.f1));
  int mismatches = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    GoldAlignment gold;
    LinkSet a;
    const std::uint32_t s = 1 + rng() % 6, t = 1 + rng() % 6;
    for (std::uint32_t i = 0; i < s; ++i) {
      for (std::uint32_t j = 0; j < t; ++j) {
        const auto r = rng() % 5;
        if (r == 0) gold.sure.insert({i, j});
        if (r <= 1) gold.possible.insert({i, j});
        if (rng() % 3 == 0) a.insert({i, j});
      }
    }
    const auto got = alignment_f1(a, gold);
    const auto want = set_oracle(a, gold);
    if (got.precision != want.precision || got.recall != want.recall || got.f1 != want.f1) ++mismatches;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " of 100 random cases differ");
  o.detail = o.pass ? "hand case exact; 100 random link sets exact" : o.detail;
  return o;
}

// ----------------------------------------------------------------- Pearson

Outcome pearson_oracle() {
  Outcome o;
  double worst = 0.0, worst_affine = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + rng() % 100;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = uniform(rng, -10, 10);
      y[i] = uniform(rng, -1, 1) * x[i] + uniform(rng, -10, 10);
    }
    const double r = pearson(x, y);
    worst = std::max(worst, std::abs(r - direct_pearson(x, y)));
    const double a = uniform(rng, 0.01, 100), b = uniform(rng, -100, 100);
    std::vector<double> ax(n), neg(n);
    for (std::size_t i = 0; i < n; ++i) {
      ax[i] = a * x[i] + b;
      neg[i] = -a * x[i] + b;
    }
    worst_affine = std::max({worst_affine, std::abs(pearson(ax, y) - r), std::abs(pearson(y, ax) - r),
                             std::abs(pearson(neg, y) + r), std::abs(pearson(x, ax) - 1.0),
                             std::abs(pearson(x, neg) + 1.0)});
  }
  o.require(worst <= 1e-12, fmt("oracle deviation %.3g", worst));
  o.require(worst_affine <= 1e-12, fmt("affine invariance deviation %.3g", worst_affine));
  o.detail = o.pass ? fmt("100 series, oracle deviation %.2g, affine deviation %.2g", worst, worst_affine) : o.detail;
  return o;
}

// ------------------------------------------------------------ language ID

std::vector<LabeledRepr> orthogonal_clusters(Rng& rng, std::size_t per_class, Eigen::Index dim) {
  const std::vector<std::string> langs = {"aa", "bb", "cc", "dd"};
  std::vector<LabeledRepr> out;
  for (std::size_t k = 0; k < langs.size(); ++k) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
    mean(static_cast<Eigen::Index>(k)) = 4.0;
    for (std::size_t i = 0; i < per_class; ++i) {
      out.push_back({{mean + gaussian(rng, dim, 1, 0.5), ReprSource::MeanPool, 0}, langs[k]});
    }
  }
  return out;
}

Outcome langid_sanity() {
  Outcome o;
  Rng rng(2024);
  const auto train = orthogonal_clusters(rng, 250, 16);
  const auto holdout = orthogonal_clusters(rng, 250, 16);
  TrainingConfig cfg;
  cfg.epochs = 20;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 32;
  const double acc = evaluate_classifier(train_classifier(train, cfg), holdout).accuracy;
  o.require(acc >= 0.99, fmt("orthogonal holdout accuracy %.4f", acc));

  std::vector<LabeledRepr> same, same_holdout;
  const Eigen::VectorXd v = gaussian(rng, 16, 1);
  for (int i = 0; i < 400; ++i) {
    const std::string lang(2, static_cast<char>('a' + i % 4));
    same.push_back({{v, ReprSource::MeanPool, 0}, lang});
    same_holdout.push_back({{v, ReprSource::MeanPool, 0}, lang});
  }
  const double chance = evaluate_classifier(train_classifier(same, cfg), same_holdout).accuracy;
  o.require(std::abs(chance - 0.25) <= 0.1, fmt("identical-representation accuracy %.4f", chance));
  o.detail = o.pass ? fmt("orthogonal %.4f; identical %.4f (1/K = 0.25)", acc, chance) : o.detail;
  return o;
}

// ------------------------------------------------------------------- EM

Outcome em_alignment() {
  Outcome o;
  std::size_t runs = 0;
  double worst_rise = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Eigen::Index dim = 16;
    const Eigen::MatrixXd distortion = Eigen::MatrixXd::Identity(dim, dim) + 0.4 * gaussian(rng, dim, dim) / 4.0;
    const Eigen::RowVectorXd shift = gaussian(rng, 1, dim);
    std::vector<Eigen::MatrixXd> src, tgt;
    for (int s = 0; s < 40; ++s) {
      const auto words = static_cast<Eigen::Index>(2 + rng() % 6);
      Eigen::MatrixXd latent = gaussian(rng, words, dim);
      src.push_back(latent + gaussian(rng, words, dim, 0.1));
      Eigen::MatrixXd t = latent.colwise().reverse() * distortion + gaussian(rng, words, dim, 0.1);
      t.rowwise() += shift;
      tgt.push_back(t);
    }
    const auto em = em_align_project(src, tgt, 5);
    const auto zero = em_align_project(src, tgt, 0);
    bool exact = true;
    for (std::size_t k = 0; k < src.size(); ++k) {
      exact = exact && align_words(src[k], tgt[k]).links == zero.alignments[k].links;
    }
    o.require(exact, "iteration 0 differs from plain alignment (seed " + std::to_string(seed) + ")");
    o.require(em.iteration_costs.size() == 6, "expected 6 recorded costs");
    const double plain_cost = [&] {
      double c = 0;
      for (std::size_t k = 0; k < src.size(); ++k) c += align_words(src[k], tgt[k]).cost;
      return c;
    }();
    o.require(em.iteration_costs.front() == plain_cost, "iteration 0 cost differs from plain alignment cost");
    for (std::size_t i = 1; i < em.iteration_costs.size(); ++i) {
      const double rise = em.iteration_costs[i] - em.iteration_costs[i - 1];
      worst_rise = std::max(worst_rise, rise);
      o.require(rise <= 1e-9 * std::max(1.0, em.iteration_costs[i - 1]),
                fmt("cost rose by %.3g at iteration %.0f", rise, static_cast<double>(i)) +
                    (" (seed " + std::to_string(seed) + ")"));
    }
    ++runs;
  }
  o.detail = o.pass ? fmt("%.0f corpora x 5 iterations, largest increase %.3g", static_cast<double>(runs), worst_rise)
                    : o.detail;
  return o;
}

// ------------------------------------------------------------ determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome cli_determinism(const fs::path& ws) {
  Outcome o;
  const auto p = [&](const std::string& rel) { return (ws / rel).string(); };
  const std::vector<std::string> all = {p("en.emb1"), p("de.emb1"), p("fr.emb1"), p("hi.emb1")};
  auto with = [](std::vector<std::string> head, const std::vector<std::string>& tail) {
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  };
  const std::vector<std::string> qe = {"--src", p("qe/src.emb1"), "--mt", p("qe/mt.emb1"), "--labels",
                                       p("qe/labels.tsv"), "--src-text", p("qe/src.txt"), "--mt-text",
                                       p("qe/mt.txt")};
  struct Case {
    std::vector<std::string> args;
    std::vector<std::string> artifacts;
  };
  const std::vector<Case> cases = {
      {{"info", p("en.emb1")}, {}},
      {with({"centroid", "--all-layers"}, all), {}},
      {{"center", p("de.emb1"), p("out/de.centered.emb1")}, {"out/de.centered.emb1"}},
      {{"fit-proj", p("fit/de.emb1"), p("fit/en.emb1"), "--model", p("out/de-en"), "--all-layers"},
       {"out/de-en.layer0.json", "out/de-en.layer2.bin"}},
      {with({"retrieve", "--all-layers"}, all), {}},
      {with({"retrieve", "--transform", "centered", "--per-pair", "--format", "text"}, all), {}},
      {with(with({"retrieve", "--transform", "projected", "--format", "csv"}, all),
            {"--fit", p("fit/en.emb1"), p("fit/de.emb1"), p("fit/fr.emb1"), p("fit/hi.emb1")}),
       {}},
      {{"align", p("en.emb1"), p("de.emb1"), "--alignments", p("out/align.txt")}, {"out/align.txt"}},
      {{"align-eval", p("en.emb1"), p("de.emb1"), "--gold", p("gold.en-de.txt"), "--all-layers"}, {}},
      {{"em-align", p("en.emb1"), p("de.emb1"), "--iterations", "3", "--gold", p("gold.en-de.txt"), "--alignments",
        p("out/em.txt"), "--map-out", p("out/em-map")},
       {"out/em.txt", "out/em-map.json", "out/em-map.bin"}},
      {with({"cluster", "--all-layers"}, all), {}},
      {with({"vmeasure", "--families", p("families.tsv"), "--all-layers"}, all), {}},
      {with({"export-centroids", "--csv", p("out/centroids.csv")}, all), {"out/centroids.csv"}},
      {{"langid-train", p("langid.tsv"), "--model", p("out/langid"), "--epochs", "5", "--seed", "3"},
       {"out/langid.json", "out/langid.bin"}},
      {{"langid-eval", p("langid.tsv"), "--model", p("out/langid"), "--format", "text"}, {}},
      {with({"qe-score", "--all-layers"}, qe), {}},
      {with(with({"qe-train", "--model", p("out/qe"), "--valid-src", p("qe/valid_src.emb1"), "--valid-mt",
                  p("qe/valid_mt.emb1"), "--valid-labels", p("qe/valid_labels.tsv")},
                 qe),
            {}),
       {"out/qe.json", "out/qe.bin"}},
      {with({"qe-eval", "--model", p("out/qe")}, qe), {}},
  };

  std::set<std::string> covered;
  for (const auto& c : cases) {
    std::vector<std::string> argv = {"lnprobe"};
    argv.insert(argv.end(), c.args.begin(), c.args.end());
    std::string first_out, first_err;
    std::vector<std::string> first_artifacts;
    for (int round = 0; round < 2; ++round) {
      std::ostringstream out, err;
      const int rc = cli::dispatch(argv, out, err);
      o.require(rc == 0, c.args[0] + " exited with " + std::to_string(rc) + ": " + err.str());
      std::vector<std::string> artifacts;
      for (const auto& a : c.artifacts) artifacts.push_back(slurp(ws / a));
      if (round == 0) {
        first_out = out.str();
        first_artifacts = artifacts;
      } else {
        o.require(!first_out.empty() && out.str() == first_out, c.args[0] + ": report differs between runs");
        o.require(artifacts == first_artifacts, c.args[0] + ": written files differ between runs");
      }
    }
    covered.insert(c.args[0]);
  }
  o.require(covered.size() == 16, std::to_string(covered.size()) + " of 16 subcommands covered");
  o.detail = o.pass ? fmt("%.0f invocations over %.0f subcommands byte-identical across two runs",
                          static_cast<double>(cases.size()), static_cast<double>(covered.size()))
                    : o.detail;
  return o;
}

}  // namespace

int main() {
  const auto ws = fs::temp_directory_path() / ("lnprobe_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(ws);
  write_cli_workspace(ws);
  fs::create_directories(ws / "out");

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"edge-cover optimality", edge_cover_optimality},
      {"projection recovery", projection_recovery},
      {"centering identity", [&] { return centering_identity(ws); }},
      {"synthetic language-shift benchmark", language_shift_benchmark},
      {"V-measure oracle", v_measure_oracle},
      {"alignment F1 oracle", alignment_f1_oracle},
      {"Pearson oracle", pearson_oracle},
      {"language-ID sanity", langid_sanity},
      {"EM alignment", em_alignment},
      {"CLI determinism", [&] { return cli_determinism(ws); }},
  };

  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s  %-36s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  fs::remove_all(ws);
  return failures == 0 ? 0 : 1;
}
