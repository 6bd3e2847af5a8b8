#include <map>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lnprobe/alignment.hpp"
#include "lnprobe/embstore.hpp"
#include "lnprobe/error.hpp"
#include "lnprobe/geometry.hpp"
#include "lnprobe/langid.hpp"
#include "lnprobe/langsim.hpp"
#include "lnprobe/qe.hpp"
#include "lnprobe/retrieval.hpp"

namespace py = pybind11;
using namespace lnprobe;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Links = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

// Rows of a matrix become mean-pool representations of one layer.
std::vector<SentenceRepr> to_reprs(const Eigen::MatrixXd& rows) {
  std::vector<SentenceRepr> out(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out[static_cast<std::size_t>(i)].vector = rows.row(i).transpose();
  return out;
}

RowMatrix to_rows(const std::vector<SentenceRepr>& reprs) { return stack_rows(reprs); }

LangReprs to_lang_reprs(const std::map<std::string, Eigen::MatrixXd>& corpus) {
  LangReprs out;
  for (const auto& [lang, rows] : corpus) out[lang] = to_reprs(rows);
  return out;
}

Links to_pairs(const LinkSet& links) {
  Links out;
  for (const auto& l : links) out.emplace_back(l.source, l.target);
  return out;
}

LinkSet to_links(const Links& pairs) {
  LinkSet out;
  for (const auto& [s, t] : pairs) out.insert({s, t});
  return out;
}

std::vector<QERecord> to_records(const Eigen::MatrixXd& src, const Eigen::MatrixXd& mt,
                                 const std::vector<double>& labels) {
  if (src.rows() != mt.rows() || static_cast<std::size_t>(src.rows()) != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, "src, mt and labels must have the same length (" +
                                               std::to_string(src.rows()) + ", " + std::to_string(mt.rows()) +
                                               ", " + std::to_string(labels.size()) + ")");
  }
  std::vector<QERecord> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out[i].source_repr.vector = src.row(r).transpose();
    out[i].mt_repr.vector = mt.row(r).transpose();
    out[i].hter = labels[i];
  }
  return out;
}

std::vector<LabeledRepr> to_labeled(const Eigen::MatrixXd& rows, const std::vector<std::string>& langs) {
  if (static_cast<std::size_t>(rows.rows()) != langs.size()) {
    throw Error(ErrorCode::LengthMismatch, "got " + std::to_string(rows.rows()) + " rows and " +
                                               std::to_string(langs.size()) + " labels");
  }
  std::vector<LabeledRepr> out(langs.size());
  for (std::size_t i = 0; i < langs.size(); ++i) {
    out[i].repr.vector = rows.row(static_cast<Eigen::Index>(i)).transpose();
    out[i].lang = langs[i];
  }
  return out;
}

Centroid to_centroid(const std::string& lang, const Eigen::VectorXd& v) {
  Centroid c;
  c.lang = lang;
  c.vector = v;
  c.sample_count = 1;
  return c;
}

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json py_to_json(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Language-neutrality probes for multilingual embeddings";
  m.attr("__version__") = LNPROBE_VERSION;

  static PyObject* error_type = py::exception<Error>(m, "Error", PyExc_ValueError).release().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const auto args = py::make_tuple(e.what(), std::string(error_code_name(e.code())));
      PyErr_SetObject(error_type, args.ptr());
    }
  });

  py::class_<EmbeddingSet>(m, "EmbeddingSet")
      .def(py::init([](std::string lang, std::size_t num_layers, std::size_t hidden_dim) {
             EmbeddingSet s;
             s.lang = std::move(lang);
             s.num_layers = num_layers;
             s.hidden_dim = hidden_dim;
             return s;
           }),
           py::arg("lang"), py::arg("num_layers"), py::arg("hidden_dim"))
      .def_static("load", &load_embedding_set, py::arg("path"))
      .def("save", [](const EmbeddingSet& s, const std::filesystem::path& p) { save_embedding_set(s, p); },
           py::arg("path"))
      .def_readwrite("lang", &EmbeddingSet::lang)
      .def_readonly("num_layers", &EmbeddingSet::num_layers)
      .def_readonly("hidden_dim", &EmbeddingSet::hidden_dim)
      .def_property(
          "manifest", [](const EmbeddingSet& s) { return json_to_py(s.manifest); },
          [](EmbeddingSet& s, const py::object& o) { s.manifest = py_to_json(o); })
      .def("__len__", &EmbeddingSet::size)
      .def(
          "add_sentence",
          [](EmbeddingSet& s, std::vector<FloatRows> tokens, std::vector<Eigen::VectorXf> cls,
             std::vector<std::vector<std::uint32_t>> word_groups) {
            SentenceEmbeddings sent{std::move(tokens), std::move(cls), std::move(word_groups)};
            s.sentences.push_back(std::move(sent));
            try {
              s.validate();
            } catch (...) {
              s.sentences.pop_back();
              throw;
            }
          },
          py::arg("token_vectors"), py::arg("cls_vectors"), py::arg("word_groups"))
      .def(
          "token_vectors",
          [](const EmbeddingSet& s, std::size_t sentence, std::size_t layer) {
            if (sentence >= s.size() || layer >= s.num_layers) {
              throw Error(ErrorCode::IndexOutOfRange, "sentence " + std::to_string(sentence) + " layer " +
                                                          std::to_string(layer));
            }
            return s.sentences[sentence].token_vectors[layer];
          },
          py::arg("sentence"), py::arg("layer"))
      .def(
          "word_groups", [](const EmbeddingSet& s, std::size_t sentence) { return s.sentences.at(sentence).word_groups; },
          py::arg("sentence"))
      .def(
          "sentence_reprs",
          [](const EmbeddingSet& s, std::size_t layer, const std::string& source) {
            return to_rows(sentence_reprs(s, layer, parse_repr_source(source)));
          },
          py::arg("layer"), py::arg("source") = "mean")
      .def(
          "word_vectors",
          [](const EmbeddingSet& s, std::size_t sentence, std::size_t layer) {
            return RowMatrix(word_vectors(s, sentence, layer));
          },
          py::arg("sentence"), py::arg("layer"))
      .def("__eq__", &EmbeddingSet::operator==);

  m.def(
      "cosine_distance",
      [](const Eigen::VectorXd& u, const Eigen::VectorXd& v) { return cosine_distance(u, v); }, py::arg("u"),
      py::arg("v"));
  m.def(
      "centroid", [](const Eigen::MatrixXd& rows) { return Eigen::VectorXd(compute_centroid(to_reprs(rows)).vector); },
      py::arg("rows"), "Mean of the rows.");
  m.def(
      "center",
      [](const Eigen::MatrixXd& rows) {
        const auto reprs = to_reprs(rows);
        return to_rows(center(reprs, compute_centroid(reprs)));
      },
      py::arg("rows"), "Rows minus their own mean.");

  py::class_<LinearMap>(m, "LinearMap")
      .def_readonly("weights", &LinearMap::weights)
      .def_readonly("bias", &LinearMap::bias)
      .def_readonly("ridge_lambda", &LinearMap::ridge_lambda)
      .def_property_readonly("input_dim", &LinearMap::input_dim)
      .def_property_readonly("output_dim", &LinearMap::output_dim)
      .def_static("load", &load_linear_map, py::arg("basename"))
      .def("save", [](const LinearMap& map, const std::filesystem::path& p) { save_linear_map(map, p); },
           py::arg("basename"))
      .def(
          "apply", [](const LinearMap& map, const Eigen::MatrixXd& rows) { return RowMatrix(apply_projection_rows(map, rows)); },
          py::arg("rows"));
  m.def("fit_projection", &fit_projection, py::arg("source"), py::arg("target"), py::arg("ridge_lambda") = 0.0,
        "Affine least-squares map with source @ weights + bias ~ target.");

  m.def(
      "retrieve",
      [](const Eigen::MatrixXd& source, const Eigen::MatrixXd& target, unsigned threads) {
        const auto r = retrieve(to_reprs(source), to_reprs(target), threads);
        return py::make_tuple(r.predictions, r.accuracy);
      },
      py::arg("source"), py::arg("target"), py::arg("threads") = 1,
      "Nearest-neighbour predictions and accuracy for index-aligned rows.");
  m.def(
      "retrieval_matrix",
      [](const std::map<std::string, Eigen::MatrixXd>& corpus, const std::string& transform, const std::string& pivot,
         const std::optional<std::map<std::string, Eigen::MatrixXd>>& fit, double ridge_lambda, unsigned threads) {
        const auto eval = to_lang_reprs(corpus);
        LangReprs fit_reprs;
        RetrievalOptions options;
        options.transform = parse_transform(transform);
        options.pivot = pivot;
        options.ridge_lambda = ridge_lambda;
        options.threads = threads;
        if (fit) {
          fit_reprs = to_lang_reprs(*fit);
          options.fit_corpus = &fit_reprs;
          options.centroid_corpus = &fit_reprs;
        }
        std::map<PairKey, double> out;
        for (const auto& [key, r] : retrieval_matrix(eval, options)) out[key] = r.accuracy;
        return out;
      },
      py::arg("corpus"), py::arg("transform") = "plain", py::arg("pivot") = "en", py::arg("fit") = py::none(),
      py::arg("ridge_lambda") = 0.0, py::arg("threads") = 1,
      "Accuracy for every ordered language pair of {lang: rows}.");

  m.def(
      "min_weight_edge_cover",
      [](const Eigen::MatrixXd& weights) {
        const auto c = min_weight_edge_cover(weights);
        return py::make_tuple(to_pairs(c.links), c.cost);
      },
      py::arg("weights"));
  m.def(
      "align_words",
      [](const Eigen::MatrixXd& source, const Eigen::MatrixXd& target) {
        const auto c = align_words(source, target);
        return py::make_tuple(to_pairs(c.links), c.cost);
      },
      py::arg("source"), py::arg("target"));
  m.def(
      "alignment_f1",
      [](const std::vector<Links>& predicted, const std::vector<Links>& sure,
         const std::optional<std::vector<Links>>& possible) {
        if (predicted.size() != sure.size() || (possible && possible->size() != sure.size())) {
          throw Error(ErrorCode::LengthMismatch, "predicted and gold must cover the same sentence pairs");
        }
        std::vector<LinkSet> pred;
        std::vector<GoldAlignment> gold(sure.size());
        for (std::size_t i = 0; i < sure.size(); ++i) {
          pred.push_back(to_links(predicted[i]));
          gold[i].sure = to_links(sure[i]);
          gold[i].possible = gold[i].sure;
          if (possible) {
            const auto p = to_links((*possible)[i]);
            gold[i].possible.insert(p.begin(), p.end());
          }
        }
        const auto s = corpus_alignment_f1(pred, gold);
        return py::make_tuple(s.precision, s.recall, s.f1);
      },
      py::arg("predicted"), py::arg("sure"), py::arg("possible") = py::none(),
      "Micro-averaged (precision, recall, f1) over sentence pairs.");
  m.def(
      "em_align",
      [](const std::vector<Eigen::MatrixXd>& source, const std::vector<Eigen::MatrixXd>& target,
         std::size_t iterations, double ridge_lambda, unsigned threads) {
        const auto r = em_align_project(source, target, iterations, ridge_lambda, threads);
        std::vector<Links> links;
        for (const auto& c : r.alignments) links.push_back(to_pairs(c.links));
        py::dict out;
        out["links"] = links;
        out["iteration_costs"] = r.iteration_costs;
        out["map"] = r.map;
        return out;
      },
      py::arg("source"), py::arg("target"), py::arg("iterations") = 5, py::arg("ridge_lambda") = 0.0,
      py::arg("threads") = 1);

  m.def(
      "cluster",
      [](const std::map<std::string, Eigen::VectorXd>& centroids) {
        std::vector<Centroid> cs;
        for (const auto& [lang, v] : centroids) cs.push_back(to_centroid(lang, v));
        return json_to_py(tree_to_json(agglomerative_cluster(cs)));
      },
      py::arg("centroids"), "Average-linkage tree over {lang: centroid} as a dict.");
  m.def(
      "cut_tree",
      [](const std::map<std::string, Eigen::VectorXd>& centroids, std::size_t k) {
        std::vector<Centroid> cs;
        for (const auto& [lang, v] : centroids) cs.push_back(to_centroid(lang, v));
        return cut_tree(agglomerative_cluster(cs), k);
      },
      py::arg("centroids"), py::arg("k"));
  m.def(
      "v_measure",
      [](const std::vector<int>& clusters, const std::vector<int>& classes) {
        const auto v = v_measure_labels(clusters, classes);
        return py::make_tuple(v.homogeneity, v.completeness, v.v);
      },
      py::arg("clusters"), py::arg("classes"), "(homogeneity, completeness, v) in nats.");

  py::class_<LinearClassifier>(m, "LanguageClassifier")
      .def_readonly("weights", &LinearClassifier::weights)
      .def_readonly("bias", &LinearClassifier::bias)
      .def_readonly("labels", &LinearClassifier::class_labels)
      .def_property_readonly("loss_history", [](const LinearClassifier& c) { return c.meta.loss_history; })
      .def_static("load", &load_classifier, py::arg("basename"))
      .def("save", [](const LinearClassifier& c, const std::filesystem::path& p) { save_classifier(c, p); },
           py::arg("basename"))
      .def(
          "predict",
          [](const LinearClassifier& c, const Eigen::MatrixXd& rows) {
            std::vector<std::string> out;
            for (Eigen::Index i = 0; i < rows.rows(); ++i) {
              out.push_back(c.class_labels[c.predict(rows.row(i).transpose())]);
            }
            return out;
          },
          py::arg("rows"))
      .def(
          "accuracy",
          [](const LinearClassifier& c, const Eigen::MatrixXd& rows, const std::vector<std::string>& langs) {
            return evaluate_classifier(c, to_labeled(rows, langs)).accuracy;
          },
          py::arg("rows"), py::arg("langs"));
  m.def(
      "train_language_classifier",
      [](const Eigen::MatrixXd& rows, const std::vector<std::string>& langs, std::size_t epochs, double learning_rate,
         std::size_t batch_size, double l2, std::uint64_t seed) {
        TrainingConfig config{epochs, learning_rate, batch_size, seed, l2};
        return train_classifier(to_labeled(rows, langs), config);
      },
      py::arg("rows"), py::arg("langs"), py::arg("epochs") = 10, py::arg("learning_rate") = 0.01,
      py::arg("batch_size") = 256, py::arg("l2") = 1e-4, py::arg("seed") = 42);

  m.def(
      "pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson(x, y); },
      py::arg("x"), py::arg("y"));
  m.def(
      "qe_distance",
      [](const Eigen::MatrixXd& src, const Eigen::MatrixXd& mt, const std::string& transform,
         const LinearMap* map) {
        const std::vector<double> zeros(static_cast<std::size_t>(src.rows()), 0.0);
        return distance_score(to_records(src, mt, zeros), parse_transform(transform), map);
      },
      py::arg("src"), py::arg("mt"), py::arg("transform") = "plain", py::arg("map") = nullptr,
      "Cosine distance per sentence pair; centered uses each side's own mean.");

  py::class_<QEModel>(m, "QEModel")
      .def_readonly("weights", &QEModel::weights)
      .def_readonly("bias", &QEModel::bias)
      .def_readonly("ridge_lambda", &QEModel::ridge_lambda)
      .def_property_readonly("features", [](const QEModel& q) { return std::string(feature_mode_name(q.mode)); })
      .def_static("load", &load_qe_model, py::arg("basename"))
      .def("save", [](const QEModel& q, const std::filesystem::path& p) { save_qe_model(q, p); }, py::arg("basename"))
      .def(
          "predict",
          [](const QEModel& q, const Eigen::MatrixXd& src, const Eigen::MatrixXd& mt) {
            const std::vector<double> zeros(static_cast<std::size_t>(src.rows()), 0.0);
            return predict_qe(q, to_records(src, mt, zeros));
          },
          py::arg("src"), py::arg("mt"));
  m.def(
      "train_qe",
      [](const Eigen::MatrixXd& src, const Eigen::MatrixXd& mt, const std::vector<double>& labels,
         const std::string& features, double ridge_lambda) {
        return train_qe(to_records(src, mt, labels), parse_feature_mode(features), ridge_lambda);
      },
      py::arg("src"), py::arg("mt"), py::arg("labels"), py::arg("features") = "both", py::arg("ridge_lambda") = 1.0);
  m.def("default_lambda_grid", &default_lambda_grid);
}
