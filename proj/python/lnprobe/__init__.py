"""Language-neutrality probes for multilingual embeddings."""

from ._core import (
    EmbeddingSet,
    Error,
    LanguageClassifier,
    LinearMap,
    QEModel,
    __version__,
    align_words,
    alignment_f1,
    center,
    centroid,
    cluster,
    cosine_distance,
    cut_tree,
    default_lambda_grid,
    em_align,
    fit_projection,
    min_weight_edge_cover,
    pearson,
    qe_distance,
    retrieval_matrix,
    retrieve,
    train_language_classifier,
    train_qe,
    v_measure,
)

Error.code = property(lambda self: self.args[1] if len(self.args) > 1 else None)
Error.__str__ = lambda self: str(self.args[0]) if self.args else ""

__all__ = [
    "EmbeddingSet",
    "Error",
    "LanguageClassifier",
    "LinearMap",
    "QEModel",
    "__version__",
    "align_words",
    "alignment_f1",
    "center",
    "centroid",
    "cluster",
    "cosine_distance",
    "cut_tree",
    "default_lambda_grid",
    "em_align",
    "fit_projection",
    "min_weight_edge_cover",
    "pearson",
    "qe_distance",
    "retrieval_matrix",
    "retrieve",
    "train_language_classifier",
    "train_qe",
    "v_measure",
]
