"""Generate class labels for unlabelled time series from a few labelled representatives."""

__version__ = "0.1.0"

from .dataset import (
    RepresentativeSet,
    TimeSeriesDataset,
    load_dataset,
    load_ucr_multivariate,
    load_ucr_tsv,
    select_representatives,
    znormalize,
)
from .aecs import AecsModel, CompactMatrix, encode, train_aecs
from .clustering import (
    ClusteringResult,
    DistanceMeasure,
    best_clustering,
    distance,
    hierarchical_cluster,
    modified_hubert,
)
from .labeling import (
    LabelVector,
    cluster_class_associate,
    label_discriminator,
    self_correct,
)
from .vae import VaeModel, sample_vae, train_vae
from .evaluate import (
    EvaluationReport,
    decision_tree_classify,
    evaluate_pipeline,
    export_embedding_2d,
    knn_classify,
)
from .pipeline import LabelRun, generate_labels
