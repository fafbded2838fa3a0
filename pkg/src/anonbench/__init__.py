"""anonbench: quantify how image anonymization changes retrieval quality.

The package compares retrieval results over anonymized images against the
pseudo ground truth defined by a baseline model on the original images,
scoring each scenario with mAP and mean nDCG and validating the metrics
against downstream classification via Pearson correlation.
"""

from .anonymize import (
    Anonymizer,
    anonymize_image,
    blur_region,
    mask_region,
    pixelate_region,
    select_boxes,
)
from .crops import AdaptionBatch, CropSpec, make_adaption_batch, sample_crop
from .embedder import GridHistogramEmbedder, grid_features
from .embfile import EmbeddingMatrix, read_embeddings, write_embeddings
from .experiment import (
    ExperimentConfig,
    enumerate_scenarios,
    emit_summary_tables,
    load_config,
    run_experiment,
)
from .images import load_image, luminance, save_image
from .manifest import BoundingBox, DatasetManifest, ImageRecord, load_manifest, save_manifest
from .metrics import (
    MetricReport,
    QueryScore,
    average_precision,
    correlation_matrix,
    dcg,
    idcg,
    mean_average_precision,
    mndcg,
    ndcg,
    pearson_correlation,
    score_scenario,
)
from .probes import (
    CosineKNNClassifier,
    LabeledEmbeddings,
    LinearProbe,
    evaluate_accuracy,
    knn_classify,
    read_labels_csv,
    train_linear_probe,
)
from .retrieval import (
    CosineRetriever,
    PseudoGroundTruth,
    RankedList,
    ScenarioSpec,
    build_pseudo_ground_truth,
    cosine_similarity,
    cutoff,
    rank_database,
    read_rankings,
    run_scenario,
    write_rankings,
)
from .synthetic import make_document_corpus

__version__ = "0.1.0"

__all__ = [
    "AdaptionBatch",
    "Anonymizer",
    "BoundingBox",
    "CosineKNNClassifier",
    "CosineRetriever",
    "CropSpec",
    "DatasetManifest",
    "EmbeddingMatrix",
    "ExperimentConfig",
    "GridHistogramEmbedder",
    "ImageRecord",
    "LabeledEmbeddings",
    "LinearProbe",
    "MetricReport",
    "PseudoGroundTruth",
    "QueryScore",
    "RankedList",
    "ScenarioSpec",
    "anonymize_image",
    "average_precision",
    "blur_region",
    "build_pseudo_ground_truth",
    "correlation_matrix",
    "cosine_similarity",
    "cutoff",
    "dcg",
    "emit_summary_tables",
    "enumerate_scenarios",
    "evaluate_accuracy",
    "grid_features",
    "idcg",
    "knn_classify",
    "load_config",
    "load_image",
    "load_manifest",
    "luminance",
    "make_adaption_batch",
    "make_document_corpus",
    "mask_region",
    "mean_average_precision",
    "mndcg",
    "ndcg",
    "pearson_correlation",
    "pixelate_region",
    "rank_database",
    "read_embeddings",
    "read_labels_csv",
    "read_rankings",
    "run_experiment",
    "run_scenario",
    "sample_crop",
    "save_image",
    "save_manifest",
    "score_scenario",
    "select_boxes",
    "train_linear_probe",
    "write_embeddings",
    "write_rankings",
]
