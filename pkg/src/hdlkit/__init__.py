"""hdlkit: hierarchical distributional-label learning toolkit.

Turns multi-annotator labels into hierarchical distributional targets, trains
and evaluates distributional classifiers over ingested document embeddings,
and runs the corpus analyses (composition tables, coping conditionals,
interrupted time-series).
"""

__version__ = "0.1.0"

from .schema import (
    AnnotationRecord,
    CategoryBlock,
    DistributionalLabel,
    LabelSchema,
    PostLabelSet,
    aggregate_annotations,
    default_schema,
    interrater_agreement,
    normalize_drop_na,
)
from .corpus import (
    FeatureVector,
    LabeledExample,
    LabeledTarget,
    Post,
    SplitAssignment,
    candidate_filter,
    hash_featurize,
    join,
    load_embeddings,
    split_dataset,
    stratified_sample,
)
from .models import (
    EmbedMlpClassifier,
    HdlnClassifier,
    HdlnPrediction,
    TrainConfig,
    blend,
    hdl_objective,
    hdln_loss,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .metrics import (
    BinaryReport,
    DistReport,
    binary_metrics,
    canberra,
    clark,
    cosine,
    dist_accuracy,
    evaluate_run,
    intersection,
    summarize_runs,
)
from .analysis import (
    CompositionTable,
    ItsFit,
    ItsSeries,
    composition_table,
    coping_conditionals,
    its_fit,
    monthly_proportions,
)

__all__ = [
    "__version__",
    "AnnotationRecord",
    "CategoryBlock",
    "DistributionalLabel",
    "LabelSchema",
    "PostLabelSet",
    "aggregate_annotations",
    "default_schema",
    "interrater_agreement",
    "normalize_drop_na",
    "FeatureVector",
    "LabeledExample",
    "LabeledTarget",
    "Post",
    "SplitAssignment",
    "candidate_filter",
    "hash_featurize",
    "join",
    "load_embeddings",
    "split_dataset",
    "stratified_sample",
    "EmbedMlpClassifier",
    "HdlnClassifier",
    "HdlnPrediction",
    "TrainConfig",
    "blend",
    "hdl_objective",
    "hdln_loss",
    "load_checkpoint",
    "save_checkpoint",
    "train",
    "BinaryReport",
    "DistReport",
    "binary_metrics",
    "canberra",
    "clark",
    "cosine",
    "dist_accuracy",
    "evaluate_run",
    "intersection",
    "summarize_runs",
    "CompositionTable",
    "ItsFit",
    "ItsSeries",
    "composition_table",
    "coping_conditionals",
    "its_fit",
    "monthly_proportions",
]
