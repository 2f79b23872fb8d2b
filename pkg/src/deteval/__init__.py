"""deteval: dataset preparation, detection metrics, reference losses,
fixed-effect statistics, and desirability-based model selection for
object-detection studies."""

__version__ = "0.1.0"

from .annotations import (
    AnnotatedImage,
    AnnotationError,
    BoundingBox,
    ClassLabel,
    ClassRegistry,
    Detection,
    GroundTruthObject,
    RegistryError,
    format_yolo_annotation,
    format_yolo_prediction,
    giou,
    iou,
    parse_yolo_annotation,
    parse_yolo_prediction,
)
from .desirability import (
    Candidate,
    DesirabilityProfile,
    RankedCandidate,
    ResponseGoal,
    desirability_of,
    overall_desirability,
    select_best,
)
from .losses import (
    CellPrediction,
    CellTarget,
    LossConfig,
    classification_loss,
    giou_loss,
    hard_swish,
    objectness_loss,
    swish,
)
from .metrics import (
    ConfusionMatrix,
    EvalSample,
    EvaluationReport,
    HeightRecord,
    MatchReport,
    MetricValue,
    PRCurve,
    average_precision,
    bag_based_accuracy,
    confusion_matrix,
    detection_accuracy,
    evaluate_detections,
    f1,
    load_height_records,
    match,
    mean_average_precision,
    pr_curve,
    precision,
    recall,
)
from .prep import (
    AugmentOp,
    AugmentPipeline,
    SplitRatio,
    SplitResult,
    TileRect,
    TileSpec,
    augment,
    plan_tiles,
    retile_annotations,
    sample_ids,
    split_dataset,
)
from .stats import (
    AnovaResult,
    ObservationTable,
    SampleStats,
    SWResult,
    TTestResult,
    anova_oneway,
    describe,
    f_sf,
    reg_inc_beta,
    shapiro_wilk,
    t_test_pairwise,
)

__all__ = [name for name in dir() if not name.startswith("_")]
