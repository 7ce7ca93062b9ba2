"""faceq: face image quality targets, prediction, and evaluation.

Turns sparse pairwise human judgments and matcher similarity scores into
per-image quality targets, trains an RBF-kernel support vector regressor on
precomputed feature vectors, and evaluates quality measures by their effect
on recognition error rates.
"""

from .corpus import (
    FaceRecord,
    FeatureCorpus,
    MediaKind,
    QualityAssignment,
    ScoreSet,
    Template,
    validate_partition,
)
from .pairwise import (
    Coarse,
    Comparison,
    ComparisonSet,
    Response,
    Session,
    SessionConfig,
    SessionState,
    TutorialPair,
    coarsen,
    consistency_verdict,
    create_session,
    export_comparisons,
    record_response,
)
from .matcomp import (
    CompletionParams,
    RatingMatrix,
    aggregate_median,
    complete_matrix,
    normalize_worker_rows,
    required_comparisons,
    worker_concordance,
)
from .mqv import ProbeScoreProfile, compute_mqv, z_score
from .svr import (
    QualityModel,
    SvrParams,
    TargetKind,
    grid_search,
    load_model,
    predict,
    predict_many,
    rbf,
    save_model,
    subject_disjoint_folds,
    train,
)
from .evaluation import (
    ErrorKind,
    EvrCurve,
    FuseRule,
    GateResult,
    apply_failure_floor,
    evr_curve,
    fmr,
    fnmr,
    fuse,
    gate_template,
    quality_sweep,
    roc,
    spearman,
    template_verify,
    threshold_at_fmr,
)
from .pipeline import (
    SynthNoise,
    protocol_cross,
    protocol_within,
    synth_corpus,
)

__version__ = "0.1.0"
