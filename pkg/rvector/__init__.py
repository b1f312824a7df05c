"""
Deep r-vector speaker verification toolkit.
~~~~

:author: rvector Contributors
:copyright: Copyright 2026 rvector Contributors
:license: Apache License, Version 2.0

"""
from importlib_metadata import version

from . import metrics, reference, scoring
from .aam import AamConfig, ClassifierHead, aam_grad, aam_loss, expand_speed_label
from .audio import (
    AudioBuffer,
    AugmentConfig,
    add_noise,
    augment_online,
    concat_short_utterances,
    read_wav,
    reverberate,
    speed_perturb,
)
from .config import Settings, load_config
from .constants import (
    DEFAULT_P_TARGET,
    DEFAULT_TOP_K,
    BlockKind,
    CohortMode,
    EnrollStrategy,
    TrialLabel,
)
from .errors import (
    BadMagicError,
    DegenerateCohortError,
    DimensionMismatchError,
    FormatError,
    MissingIdsError,
    RVectorError,
    TrialFileError,
    TruncatedPayloadError,
)
from .fbank import FeatureMatrix, cmn, compute_fbank
from .metrics import (
    DcfParams,
    DetCurve,
    EvaluationReport,
    det_sweep,
    eer,
    mean_average_precision,
    min_dcf,
    operating_point,
)
from .network import (
    NET_SPECS,
    Embedding,
    NetSpec,
    build_network,
    forward,
    param_count,
    stats_pool,
)
from .pipeline import retrieve_topk, run_verification
from .scoring import (
    Cohort,
    ScoreSet,
    asnorm,
    build_cohort,
    combine_enrollment,
    cosine_score,
    fuse_scores,
)
from .store import (
    EmbeddingStore,
    TrialPair,
    TrialSet,
    parse_trials,
    read_store,
    write_store,
)
from .training import StagePlan, lr_at, sample_segment, train_head, train_two_stage

__author__ = "rvector Contributors"
__copyright__ = "Copyright 2026 rvector Contributors"
__license__ = "Apache License, Version 2.0"
__distribution__ = "rvector-eval"
__version__ = version(__distribution__)
__all__ = [
    "AamConfig",
    "aam_grad",
    "aam_loss",
    "add_noise",
    "asnorm",
    "AudioBuffer",
    "augment_online",
    "AugmentConfig",
    "BadMagicError",
    "BlockKind",
    "build_cohort",
    "build_network",
    "ClassifierHead",
    "cmn",
    "Cohort",
    "CohortMode",
    "combine_enrollment",
    "compute_fbank",
    "concat_short_utterances",
    "cosine_score",
    "DcfParams",
    "DEFAULT_P_TARGET",
    "DEFAULT_TOP_K",
    "DegenerateCohortError",
    "det_sweep",
    "DetCurve",
    "DimensionMismatchError",
    "eer",
    "Embedding",
    "EmbeddingStore",
    "EnrollStrategy",
    "EvaluationReport",
    "expand_speed_label",
    "FeatureMatrix",
    "FormatError",
    "forward",
    "fuse_scores",
    "load_config",
    "lr_at",
    "mean_average_precision",
    "metrics",
    "min_dcf",
    "MissingIdsError",
    "NET_SPECS",
    "NetSpec",
    "operating_point",
    "param_count",
    "parse_trials",
    "read_store",
    "read_wav",
    "reference",
    "retrieve_topk",
    "reverberate",
    "run_verification",
    "RVectorError",
    "sample_segment",
    "scoring",
    "ScoreSet",
    "Settings",
    "speed_perturb",
    "StagePlan",
    "stats_pool",
    "train_head",
    "train_two_stage",
    "TrialFileError",
    "TrialLabel",
    "TrialPair",
    "TrialSet",
    "TruncatedPayloadError",
    "write_store",
    "__author__",
    "__copyright__",
    "__license__",
    "__distribution__",
    "__version__",
]
