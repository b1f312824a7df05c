"""rvector Module Constants."""
import enum
import os

__author__ = "rvector Contributors"
__copyright__ = "Copyright 2026 rvector Contributors"
__license__ = "Apache License, Version 2.0"


DEFAULT_SAMPLE_RATE = int(os.environ.get("RVECTOR_SAMPLE_RATE", 16000))
DEFAULT_TOP_K = int(os.environ.get("RVECTOR_TOP_K", 600))
DEFAULT_P_TARGET = float(os.environ.get("RVECTOR_P_TARGET", 0.01))
DEFAULT_AUG_PROBABILITY = float(os.environ.get("RVECTOR_AUG_PROBABILITY", 0.6))
DEFAULT_LOG_LEVEL = os.environ.get("RVECTOR_LOG_LEVEL", "WARNING")

N_MELS = 80
FRAME_LENGTH_SECONDS = 0.025
FRAME_SHIFT_SECONDS = 0.010
LOG_FLOOR = 1e-10
MIN_CONCAT_SECONDS = 5.0

EMBEDDING_DIM = 256
BASE_WIDTH = 32
BOTTLENECK_EXPANSION = 4
POOLING_EPSILON = 1e-10
# the time axis is halved by stages 2, 3 and 4
TIME_REDUCTION = 8

RETRIEVAL_TOP_K = 10

SPEED_RATIOS = (0.9, 1.0, 1.1)
# class offset multiplier for each speed ratio, see aam.expand_speed_label
SPEED_LABEL_OFFSETS = {1.0: 0, 0.9: 1, 1.1: 2}
SPEED_PREFIX_FORMAT = "sp{}-"

FEATURE_MAGIC = b"FBNK"
CHECKPOINT_MAGIC = b"RVWT"
STORE_MAGIC = b"SPKE"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3


class BlockKind(enum.Enum):
    Basic = "basic"
    Bottleneck = "bottleneck"


class EnrollStrategy(enum.Enum):
    UttConcat = "utt-concat"
    EmbAvg = "emb-avg"
    ScoreAvg = "score-avg"


class CohortMode(enum.Enum):
    """How ``top_k`` selects the imposter cohort for AS-norm."""

    Adaptive = "adaptive"
    Fixed = "fixed"


class TrialLabel(enum.Enum):
    Target = "target"
    Nontarget = "nontarget"


trial_label_aliases = {
    "target": TrialLabel.Target,
    "nontarget": TrialLabel.Nontarget,
    "1": TrialLabel.Target,
    "0": TrialLabel.Nontarget,
}
