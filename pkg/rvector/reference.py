"""Published operating points of the deep r-vector systems, for desk checks."""
from typing import List, Optional, Tuple

from attrs import define

from .metrics import DcfParams

__author__ = "rvector Contributors"
__copyright__ = "Copyright 2026 rvector Contributors"
__license__ = "Apache License, Version 2.0"


@define(frozen=True, slots=True)
class ReferenceSystem:
    """One evaluated system: FNR/FPR are taken at the minDCF threshold."""

    system: str
    params_m: Optional[float]
    min_dcf: float
    eer: float
    fnr: float
    fpr: float


REFERENCE_SYSTEMS: Tuple[ReferenceSystem, ...] = (
    # "no-sp": trained without speed perturbation
    ReferenceSystem("ResNet34 no-sp", 6.63, 0.3958, 7.981, 35.29, 0.043),
    ReferenceSystem("ResNet34", 6.63, 0.3707, 6.590, 31.73, 0.054),
    ReferenceSystem("ResNet152", 19.8, 0.3386, 5.762, 29.34, 0.045),
    ReferenceSystem("ResNet221", 23.8, 0.3270, 5.543, 28.08, 0.046),
    ReferenceSystem("ResNet293", 28.6, 0.3202, 5.553, 27.92, 0.041),
    ReferenceSystem("DF-ResNet", 14.8, 0.3361, 6.279, 28.83, 0.048),
    ReferenceSystem("ResNet34 + LM", 6.63, 0.3543, 6.221, 30.06, 0.054),
    ReferenceSystem("ResNet152 + LM", 19.8, 0.3251, 5.452, 28.66, 0.039),
    ReferenceSystem("ResNet221 + LM", 23.8, 0.3179, 5.284, 28.27, 0.035),
    ReferenceSystem("ResNet293 + LM", 28.6, 0.3164, 5.227, 27.82, 0.038),
    ReferenceSystem("DF-ResNet + LM", 14.8, 0.3185, 6.117, 27.46, 0.044),
    ReferenceSystem("Fusion", None, 0.2975, 4.911, 25.28, 0.045),
)

# parameter counts (millions) of the architectures this package can build
REFERENCE_PARAMS_M = {34: 6.63, 152: 19.8, 221: 23.8, 293: 28.6}


def dcf_from_rates(
    fnr_percent: float, fpr_percent: float, params: DcfParams = DcfParams()
) -> float:
    """Detection cost of a single operating point given in percent."""
    return float(params.cost(fnr_percent / 100.0, fpr_percent / 100.0))


def check_reference_rows(
    tolerance: float = 0.005, params: DcfParams = DcfParams()
) -> List[Tuple[ReferenceSystem, float]]:
    """Rows whose cost recomputed from FNR/FPR misses the stated minDCF."""
    outliers = []
    for row in REFERENCE_SYSTEMS:
        recomputed = dcf_from_rates(row.fnr, row.fpr, params)
        if abs(recomputed - row.min_dcf) > tolerance:
            outliers.append((row, recomputed))
    return outliers
