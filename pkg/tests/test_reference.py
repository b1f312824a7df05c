"""Published operating points checked against their own error rates."""
import pytest

from rvector.metrics import DcfParams
from rvector.network import NET_SPECS
from rvector.reference import (
    REFERENCE_PARAMS_M,
    REFERENCE_SYSTEMS,
    check_reference_rows,
    dcf_from_rates,
)


def test_every_row_is_self_consistent():
    assert len(REFERENCE_SYSTEMS) == 12
    assert check_reference_rows(tolerance=0.005) == []


def test_zero_tolerance_flags_rounding():
    assert check_reference_rows(tolerance=0.0)


@pytest.mark.parametrize(
    "system, expected",
    (
        pytest.param("ResNet34", 0.37076, id="ResNet34"),
        pytest.param("Fusion", 0.29735, id="fusion"),
    ),
)
def test_dcf_from_rates(system, expected):
    row = next(r for r in REFERENCE_SYSTEMS if r.system == system)
    assert dcf_from_rates(row.fnr, row.fpr) == pytest.approx(expected, abs=1e-6)
    assert abs(dcf_from_rates(row.fnr, row.fpr) - row.min_dcf) < 0.005


def test_raw_cost_scale():
    raw = dcf_from_rates(31.73, 0.054, DcfParams(normalize=False))
    assert raw == pytest.approx(0.0037076, rel=1e-4)


def test_parameter_table_covers_buildable_networks():
    assert set(REFERENCE_PARAMS_M) == set(NET_SPECS)
