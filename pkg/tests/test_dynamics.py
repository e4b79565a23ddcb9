import math

import numpy as np
import pytest

from tfdmagic.contour import ContourSpec, build_contour
from tfdmagic.dynamics import (
    DynamicsOptions,
    find_transition,
    m2_curve,
    phase_diagram,
    predicted_m2,
    schwarzian_m2p,
    transfer_green,
)
from tfdmagic.saddle import sre_solve

LN2 = math.log(2.0)
COARSE = DynamicsOptions(n_im=10, re_step=0.25, scan_step=2.0, resolution=0.25)


@pytest.fixture(scope="module")
def coarse_curve():
    return m2_curve(1.0, [0.0, 2.0, 4.0, 6.0, 8.0], COARSE)


def test_prediction_trivial_cases():
    assert np.all(predicted_m2(0.0, [0.0]) == 0.0)
    assert np.all(predicted_m2(1.0, [0.0, 5.0], j_coupling=0.0) == 0.0)
    with pytest.raises(ValueError):
        predicted_m2(0.0, [1.0])


def test_prediction_grows_from_thermal_value():
    m2 = predicted_m2(1.0, [0.0, 1.0, 3.0])
    assert 0 < m2[0] < m2[1] < m2[2]


def test_schwarzian_form():
    beta, m0, c = 10.0, 0.1, 0.02
    v = schwarzian_m2p(beta, beta / 2, m0, c)
    assert v == pytest.approx(m0 + 16 * math.pi**2 * c / beta + 6 * LN2)
    assert schwarzian_m2p(beta, 0.0, m0, c) == pytest.approx(m0)
    late = schwarzian_m2p(beta, 1e6, m0, c, include_log=False)
    assert late == pytest.approx(m0 + 32 * math.pi**2 * c / beta, rel=1e-9)


def test_transfer_green_identity_and_refinement():
    spec = ContourSpec(1.0, 2.0, 8, 8)
    sol = sre_solve(1.0, 2.0, spec=spec)
    same = transfer_green(sol.grid, sol.green, build_contour(spec))
    assert np.allclose(same, sol.green, atol=1e-14)
    finer = transfer_green(sol.grid, sol.green, build_contour(ContourSpec(1.0, 2.5, 8, 12)))
    assert finer.shape == (40, 40)
    assert np.allclose(finer, -finer.T)
    assert transfer_green(sol.grid, sol.green, build_contour(ContourSpec(1.0, 0.0, 8, 0))) is None


def test_free_curve_is_flat():
    curve = m2_curve(1.0, [0.0, 3.0, 1.0], DynamicsOptions(j_coupling=0.0))
    assert np.array_equal(curve.times, [0.0, 1.0, 3.0])
    assert np.all(curve.column("m2_dominant") == 0.0)


def test_curve_dominance_and_kink(coarse_curve):
    c = coarse_curve
    assert c.dominant_branch() == ["symmetric", "symmetric", "symmetric", "ssb", "ssb"]
    dom = c.column("m2_dominant")
    assert np.allclose(dom, np.fmin(c.column("m2_symmetric"), np.nan_to_num(c.column("m2_ssb"), nan=np.inf)))
    assert np.isnan(c.points[0].m2_ssb)
    assert c.points[-1].order_param > 0.99
    assert c.points[-1].m2_ssb == pytest.approx(LN2, abs=2e-3)
    # the symmetric branch keeps growing past ln2
    assert c.points[-1].m2_symmetric > LN2


def test_single_branch_curve(coarse_curve):
    only_ssb = m2_curve(1.0, [4.0, 6.0], COARSE, branches=("ssb",))
    assert np.all(np.isnan(only_ssb.column("m2_symmetric")))
    assert only_ssb.dominant_branch() == ["ssb", "ssb"]
    assert np.allclose(only_ssb.column("m2_ssb"), coarse_curve.column("m2_ssb")[2:4], atol=1e-8)
    with pytest.raises(ValueError):
        m2_curve(1.0, [1.0], COARSE, branches=("bogus",))


def test_negative_times_rejected():
    with pytest.raises(ValueError):
        m2_curve(1.0, [-1.0, 1.0], COARSE)
    with pytest.raises(ValueError):
        find_transition(1.0, (5.0, 1.0), COARSE)


def test_transition_beta_one_coarse():
    res = find_transition(1.0, (0.0, 8.0), COARSE)
    assert res.status == "crossing-found"
    lo, hi = res.bracket
    assert hi - lo <= COARSE.resolution
    assert lo <= res.t_star <= hi
    assert abs(res.t_star - 4.8) < 0.3
    assert res.to_dict()["status"] == "crossing-found"


def test_no_crossing_in_short_window():
    res = find_transition(1.0, (0.0, 2.0), COARSE)
    assert res.t_star is None
    assert res.status in ("none-below-tmax", "undetermined")


def test_phase_diagram_refuses_fit_with_few_points():
    pd = phase_diagram([1.0], 8.0, COARSE)
    assert pd.boundary_fit is None
    assert pd.notes and "need 3" in pd.notes[0]
    assert pd.crossings()[0][1] == 1.0
