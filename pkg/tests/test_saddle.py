import math

import numpy as np
import pytest

from tfdmagic.contour import ContourSpec
from tfdmagic.saddle import (
    POLARIZED,
    SYMMETRIC,
    SaddleOptions,
    evaluate_action,
    fixed_point_residual,
    order_parameter,
    sre_solve,
    sre_value,
)
from tfdmagic.thermal import free_energy, sff_slope

LN2 = math.log(2.0)


@pytest.fixture(scope="module")
def ssb_pair():
    spec = ContourSpec(1.0, 8.0, 20, 40)
    sol = sre_solve(1.0, 8.0, spec=spec, seed_strategy=POLARIZED)
    flipped = np.outer(sol.grid.gauge, sol.grid.gauge) * sol.green
    mirror = sre_solve(1.0, 8.0, spec=spec, seed_strategy=POLARIZED, initial=flipped)
    return sol, mirror


def test_free_theory_gives_three_ln2():
    for strategy in (SYMMETRIC, POLARIZED):
        sol = sre_solve(1.0, 1.0, j_coupling=0.0, spec=ContourSpec(1.0, 1.0, 10, 10), seed_strategy=strategy)
        assert sol.action_per_mode == pytest.approx(3 * LN2, abs=1e-12)


def test_trivial_point_has_no_magic():
    sol = sre_solve(0.0, 0.0, spec=ContourSpec(0.0, 0.0, 4, 4))
    assert sre_value(sol, free_energy(0.0)) == pytest.approx(0.0, abs=1e-12)


def test_symmetric_saddle_properties():
    sol = sre_solve(1.0, 2.0, spec=ContourSpec(1.0, 2.0, 20, 20))
    assert sol.saddle_class == SYMMETRIC
    assert sol.order_parameter == 0.0
    assert sol.off_block_max() == 0.0
    assert sol.sector_logdets[1] == pytest.approx(sol.sector_logdets[-1], abs=1e-10)
    assert fixed_point_residual(sol) < 1e-9
    assert evaluate_action(sol) == pytest.approx(sol.action_per_mode, abs=1e-9)


def test_symmetric_branch_matches_thermal_slope():
    beta, t = 1.0, 1.0
    f_beta = free_energy(beta).real
    sol = sre_solve(beta, t, spec=ContourSpec(beta, t, 40, 40))
    pred = 2 * LN2 - 4 * (sff_slope(beta, [t]).ln_sff_per_mode[0] - f_beta)
    assert abs(sre_value(sol, f_beta) / pred - 1) < 1e-3


def test_polarized_branch_saturates(ssb_pair):
    sol, _ = ssb_pair
    assert sol.saddle_class == "ssb"
    assert sol.order_parameter > 0.99
    assert fixed_point_residual(sol) < 1e-9
    m2 = sre_value(sol, free_energy(1.0))
    assert m2 == pytest.approx(LN2, abs=2e-3)


def test_z2_flip_symmetry(ssb_pair):
    sol, mirror = ssb_pair
    assert mirror.saddle_class == "ssb"
    assert mirror.order_parameter == pytest.approx(-sol.order_parameter, abs=1e-9)
    assert mirror.action_per_mode == pytest.approx(sol.action_per_mode, abs=1e-9)


def test_order_parameter_from_logdets():
    assert order_parameter({1: 5.0 + 0j, -1: -5.0 + 0j}) == pytest.approx(math.tanh(10.0))
    assert order_parameter({1: 0.3 + 1j, -1: 0.3 - 2j}) == 0.0
    assert order_parameter({1: -1.0 + 0j, -1: 1.0 + 0j}) == pytest.approx(-math.tanh(2.0))


def test_sre_value_identity():
    assert sre_value(3 * LN2, 0.5 * LN2) == pytest.approx(0.0, abs=1e-15)
    assert sre_value(2.0, 0.25) == pytest.approx(LN2 - 2.0 + 1.0)


def test_options_and_validation():
    with pytest.raises(ValueError):
        sre_solve(1.0, 1.0, seed_strategy="bogus")
    with pytest.raises(ValueError):
        sre_solve(1.0, 1.0, spec=ContourSpec(1.0, 1.0, 4, 4), initial=np.zeros((3, 3)))
    plain = sre_solve(1.0, 2.0, spec=ContourSpec(1.0, 2.0, 10, 10), options=SaddleOptions(anderson_depth=0))
    fast = sre_solve(1.0, 2.0, spec=ContourSpec(1.0, 2.0, 10, 10))
    assert plain.action_per_mode == pytest.approx(fast.action_per_mode, abs=1e-8)
