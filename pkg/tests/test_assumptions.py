import json
import math

import numpy as np
import pytest

from src.core.assumptions import (
    a2_lhs,
    a3_lhs,
    check_A1,
    check_A2,
    check_A3,
    check_A4_A5,
    check_assumptions,
    default_pair_grid,
    parameter_ranges,
)
from src.core.model import builtin_problem
from src.utils.errors import ParameterError


def test_ginzburg_ranges():
    ranges = parameter_ranges("ginzburg")

    assert ranges.rho == 2.0
    assert ranges.min_p0 == 22.0
    assert round(ranges.xi_max, 4) == 0.3086
    assert ranges.p1_max(0.02) == pytest.approx(2501.0)


def test_holder_ranges():
    ranges = parameter_ranges("holder")

    assert ranges.min_p0 == 42.0
    assert round(ranges.xi_max, 4) == 0.2209
    assert ranges.p1_max(0.02) == pytest.approx(2001.0)


@pytest.mark.parametrize("kind", ["ginzburg", "holder"])
def test_minimal_moment_order_binds_at_xi_max(kind):
    ranges = parameter_ranges(kind)

    assert ranges.min_p0 == pytest.approx(2.0 / ranges.xi_max**2 + 1.0, abs=1e-12)
    assert ranges.p0_max(ranges.xi_max) == pytest.approx(ranges.min_p0, abs=1e-12)


def test_ranges_unknown_for_other_problems():
    with pytest.raises(ParameterError):
        parameter_ranges("ou")


def test_a2_left_hand_side_at_origin():
    problem = builtin_problem("ginzburg", xi=0.02)

    assert a2_lhs(problem, 22.0, 0.0)[0] == pytest.approx(0.0084)


def test_a2_passes_at_minimal_moment_order():
    check = check_A2(builtin_problem("ginzburg", xi=0.02), p0=22.0)

    assert check.passed
    assert check.identifier == "A-2"
    assert math.isfinite(check.constant)


def test_a2_fails_beyond_admissible_moment_order():
    check = check_A2(builtin_problem("ginzburg", xi=0.02), p0=6000.0)

    assert not check.passed
    assert check.residual > 0.0


def test_a2_fails_for_xi_outside_range():
    check = check_A2(builtin_problem("ginzburg", xi=0.31, override=True), p0=22.0)

    assert not check.passed
    assert check.residual > 0.0


def test_a2_monotone_in_moment_order():
    problem = builtin_problem("ginzburg", xi=0.02)
    failed = False
    for p0 in (22.0, 1000.0, 4000.0, 5001.0, 5500.0, 6000.0, 10000.0):
        passed = check_A2(problem, p0=p0).passed
        assert not (failed and passed)
        failed = failed or not passed
    assert failed


def test_a3_antisymmetric_pair():
    problem = builtin_problem("ginzburg", xi=0.02)
    x = 0.5

    ratio = a3_lhs(problem, 3.0, x, -x)[0] / (2 * x) ** 2

    assert ratio == pytest.approx(2.0 * (1.0 - x**2))


def test_a3_passes_for_ginzburg():
    assert check_A3(builtin_problem("ginzburg", xi=0.02), p1=3.0).passed


def test_a3_fails_for_holder_beyond_interval():
    xi = 0.02
    check = check_A3(builtin_problem("holder", xi=xi), p1=4.0 / (5.0 * xi**2) + 2.0)

    assert not check.passed
    assert "outside" in check.detail


def test_pair_grid_has_no_coincident_pairs():
    x, y = default_pair_grid(builtin_problem("ginzburg", xi=0.02))

    assert x.shape == y.shape
    assert np.all(x != y)
    gaps = np.abs(x - y)[:, 0]
    assert gaps.min() <= 1e-6 * (1 + 1e-9)
    assert np.abs(x).max() >= 999.0


def test_ginzburg_hessian_checks():
    a4, a5 = check_A4_A5(builtin_problem("ginzburg", xi=0.02))

    assert a4.passed and a5.passed
    assert a4.constant == pytest.approx(6.0, rel=1e-6)
    assert a5.constant == 0.0


def test_holder_diffusion_hessian_is_half_holder():
    xi = 0.02
    _, a5 = check_A4_A5(builtin_problem("holder", xi=xi))

    assert a5.passed
    assert a5.constant <= 3.75 * xi * (1 + 1e-9)


def test_a1_is_informational():
    check = check_A1(builtin_problem("ginzburg", xi=0.02))

    assert check.passed
    assert check.constant == pytest.approx(3.0**22)


@pytest.mark.parametrize("kind", ["ginzburg", "holder", "ou"])
def test_all_assumptions_hold_for_builtin_problems(kind):
    report = check_assumptions(builtin_problem(kind, xi=0.02))

    assert report.passed, [c.to_dict() for c in report.checks if not c.passed]
    assert [c.identifier for c in report.checks] == ["A-1", "A-2", "A-3", "A-4", "A-5"]
    json.dumps(report.to_dict())


def test_report_lookup():
    report = check_assumptions(builtin_problem("ginzburg", xi=0.02))

    assert report.check("A-4").passed
    with pytest.raises(KeyError):
        report.check("A-9")
