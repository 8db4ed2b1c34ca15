import json
import math

import numpy as np
import pytest

from src.core.model import (
    Problem,
    admissible_xi,
    builtin_problem,
    eval_operator_bundle,
    load_problem_file,
    min_moment_order,
    probe_grid_for,
    validate_derivatives,
)
from src.utils.errors import DerivativeValidationError, OperatorRangeError, ParameterError


def test_ginzburg_bundle_at_two():
    problem = builtin_problem("ginzburg", xi=0.02)

    bundle = eval_operator_bundle(problem, 2.0)

    assert bundle.b[0] == pytest.approx(-6.0)
    assert bundle.sigma[0] == pytest.approx(-0.06)
    assert bundle.L0b[0] == pytest.approx(65.9784)
    assert bundle.L1b[0] == pytest.approx(0.66)
    assert bundle.L0sigma[0] == pytest.approx(0.479928)
    assert bundle.L1sigma[0] == pytest.approx(0.0048)
    assert bundle.L1L1sigma[0] == pytest.approx(-0.000528)


def test_bundle_at_origin_for_ginzburg():
    bundle = eval_operator_bundle(builtin_problem("ginzburg", xi=0.02), 0.0)

    assert bundle.b[0] == 0.0
    assert bundle.sigma[0] == pytest.approx(0.02)
    assert bundle.L1b[0] == pytest.approx(0.02)
    assert bundle.L0sigma[0] == pytest.approx(0.5 * -0.04 * 0.0004)


def test_ginzburg_bundle_matches_closed_forms():
    xi = 0.02
    x = np.random.default_rng(7).uniform(-5.0, 5.0, size=200)

    bundle = eval_operator_bundle(builtin_problem("ginzburg", xi=xi), x)

    L0b = (x - x**3) * (1.0 - 3.0 * x**2) + 0.5 * xi**2 * (1.0 - x**2) ** 2 * (-6.0 * x)
    L1sigma = -2.0 * xi**2 * x * (1.0 - x**2)
    assert bundle.L0b[:, 0] == pytest.approx(L0b, rel=1e-12, abs=1e-15)
    assert bundle.L1sigma[:, 0] == pytest.approx(L1sigma, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("kind,x", [("ginzburg", 1.0), ("ginzburg", -1.0), ("holder", 0.0)])
def test_bundle_vanishes_where_drift_and_diffusion_vanish(kind, x):
    bundle = eval_operator_bundle(builtin_problem(kind, xi=0.02), x)

    for name, value in bundle.as_dict().items():
        assert value[0] == 0.0, name


def test_doubling_diffusion_scales_operators():
    x = np.linspace(-3.0, 3.0, 25)
    drift = [0.0, 1.0, 0.0, -1.0]
    single = Problem.from_polynomials("linear-noise", drift, [0.3, 0.5], rho=2.0, beta=1.0, x0=1.0)
    double = Problem.from_polynomials("linear-noise", drift, [0.6, 1.0], rho=2.0, beta=1.0, x0=1.0)

    one = eval_operator_bundle(single, x)
    two = eval_operator_bundle(double, x)

    assert np.array_equal(two.L1b, 2.0 * one.L1b)
    assert np.array_equal(two.L0sigma, 2.0 * one.L0sigma)
    drift_part = (x - x**3) * (1.0 - 3.0 * x**2)
    assert two.L0b[:, 0] - drift_part == pytest.approx(4.0 * (one.L0b[:, 0] - drift_part), rel=1e-9, abs=1e-12)


def test_ou_bundle_has_only_linear_terms():
    problem = builtin_problem("ou", xi=0.1)

    bundle = eval_operator_bundle(problem, np.array([[1.5], [-2.0]]))

    assert bundle.b[:, 0] == pytest.approx([-1.5, 2.0])
    assert bundle.L0b[:, 0] == pytest.approx([1.5, -2.0])
    assert bundle.L1b[:, 0] == pytest.approx([-0.1, -0.1])
    assert np.all(bundle.L0sigma == 0.0)
    assert np.all(bundle.L1sigma == 0.0)
    assert np.all(bundle.L1L1sigma == 0.0)


def test_bundle_rejects_non_finite_point():
    problem = builtin_problem("ginzburg", xi=0.02)

    with pytest.raises(ParameterError):
        eval_operator_bundle(problem, np.nan)


def test_bundle_names_overflowing_operator():
    problem = builtin_problem("ginzburg", xi=0.02)

    with pytest.raises(OperatorRangeError) as excinfo:
        eval_operator_bundle(problem, 1e120)

    assert excinfo.value.operator in ("b", "sigma", "L0b", "L1b", "L0sigma", "L1sigma", "L1L1sigma")


def test_non_strict_bundle_returns_non_finite_values():
    problem = builtin_problem("ginzburg", xi=0.02)

    bundle = eval_operator_bundle(problem, 1e120, strict=False)

    assert not np.isfinite(bundle.L0b[0])


def test_admissible_ranges_follow_moment_order():
    assert min_moment_order(2.0) == 22.0
    assert min_moment_order(4.0) == 42.0
    assert admissible_xi(2.0) == pytest.approx(math.sqrt(2.0 / 21.0))
    assert round(admissible_xi(4.0), 4) == 0.2209


def test_builtin_problem_rejects_large_xi_with_bound():
    with pytest.raises(ParameterError) as excinfo:
        builtin_problem("ginzburg", xi=0.5)

    assert "0.3086" in str(excinfo.value)


def test_builtin_problem_override_and_initial_state():
    problem = builtin_problem("ginzburg", xi=0.5, override=True, x0=10.0)

    assert problem.xi == 0.5
    assert problem.x0.tolist() == [10.0]
    assert problem.with_initial_state(1.0).x0.tolist() == [1.0]


def test_unknown_problem_kind():
    with pytest.raises(ParameterError):
        builtin_problem("lorenz", xi=0.1)


def test_problem_validates_fields():
    base = builtin_problem("ou", xi=0.1)
    fields = {name: getattr(base, name) for name in base.__dataclass_fields__}

    with pytest.raises(ParameterError):
        Problem(**{**fields, "beta": 1.5})
    with pytest.raises(ParameterError):
        Problem(**{**fields, "m": 2})
    with pytest.raises(ParameterError):
        Problem(**{**fields, "x0": [1.0, 2.0]})


@pytest.mark.parametrize("kind", ["ginzburg", "holder", "ou"])
def test_builtin_derivatives_agree_with_finite_differences(kind):
    problem = builtin_problem(kind, xi=0.02)

    report = validate_derivatives(problem, probe_grid_for(problem))

    assert set(report) == {"drift_jacobian", "drift_hessians", "diffusion_jacobian", "diffusion_hessians"}
    assert all(check.max_deviation <= 1e-4 for check in report.values())


def test_constant_coefficients_validate_exactly():
    problem = Problem.from_polynomials("constant", [1.0], [1.0], rho=0.0, beta=1.0, x0=0.0)

    report = validate_derivatives(problem, [-2.0, -0.5, 0.0, 0.5, 2.0])

    assert all(check.max_deviation == 0.0 for check in report.values())


def test_wrong_jacobian_is_reported():
    base = builtin_problem("ginzburg", xi=0.02)
    fields = {name: getattr(base, name) for name in base.__dataclass_fields__}
    broken = Problem(**{**fields, "drift_jacobian": lambda x: np.zeros(x.shape + (1,))})

    with pytest.raises(DerivativeValidationError) as excinfo:
        validate_derivatives(broken, [3.0])

    assert excinfo.value.evaluator == "drift_jacobian"


def test_polynomial_problem_matches_ginzburg():
    xi = 0.02
    polynomial = Problem.from_polynomials(
        "poly", drift_coefficients=[0.0, 1.0, 0.0, -1.0], diffusion_coefficients=[xi, 0.0, -xi], rho=2.0, beta=1.0, x0=3.0
    )
    reference = eval_operator_bundle(builtin_problem("ginzburg", xi=xi), 2.0).as_dict()

    bundle = eval_operator_bundle(polynomial, 2.0).as_dict()

    for name, value in reference.items():
        assert bundle[name][0] == pytest.approx(value[0], rel=1e-12, abs=1e-15)


def test_finite_difference_problem_warns_and_approximates():
    with pytest.warns(UserWarning):
        problem = Problem.with_finite_differences(
            "fd-ginzburg",
            drift=lambda x: x - x**3,
            diffusion=lambda x: 0.02 * (1.0 - x**2),
            rho=2.0,
            beta=1.0,
            x0=3.0,
        )

    bundle = eval_operator_bundle(problem, 2.0)

    assert problem.derivatives == "finite-difference"
    assert bundle.L0b[0] == pytest.approx(65.9784, rel=1e-4)
    assert bundle.L1b[0] == pytest.approx(0.66, rel=1e-4)


def test_load_problem_file(tmp_path):
    path = tmp_path / "cubic.json"
    path.write_text(json.dumps({"drift": [0, 1, 0, -1], "diffusion": [0.02, 0, -0.02], "rho": 2, "beta": 1, "x0": 3}))

    problem = load_problem_file(path)

    assert problem.name == "cubic"
    assert eval_operator_bundle(problem, 2.0).b[0] == pytest.approx(-6.0)


def test_load_problem_file_missing_keys(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"drift": [0, 1]}))

    with pytest.raises(ParameterError):
        load_problem_file(path)
