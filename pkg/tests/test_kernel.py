import math

import numpy as np
import pytest

from treegibbs.kernel import (KernelError, ModelParams, RangeError, build_degenerate,
                              build_general, eval_degenerate, eval_general, validate_positive)


def zero_params(**kw):
    return ModelParams(**kw)


class TestParams:
    @pytest.mark.parametrize("kw", [{"beta": 0.0}, {"beta": -1.0}, {"J": math.inf},
                                    {"J1": math.nan}, {"J3": "1"}, {"alpha_field": True}])
    def test_invalid(self, kw):
        with pytest.raises(KernelError):
            ModelParams(**kw)


class TestGeneral:
    def test_zero_couplings(self):
        k = build_general(zero_params(), "sin(t*u*v)", "u - v", "t + u")
        g = np.linspace(0, 1, 5)
        assert np.all(k.tabulate(g[:, None, None], g[None, :, None], g[None, None, :]) == 1.0)
        assert eval_general(k, 0.3, 0.2, 0.9) == 1.0

    def test_ternary(self):
        k = build_general(ModelParams(J3=1.0), "t*u*v", "0", "0")
        assert eval_general(k, 1, 1, 1) == pytest.approx(math.e, rel=1e-15)
        assert eval_general(k, 0.0, 0.4, 0.7) == 1.0
        assert eval_general(k, 1, 0.5, 0.5) == pytest.approx(math.exp(0.25), rel=1e-15)

    def test_nearest_neighbour(self):
        k = build_general(ModelParams(J1=1.0, beta=2.0), "0", "0", "t*u")
        assert eval_general(k, 0.5, 0.5, 0.5) == pytest.approx(math.e, rel=1e-15)

    def test_all_terms(self):
        p = ModelParams(J=0.3, J1=-0.2, J3=0.7, alpha_field=0.1, beta=1.5)
        k = build_general(p, "t*u*v", "u*v", "t*u")
        t, u, v = 0.2, 0.6, 0.9
        expo = 1.5 * (0.7 * t * u * v + 0.3 * u * v - 0.2 * (t * u + t * v) + 0.1 * (u + v))
        assert eval_general(k, t, u, v) == pytest.approx(math.exp(expo), rel=1e-14)

    @pytest.mark.parametrize("xi, slot", [("t", 1), ("v", 2), ("u*v", 2)])
    def test_variable_sets(self, xi, slot):
        args = ["0", "0", "0"]
        args[slot] = xi
        with pytest.raises(KernelError):
            build_general(ModelParams(), *args)

    def test_overflow_is_range_error(self):
        with pytest.raises(RangeError, match=r"\(t, u, v\)"):
            build_general(ModelParams(J3=1000.0), "t*u*v", "0", "0")


class TestDegenerate:
    def test_constant(self):
        k = build_degenerate("1", "1", "1", "1")
        assert eval_degenerate(k, 0.1, 0.7, 0.3) == 2.0
        assert k.classical

    def test_affine(self):
        k = build_degenerate("1", "t", "1", "v")
        assert eval_degenerate(k, 0.5, 0.3, 0.4) == pytest.approx(1.2, abs=1e-15)

    def test_exp(self):
        k = build_degenerate("exp(t)", "1", "1", "1")
        assert eval_degenerate(k, 0.0, 0.8, 0.1) == 2.0

    def test_separable_dependence(self):
        k = build_degenerate("1 + t", "exp(-t)", "1 + u^2", "2 + v")
        t, u = 0.3, 0.6
        a = k(t, u, 0.1)
        b = k(t, u, 0.9)
        assert b - a == pytest.approx(math.exp(-t) * 0.8, rel=1e-14)

    def test_bivariate_phi(self):
        k = build_degenerate("1", "1", "u*v + 1", "exp(v - u)")
        assert not k.classical
        assert k(0.0, 0.5, 0.5) == pytest.approx(2.25, abs=1e-15)

    @pytest.mark.parametrize("comps", [("u", "1", "1", "1"), ("1", "v", "1", "1"),
                                       ("1", "1", "t", "1"), ("1", "1", "1", "t*v")])
    def test_variable_sets(self, comps):
        with pytest.raises(KernelError):
            build_degenerate(*comps)

    def test_range_error(self):
        k = build_degenerate("exp(1000*t)", "1", "1", "1")
        with pytest.raises(RangeError):
            k(1.0, 0.5, 0.5)


class TestValidatePositive:
    def test_constant_passes(self):
        rep = validate_positive(build_degenerate("1", "1", "1", "1"), 11)
        assert rep.passed and rep.minimum == 1.0

    def test_zero_at_boundary(self):
        rep = validate_positive(build_degenerate("t", "1", "1", "1"), 11)
        assert not rep.passed
        assert rep.worst.name == "psi1" and rep.worst.minimum == 0.0 and rep.worst.at == (0.0,)

    def test_negative(self):
        rep = validate_positive(build_degenerate("t-2", "1", "1", "1"), 11)
        assert not rep.passed and rep.worst.minimum < 0

    def test_phi_location(self):
        rep = validate_positive(build_degenerate("1", "1", "u - v + 0.5", "1"), 11)
        assert rep.worst.name == "phi1" and rep.worst.at == (0.0, 1.0)
        assert rep.worst.minimum == -0.5

    def test_evaluation_error_is_carried(self):
        rep = validate_positive(build_degenerate("log(t)", "1", "1", "1"), 5)
        assert not rep.passed and rep.worst.error

    def test_positive_kernel_positive_everywhere(self):
        k = build_degenerate("exp(-t)", "1 + t", "1 + u", "exp(v)")
        assert validate_positive(k).passed
        g = np.linspace(0, 1, 9)
        assert np.all(k.tabulate(g[:, None, None], g[None, :, None], g[None, None, :]) > 0)

    def test_probe_count(self):
        with pytest.raises(ValueError):
            validate_positive(build_degenerate("1", "1", "1", "1"), 1)
