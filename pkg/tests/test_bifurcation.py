import numpy as np
import pytest

from cnmc import ModelParams, QuadratureSpec, SymmetricField
from cnmc.bifurcation import (BranchPoint, NewtonFailure, ReducedProblem, SingularJacobianError,
                              TrustRegionError, continue_branch, newton_solve, reduced_jacobian,
                              reduced_residual, verify_cnmc)

P = ModelParams(2, 0.5)
KMAX = 6  # kmax = 4 leaves a 3e-7 truncation floor in the residual


@pytest.fixture(scope="module")
def pb():
    return ReducedProblem(P, QuadratureSpec(), KMAX)


@pytest.fixture(scope="module")
def ladder(pb):
    return {b: pb.newton(0.0, b, pb.lambda_star) for b in (0.0025, 0.005, 0.01, 0.02)}


def test_unknowns_layout(pb):
    assert pb.vbar == (1,)
    assert (1,) not in pb.v_classes and (0,) in pb.v_classes
    assert len(pb.v_classes) == len(pb.classes) - 1


def test_zero_amplitude_gives_lambda_star(pb):
    pt = pb.newton(0.0, 0.0, 1.05 * pb.lambda_star)
    assert pt.converged
    assert pt.lam == pytest.approx(pb.lambda_star, abs=1e-9)
    assert np.abs(pt.v.to_vector()).max() < 1e-9


def test_jacobian_matches_fd(pb):
    rng = np.random.default_rng(1)
    lam = pb.lambda_star * 1.02
    v = 0.1 * rng.normal(size=len(pb.v_classes))
    b, tau = 0.03, 0.02
    J = pb.jacobian(tau, b, lam, v)
    h = 1e-6
    for j in range(1, J.shape[1]):
        e = np.zeros_like(v)
        e[j - 1] = h
        fd = (pb.residual(tau, b, lam, v + e) - pb.residual(tau, b, lam, v - e)) / (2 * h)
        assert np.abs(fd - J[:, j]).max() < 1e-7 * (1 + np.abs(J[:, j]).max())
    h = 1e-4
    fd = (pb.residual(tau, b, lam + h, v) - pb.residual(tau, b, lam - h, v)) / (2 * h)
    assert np.abs(fd - J[:, 0]).max() < 1e-6


def test_functional_wrappers(pb):
    v = np.zeros(len(pb.v_classes))
    r = reduced_residual(0.0, 0.02, pb.lambda_star, v, P, kmax=KMAX)
    rs = reduced_residual(0.0, 0.02, pb.lambda_star, v, P, kmax=KMAX, scaled=True)
    assert np.allclose(r, 0.02 * rs, rtol=1e-12, atol=1e-16)
    J = reduced_jacobian(0.0, 0.02, pb.lambda_star, v, P, kmax=KMAX)
    assert J.shape == (len(pb.classes), len(pb.classes))


def test_amplitude_scaling(ladder, pb):
    # |lam - lam*| + sup|v| = O(b)
    c = [(abs(p.lam - pb.lambda_star) + np.abs(p.v.to_vector()).max()) / b
         for b, p in ladder.items()]
    assert all(p.residual_norm < 1e-8 for p in ladder.values())
    assert max(c) / min(c) < 1.5


def test_reflection_symmetry(ladder, pb):
    # b -> -b is the half-period shift s -> s + pi
    b = 0.02
    neg = pb.newton(0.0, -b, pb.lambda_star)
    pos = ladder[b]
    assert neg.lam == pytest.approx(pos.lam, abs=1e-10)
    for k in pb.v_classes:
        assert neg.v.get(k) == pytest.approx((-1) ** (k[0] + 1) * pos.v.get(k), abs=1e-10)


def test_lattice_branch_is_cnmc(pb):
    pt = newton_solve(0.01, 0.02, None, P, kmax=KMAX, problem=pb)
    rep = verify_cnmc(pt, P, kmax=KMAX)
    assert rep["passed"]
    assert rep["relative_deviation"] < 1e-7
    assert rep["fine_residual"] < 1e-7


def test_continuation(pb):
    pts, status = continue_branch(0.01, [0.01, 0.02, 0.03], P, kmax=KMAX,
                                  verify_spec=QuadratureSpec().refined(2))
    assert [p.b for p in pts] == [0.01, 0.02, 0.03]
    assert status == {"attained_b": 0.03, "error": None}
    assert all(p.cnmc_deviation < 1e-8 for p in pts)


def test_continuation_stops_at_trust_region():
    pts, status = continue_branch(0.0, [0.02, 0.2], P, kmax=KMAX)
    assert len(pts) == 1
    assert status["attained_b"] == 0.02 and "b=0.2" in status["error"]


class TestFailures:
    def test_lambda_outside(self, pb):
        with pytest.raises(TrustRegionError):
            pb.newton(0.0, 0.01, 2 * pb.lambda_star)

    def test_amplitude_too_large(self, pb):
        with pytest.raises(TrustRegionError):
            pb.newton(0.0, 0.2, pb.lambda_star)

    def test_overlap(self, pb):
        with pytest.raises(TrustRegionError):
            pb.newton(1.5, 0.01, pb.lambda_star)

    def test_iteration_budget(self, pb):
        with pytest.raises(NewtonFailure):
            pb.newton(0.0, 0.04, pb.lambda_star, max_iter=1, tol=1e-14)

    def test_singular(self, monkeypatch, pb):
        monkeypatch.setattr(ReducedProblem, "jacobian",
                            lambda self, *a, **k: np.zeros((len(pb.classes),) * 2))
        with pytest.raises(SingularJacobianError):
            pb.newton(0.0, 0.02, pb.lambda_star)

    def test_bad_v(self, pb):
        with pytest.raises(ValueError):
            pb.residual(0.0, 0.01, pb.lambda_star, SymmetricField(2, 2))


def test_point_round_trip(ladder):
    p = ladder[0.01]
    q = BranchPoint.from_dict(p.to_dict())
    assert q.lam == p.lam and q.b == p.b and q.tau == p.tau
    assert np.array_equal(q.v.to_vector(), p.v.to_vector())
    assert np.allclose(q.profile().to_vector(), p.profile().to_vector())
    assert p.to_dict()["lambda"] == p.lam
