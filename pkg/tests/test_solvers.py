"""The six algorithms, their step machinery, and the convergence certificate."""

import dataclasses
import math

import numpy as np
import pytest

from bregpnp.denoisers import (
    IdentityDenoiser,
    LinearSmoother,
    MedianFilter,
    ScaledContraction,
)
from bregpnp.errors import (
    DomainError,
    SafeguardExhaustedError,
    StepError,
)
from bregpnp.fidelity import GaussianFidelity, PoissonFidelity, relative_smoothness
from bregpnp.geometry import ZERO, burg_entropy, l1, quadratic, shannon_entropy
from bregpnp.images import ConvolutionOperator, DenseOperator, IdentityOperator, uniform_kernel
from bregpnp.solvers import (
    SolverConfig,
    burg_backtrack,
    default_x0,
    mirror_step,
    red_objective,
    solve,
    theorem_gate,
)
from bregpnp.solvers import bpgm, pgm, pnp_bpgm, pnp_pgm, red_bsd, red_sd


def gaussian_deblur_instance(rng, shape=(16, 16)):
    op = ConvolutionOperator(uniform_kernel(3), shape)
    clean = rng.uniform(0.2, 1.0, shape)
    y = op.forward(clean) + 0.05 * rng.standard_normal(shape)
    return GaussianFidelity(y, op), clean


def poisson_deblur_instance(rng, shape=(16, 16), peak=20.0):
    op = ConvolutionOperator(uniform_kernel(3), shape)
    clean = rng.uniform(0.2, 1.0, shape) * peak
    y = rng.poisson(op.forward(clean)).astype(float)
    return PoissonFidelity(y, op), clean


def run_lockstep(cfg_a, cfg_b, steps):
    """Advance two configs one iteration at a time from shared states.

    Returns the max abs difference between the two trajectories.
    """
    xa = np.array(cfg_a.x0, dtype=float)
    xb = np.array(cfg_b.x0, dtype=float)
    worst = 0.0
    for _ in range(steps):
        ra = solve(dataclasses.replace(cfg_a, x0=xa, max_iters=1, tol=0.0))
        rb = solve(dataclasses.replace(cfg_b, x0=xb, max_iters=1, tol=0.0))
        xa, xb = ra.final, rb.final
        worst = max(worst, float(np.max(np.abs(xa - xb))))
    return worst


class TestMirrorStep:
    def test_quadratic_is_gradient_descent(self):
        got = mirror_step(quadratic(), [2.0], [1.0], 0.5)
        np.testing.assert_allclose(got, [1.5], atol=1e-15)

    def test_burg_closed_form_value(self):
        got = mirror_step(burg_entropy(), [1.0], [0.5], 0.1)
        np.testing.assert_allclose(got, [1.0 / 1.05], rtol=1e-12)

    def test_zero_gradient_fixed_point(self):
        for h in (quadratic(), burg_entropy(), shannon_entropy()):
            x = np.array([0.3, 0.8])
            np.testing.assert_allclose(
                mirror_step(h, x, np.zeros(2), 0.7), x, rtol=1e-14
            )

    def test_burg_dual_violation_reports_count(self):
        # gamma*x*grad <= -1 on two coordinates pushes the dual point out
        with pytest.raises(StepError, match="2 coordinate"):
            mirror_step(burg_entropy(), [1.0, 1.0, 1.0], [-3.0, -3.0, 0.1], 1.0)

    def test_burg_generic_equals_closed_form(self):
        rng = np.random.default_rng(41)
        h = burg_entropy()
        gamma = 0.3
        for _ in range(1000):
            x = rng.uniform(0.05, 3.0, size=16)
            g = rng.uniform(-0.5, 1.0, size=16)
            generic = mirror_step(h, x, g, gamma)
            fast = x / (1.0 + gamma * x * g)
            np.testing.assert_allclose(generic, fast, rtol=1e-10)

    def test_shannon_step_is_multiplicative(self):
        h = shannon_entropy()
        x = np.array([0.2, 0.7])
        g = np.array([0.5, -0.25])
        got = mirror_step(h, x, g, 0.4)
        np.testing.assert_allclose(got, x * np.exp(-0.4 * g), rtol=1e-12)


class TestBurgBacktrack:
    def test_feasible_step_keeps_gamma(self):
        z, used = burg_backtrack(np.array([1.0]), np.array([0.5]), 0.1)
        assert used == 0.1
        np.testing.assert_allclose(z, [1.0 / 1.05], rtol=1e-12)

    def test_halving_trace(self):
        z, used = burg_backtrack(np.array([1.0]), np.array([-3.0]), 0.5)
        assert used == 0.25
        np.testing.assert_allclose(z, [4.0], rtol=1e-12)

    def test_zero_gradient_no_halving(self):
        x = np.array([0.4, 2.0])
        z, used = burg_backtrack(x, np.zeros(2), 0.8)
        assert used == 0.8
        np.testing.assert_allclose(z, x, rtol=1e-15)

    def test_exhaustion_raises(self):
        with pytest.raises(SafeguardExhaustedError):
            burg_backtrack(np.array([1.0]), np.array([-1.0]), 1.0, max_halvings=0)


class TestPgm:
    def test_identity_operator_converges_to_measurements(self):
        rng = np.random.default_rng(42)
        y = rng.random((4, 4))
        fid = GaussianFidelity(y, IdentityOperator((4, 4)))
        cfg = SolverConfig("pgm", fid, x0=np.zeros((4, 4)), gamma=1.0,
                           max_iters=50, tol=1e-8)
        report = pgm(cfg)
        assert report.iterations_used <= 50
        assert report.residuals[-1] < 1e-8
        np.testing.assert_allclose(report.final, y, atol=1e-12)

    def test_identity_operator_l1_limit_is_soft_threshold(self):
        rng = np.random.default_rng(43)
        y = rng.standard_normal(12)
        lam = 0.3
        fid = GaussianFidelity(y, IdentityOperator((12,)))
        cfg = SolverConfig("pgm", fid, x0=np.zeros(12), regularizer=l1(lam),
                           gamma=0.8, max_iters=400, tol=1e-14)
        final = pgm(cfg).final
        want = np.sign(y) * np.maximum(np.abs(y) - lam, 0.0)
        np.testing.assert_allclose(final, want, atol=1e-6)

    def test_objective_non_increasing_at_majorizer_step(self):
        rng = np.random.default_rng(44)
        fid, _ = gaussian_deblur_instance(rng)
        L = relative_smoothness(fid, quadratic())
        cfg = SolverConfig("pgm", fid, x0=np.zeros((16, 16)),
                           regularizer=l1(0.01), gamma=1.0 / L,
                           max_iters=80, tol=0.0)
        report = pgm(cfg)
        start = fid.value(np.zeros((16, 16))) + l1(0.01).value(np.zeros((16, 16)))
        trace = np.concatenate([[start], report.objective])
        assert np.all(np.diff(trace) <= 1e-10)

    def test_rejects_non_quadratic_reference(self):
        fid = GaussianFidelity(np.zeros(3), IdentityOperator((3,)))
        cfg = SolverConfig("pgm", fid, x0=np.zeros(3), h=burg_entropy())
        with pytest.raises(ValueError, match="Euclidean"):
            pgm(cfg)


class TestBpgm:
    def test_quadratic_reference_reproduces_pgm(self):
        rng = np.random.default_rng(45)
        fid, _ = gaussian_deblur_instance(rng)
        x0 = rng.random((16, 16))
        base = dict(fidelity=fid, x0=x0, regularizer=l1(0.02), gamma=0.9)
        diff = run_lockstep(
            SolverConfig("pgm", **base),
            SolverConfig("bpgm", h=quadratic(), **base),
            steps=100,
        )
        assert diff < 1e-12

    def test_poisson_burg_descent(self):
        rng = np.random.default_rng(46)
        fid, _ = poisson_deblur_instance(rng)
        L = relative_smoothness(fid, burg_entropy())
        x0 = np.full((16, 16), float(fid.y.mean()))
        cfg = SolverConfig("bpgm", fid, x0=x0, h=burg_entropy(), gamma=1.0 / L,
                           max_iters=100, tol=0.0)
        report = bpgm(cfg)
        trace = np.concatenate([[fid.value(x0)], report.objective])
        assert np.all(np.diff(trace) <= 1e-10)
        assert report.backtracks == 0

    def test_poisson_burg_descent_with_l1_proximal_map(self):
        rng = np.random.default_rng(63)
        fid, _ = poisson_deblur_instance(rng)
        reg = l1(0.05)
        L = relative_smoothness(fid, burg_entropy())
        x0 = np.full((16, 16), float(fid.y.mean()))
        cfg = SolverConfig("bpgm", fid, x0=x0, h=burg_entropy(), gamma=1.0 / L,
                           regularizer=reg, max_iters=100, tol=0.0)
        report = bpgm(cfg)
        trace = np.concatenate([[fid.value(x0) + reg.value(x0)],
                                report.objective])
        assert np.all(np.diff(trace) <= 1e-10)

    def test_poisson_identity_maximum_likelihood_hits_counts(self):
        rng = np.random.default_rng(47)
        y = rng.uniform(1.0, 6.0, size=5)
        fid = PoissonFidelity(y, IdentityOperator((5,)))
        cfg = SolverConfig("bpgm", fid, x0=np.full(5, y.mean()),
                           h=burg_entropy((1e-4, 10.0)),
                           gamma=1.0 / float(y.sum()), max_iters=5000, tol=1e-14)
        final = bpgm(cfg).final
        np.testing.assert_allclose(final, y, atol=1e-6)

    def test_unsupported_pair_rejected(self):
        fid = GaussianFidelity(np.zeros(3), IdentityOperator((3,)))
        cfg = SolverConfig("bpgm", fid, x0=np.ones(3), h=burg_entropy())
        with pytest.raises(ValueError, match="relative-smoothness"):
            bpgm(cfg)


class TestPnpPgm:
    def test_identity_denoiser_reproduces_pgm(self):
        rng = np.random.default_rng(48)
        fid, _ = gaussian_deblur_instance(rng)
        x0 = rng.random((16, 16))
        diff = run_lockstep(
            SolverConfig("pgm", fid, x0=x0, regularizer=ZERO, gamma=0.7),
            SolverConfig("pnp-pgm", fid, x0=x0, denoiser=IdentityDenoiser(),
                         gamma=0.7),
            steps=100,
        )
        assert diff < 1e-12

    def test_contraction_gives_geometric_residual_decay(self):
        # the iteration map composes a rho-Lipschitz denoiser with the
        # gradient step, so successive differences contract by at least
        # rho * max(|1 - gamma*mu_f|, |1 - gamma*L_f|)
        rng = np.random.default_rng(49)
        mu_f, L_f, rho, gamma = 0.5, 2.0, 0.6, 0.3
        eigs = np.linspace(mu_f, L_f, 16)
        op = DenseOperator(np.diag(np.sqrt(eigs)))
        fid = GaussianFidelity(rng.standard_normal(16), op)
        cfg = SolverConfig("pnp-pgm", fid, x0=rng.standard_normal(16),
                           denoiser=ScaledContraction(rho), gamma=gamma)
        iterates = [np.array(cfg.x0)]
        for _ in range(25):
            step = solve(dataclasses.replace(cfg, x0=iterates[-1],
                                             max_iters=1, tol=0.0))
            iterates.append(step.final)
        diffs = [float(np.linalg.norm(b - a))
                 for a, b in zip(iterates, iterates[1:])]
        bound = rho * max(abs(1 - gamma * mu_f), abs(1 - gamma * L_f)) + 1e-6
        for prev, cur in zip(diffs, diffs[1:]):
            if prev > 1e-13:
                assert cur / prev <= bound

    def test_zero_iterations_returns_x0(self):
        fid = GaussianFidelity(np.zeros(4), IdentityOperator((4,)))
        x0 = np.array([1.0, 2.0, 3.0, 4.0])
        report = pnp_pgm(SolverConfig("pnp-pgm", fid, x0=x0,
                                      denoiser=IdentityDenoiser(), max_iters=0))
        np.testing.assert_array_equal(report.final, x0)
        assert report.iterations_used == 0
        assert len(report.residuals) == 0


class TestPnpBpgm:
    def test_identity_denoiser_reproduces_bpgm(self):
        rng = np.random.default_rng(50)
        fid, _ = poisson_deblur_instance(rng)
        x0 = rng.uniform(5.0, 15.0, (16, 16))
        h = burg_entropy((1e-4, 30.0))
        diff = run_lockstep(
            SolverConfig("bpgm", fid, x0=x0, h=h, regularizer=ZERO, gamma=0.01),
            SolverConfig("pnp-bpgm", fid, x0=x0, h=h,
                         denoiser=IdentityDenoiser(), gamma=0.01),
            steps=100,
        )
        assert diff < 1e-12

    def test_quadratic_reference_reproduces_pnp_pgm(self):
        rng = np.random.default_rng(51)
        fid, _ = gaussian_deblur_instance(rng)
        x0 = rng.random((16, 16))
        den = LinearSmoother(alpha=0.5)
        diff = run_lockstep(
            SolverConfig("pnp-pgm", fid, x0=x0, denoiser=den, gamma=0.8),
            SolverConfig("pnp-bpgm", fid, x0=x0, h=quadratic(), denoiser=den,
                         gamma=0.8),
            steps=100,
        )
        assert diff < 1e-12

    def test_certified_instance_converges(self):
        rng = np.random.default_rng(52)
        mu_f, L_f, M = 0.8, 2.5, 0.7
        cert = theorem_gate(1.0, 1.0, mu_f, L_f, M)
        assert cert.satisfied
        eigs = np.linspace(mu_f, L_f, 20)
        op = DenseOperator(np.diag(np.sqrt(eigs)))
        fid = GaussianFidelity(rng.standard_normal(20), op)
        cfg = SolverConfig("pnp-bpgm", fid, x0=rng.standard_normal(20),
                           h=quadratic(), denoiser=ScaledContraction(M),
                           gamma=cert.gamma_midpoint, max_iters=500, tol=1e-8)
        report = pnp_bpgm(cfg)
        assert report.residuals[-1] < 1e-8
        assert report.iterations_used < 500

    def test_positive_iterates_under_burg_safeguard(self):
        rng = np.random.default_rng(53)
        fid, _ = poisson_deblur_instance(rng, shape=(12, 12), peak=6.0)
        seen = []
        median = MedianFilter(window=3)

        def recording(x):
            seen.append(x.min())
            return median(x)

        x0 = np.maximum(fid.y, 1e-8)
        cfg = SolverConfig("pnp-bpgm", fid, x0=x0, h=burg_entropy((1e-4, 12.0)),
                           denoiser=recording, gamma=0.5, max_iters=60, tol=0.0)
        report = pnp_bpgm(cfg)
        assert all(v > 0 for v in seen)
        assert report.final.min() > 0

    def test_safeguard_off_raises_step_error(self):
        fid = PoissonFidelity(np.array([50.0]), IdentityOperator((1,)))
        cfg = SolverConfig("pnp-bpgm", fid, x0=np.array([0.5]),
                           h=burg_entropy(), denoiser=IdentityDenoiser(),
                           gamma=1.0, safeguard=False, max_iters=10)
        with pytest.raises(StepError):
            pnp_bpgm(cfg)

    def test_needs_positive_start_under_burg(self):
        fid = PoissonFidelity(np.array([1.0]), IdentityOperator((1,)))
        cfg = SolverConfig("pnp-bpgm", fid, x0=np.array([0.0]),
                           h=burg_entropy(), denoiser=IdentityDenoiser())
        with pytest.raises(DomainError):
            pnp_bpgm(cfg)


class TestRedSd:
    def test_identity_denoiser_matches_plain_gradient_descent(self):
        rng = np.random.default_rng(54)
        fid, _ = gaussian_deblur_instance(rng)
        x0 = rng.random((16, 16))
        diff = run_lockstep(
            SolverConfig("pgm", fid, x0=x0, regularizer=ZERO, gamma=0.6),
            SolverConfig("red-sd", fid, x0=x0, denoiser=IdentityDenoiser(),
                         gamma=0.6, tau=0.7),
            steps=100,
        )
        assert diff < 1e-12

    def test_tau_zero_matches_plain_gradient_descent(self):
        rng = np.random.default_rng(55)
        fid, _ = gaussian_deblur_instance(rng)
        x0 = rng.random((16, 16))
        diff = run_lockstep(
            SolverConfig("pgm", fid, x0=x0, regularizer=ZERO, gamma=0.6),
            SolverConfig("red-sd", fid, x0=x0, denoiser=LinearSmoother(0.5),
                         gamma=0.6, tau=0.0),
            steps=50,
        )
        assert diff < 1e-12

    def test_contraction_fixed_point_closed_form(self):
        rng = np.random.default_rng(56)
        y = rng.random(10)
        tau, rho = 0.8, 0.3
        fid = GaussianFidelity(y, IdentityOperator((10,)))
        cfg = SolverConfig("red-sd", fid, x0=np.zeros(10),
                           denoiser=ScaledContraction(rho, anchor=0.0),
                           gamma=0.5, tau=tau, max_iters=2000, tol=1e-14)
        final = red_sd(cfg).final
        want = y / (1.0 + tau * (1.0 - rho))
        np.testing.assert_allclose(final, want, atol=1e-8)


class TestRedBsd:
    def test_quadratic_reference_reproduces_red_sd(self):
        rng = np.random.default_rng(57)
        fid, _ = gaussian_deblur_instance(rng)
        x0 = rng.random((16, 16))
        den = LinearSmoother(alpha=0.4)
        base = dict(fidelity=fid, x0=x0, denoiser=den, gamma=0.7, tau=0.05)
        diff = run_lockstep(
            SolverConfig("red-sd", **base),
            SolverConfig("red-bsd", h=quadratic(), **base),
            steps=100,
        )
        assert diff < 1e-12

    def test_identity_denoiser_reproduces_bpgm_zero(self):
        rng = np.random.default_rng(58)
        fid, _ = poisson_deblur_instance(rng)
        x0 = rng.uniform(5.0, 15.0, (16, 16))
        h = burg_entropy((1e-4, 30.0))
        diff = run_lockstep(
            SolverConfig("bpgm", fid, x0=x0, h=h, regularizer=ZERO, gamma=0.01),
            SolverConfig("red-bsd", fid, x0=x0, h=h,
                         denoiser=IdentityDenoiser(), gamma=0.01, tau=0.3),
            steps=100,
        )
        assert diff < 1e-12

    def test_burg_fast_path_matches_generic_composition(self):
        rng = np.random.default_rng(59)
        fid, _ = poisson_deblur_instance(rng)
        den = LinearSmoother(alpha=0.5)
        h = burg_entropy((1e-4, 40.0))
        tau, gamma = 0.1, 0.02
        for _ in range(200):
            x = rng.uniform(2.0, 20.0, (16, 16))
            v = fid.grad(x) + tau * (x - den(x))
            fast = x / (1.0 + gamma * x * v)
            generic = mirror_step(h, x, v, gamma)
            np.testing.assert_allclose(fast, generic, rtol=1e-10)


class TestRedObjective:
    def test_identity_denoiser_reduces_to_fidelity(self):
        fid = GaussianFidelity(np.zeros(3), IdentityOperator((3,)))
        x = np.array([1.0, 2.0, 3.0])
        assert red_objective(fid, IdentityDenoiser(), 0.5, x) == pytest.approx(
            fid.value(x)
        )

    def test_tau_zero_reduces_to_fidelity(self):
        fid = GaussianFidelity(np.ones((4, 4)), IdentityOperator((4, 4)))
        x = np.full((4, 4), 0.5)
        assert red_objective(fid, LinearSmoother(0.5), 0.0, x) == pytest.approx(
            fid.value(x)
        )

    def test_contraction_closed_form(self):
        fid = GaussianFidelity(np.zeros(2), IdentityOperator((2,)))
        x = np.array([1.0, 1.0])
        rho = 0.25
        got = red_objective(fid, ScaledContraction(rho, anchor=0.0), 1.0, x)
        assert got == pytest.approx(fid.value(x) + (1 - rho) * 2.0, rel=1e-12)


class TestTheoremGate:
    def test_worked_example(self):
        cert = theorem_gate(1.0, 1.0, 1.0, 2.0, 2.0)
        assert cert.m_bound == pytest.approx(3.0)
        assert cert.gamma_interval[0] == pytest.approx(0.5)
        assert cert.gamma_interval[1] == pytest.approx(0.75)
        assert cert.satisfied

    def test_vacuous_bound_when_denominator_vanishes(self):
        cert = theorem_gate(1.0, 1.0, 1.0, 1.0, 5.0)
        assert math.isinf(cert.m_bound)
        assert cert.satisfied
        assert not cert.interval_empty

    def test_violated_bound_still_reports_interval(self):
        cert = theorem_gate(1.0, 1.0, 1.0, 2.0, 4.0)
        assert not cert.satisfied
        lo, hi = cert.gamma_interval
        assert lo == pytest.approx(0.75)
        assert hi == pytest.approx(0.625)
        assert cert.interval_empty

    def test_rejects_bad_constants(self):
        with pytest.raises(ValueError):
            theorem_gate(0.0, 1.0, 1.0, 2.0, 1.0)
        with pytest.raises(ValueError):
            theorem_gate(2.0, 1.0, 1.0, 2.0, 1.0)
        with pytest.raises(ValueError):
            theorem_gate(1.0, 1.0, 3.0, 2.0, 1.0)


class TestRunMechanics:
    def test_trace_lengths_match_iterations(self):
        rng = np.random.default_rng(60)
        fid, clean = gaussian_deblur_instance(rng, shape=(8, 8))
        cfg = SolverConfig("pgm", fid, x0=np.zeros((8, 8)), gamma=0.5,
                           max_iters=17, tol=0.0, ground_truth=clean, peak=1.0)
        report = pgm(cfg)
        assert report.iterations_used == 17
        assert len(report.residuals) == 17
        assert len(report.objective) == 17
        assert len(report.psnr_trace) == 17

    def test_bit_identical_reports_for_identical_configs(self):
        rng = np.random.default_rng(61)
        fid, _ = poisson_deblur_instance(rng, shape=(8, 8))
        x0 = np.maximum(fid.y, 1e-8)
        make = lambda: SolverConfig(
            "pnp-bpgm", fid, x0=x0, h=burg_entropy((1e-4, 40.0)),
            denoiser=LinearSmoother(0.5), gamma=0.5, max_iters=30, tol=0.0)
        a = solve(make())
        b = solve(make())
        assert a.to_json() == b.to_json()
        np.testing.assert_array_equal(a.final, b.final)

    def test_report_json_round_trip(self):
        import json

        fid = GaussianFidelity(np.zeros(4), IdentityOperator((4,)))
        report = solve(SolverConfig("pgm", fid, x0=np.ones(4), gamma=0.5,
                                    max_iters=3, tol=0.0))
        blob = json.loads(report.to_json())
        assert blob["algorithm"] == "pgm"
        assert blob["iterations_used"] == 3
        assert blob["final_shape"] == [4]
        assert len(blob["residuals"]) == 3

    def test_default_x0_shapes_and_clamp(self):
        rng = np.random.default_rng(62)
        y = np.zeros((6, 6))
        fid = PoissonFidelity(y, ConvolutionOperator(uniform_kernel(3), (6, 6)))
        x0 = default_x0(fid, peak=8.0, rng=rng, clamp=1e-8)
        assert x0.shape == (6, 6)
        assert x0.min() >= 1e-8

    def test_wrong_entry_point_rejected(self):
        fid = GaussianFidelity(np.zeros(2), IdentityOperator((2,)))
        cfg = SolverConfig("pgm", fid, x0=np.zeros(2))
        with pytest.raises(ValueError, match="entry point"):
            bpgm(cfg)

    def test_mismatched_x0_shape_rejected(self):
        fid = GaussianFidelity(np.zeros(3), IdentityOperator((3,)))
        cfg = SolverConfig("pgm", fid, x0=np.zeros(4))
        with pytest.raises(ValueError, match="x0"):
            pgm(cfg)
