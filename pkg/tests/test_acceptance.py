"""Acceptance criteria; a PASS/FAIL line per criterion is printed in the terminal summary."""

import doctest
import math
import time

import numpy as np
import pytest

from conftest import random_ni_plant
from dtirc import interconnect
from dtirc.discretize import (
    DEMO_SAMPLE_PERIOD,
    Mode,
    ModalSpec,
    build_modal_plant,
    demo_spec,
    zoh_sample,
)
from dtirc.interconnect import (
    certify_closed_loop,
    close_loop,
    closed_loop_system,
    decomposition_check,
)
from dtirc.irc_design import IrcParams, build_irc, discrete_k, synthesize_params
from dtirc.ni_cert import (
    SEARCH_MAX_ITERS,
    check_dissipation_empirical,
    find_certificate,
    verify_candidate,
)
from dtirc.sim_analysis import damping_report, frf, simulate, simulate_coupled
from dtirc.state_space import (
    ContinuousStateSpace,
    DiscreteStateSpace,
    dc_gain,
    spectral_radius,
)

REFERENCE_REDUCTION_DB = 14.4


def taylor_expm(M, terms=30):
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms):
        term = term @ M / k
        out = out + term
    return out


@pytest.mark.acceptance(1, "storage -D certifies the IRC core for 100 random admissible gains")
def test_core_certificate_suite():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for trial in range(100):
        p = 1 + trial % 4
        Qg, _ = np.linalg.qr(rng.standard_normal((p, p)))
        Gamma = (Qg * rng.uniform(0.1, 10.0, p)) @ Qg.T
        Gamma = 0.5 * (Gamma + Gamma.T)
        w, V = np.linalg.eigh(Gamma)
        Gm12 = (V / np.sqrt(w)) @ V.T
        # D = -2 Gamma^-1/2 S Gamma^-1/2 with 0 < S <= I; every tenth draw on the boundary
        if trial % 10 == 0:
            S = np.eye(p)
        else:
            Qs, _ = np.linalg.qr(rng.standard_normal((p, p)))
            S = (Qs * rng.uniform(0.05, 1.0, p)) @ Qs.T
        D = -2.0 * Gm12 @ S @ Gm12
        D = 0.5 * (D + D.T)
        params = IrcParams(Gamma, D)
        cert = verify_candidate(discrete_k(params), -D)
        assert cert.accepted, cert.failures
        assert cert.equality_residual <= 1e-9
        assert cert.max_eig_lyap_scaled <= 1e-9
        worst = max(worst, cert.equality_residual)
    assert time.perf_counter() - t0 < 5.0
    print(f"worst equality residual {worst:.2e}")


@pytest.mark.acceptance(2, "200 random NI plants with synthesized gains certified stable")
def test_closed_loop_suite():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    for trial in range(200):
        n = int(rng.integers(1, 9))
        p = int(rng.integers(1, min(n, 3) + 1))
        plant, P = random_ni_plant(rng, n, p)
        params = synthesize_params(dc_gain(plant))
        cl = certify_closed_loop(plant, P, params)
        assert cl.accepted, (trial, cl.failures)
        assert cl.spectral_radius < 1.0
        dec = decomposition_check(plant, P, params)
        assert dec.precondition_holds
        assert dec.residual <= 1e-8 * dec.scale
    assert time.perf_counter() - t0 < 30.0


@pytest.mark.acceptance(3, "dissipation inequality on 100 systems x 100 input sequences")
def test_dissipation_inequality():
    rng = np.random.default_rng(3)
    worst = -np.inf
    for _ in range(100):
        n = int(rng.integers(1, 7))
        p = int(rng.integers(1, min(n, 3) + 1))
        plant, P = random_ni_plant(rng, n, p)
        assert verify_candidate(plant, P).accepted
        U = rng.standard_normal((100, 1000, p))
        x0 = rng.standard_normal((100, n))
        tr = check_dissipation_empirical(plant, P, U, x0)
        scale = 1.0 + np.linalg.norm(P, 2) * tr.max_state_sq
        assert tr.worst_violation <= 1e-8 * scale
        worst = max(worst, tr.worst_violation / scale)
    print(f"largest scaled violation {worst:.2e}")


@pytest.mark.acceptance(4, "single-mode stage demo: hypotheses certified, reduction > 6 dB")
def test_demo_scenario():
    t0 = time.perf_counter()
    plant = zoh_sample(build_modal_plant(demo_spec()), DEMO_SAMPLE_PERIOD)
    params = IrcParams(0.010, -3.0)
    ctrl = build_irc(params, DEMO_SAMPLE_PERIOD)
    cert = find_certificate(plant)
    assert cert.accepted
    cl = certify_closed_loop(plant, cert, params)
    assert cl.accepted, cl.failures
    for name in ("det(I - A) != 0", "D > -2 Gamma^-1", "D < -G(1)"):
        assert cl.condition(name).margin > 0
    assert cl.condition("D < -G(1)").margin == pytest.approx(2.0, abs=1e-9)
    rep = damping_report(plant, ctrl, (1e3, 1e5))
    assert rep.reduction_db > 6.0
    assert time.perf_counter() - t0 < 10.0
    print(
        f"computed reduction {rep.reduction_db:.2f} dB vs "
        f"reference hardware figure {REFERENCE_REDUCTION_DB} dB"
    )


@pytest.mark.acceptance(5, "numerical oracles: series exponential, DFT, coupled simulation")
def test_numerical_oracles():
    # matrix exponential on the augmented ZOH matrix, scaled so ||M|| <= 1
    rng = np.random.default_rng(5)
    spec = ModalSpec((Mode(14.86e3, 0.005), Mode(52e3, 0.01, 0.7)), 1.0)
    cont = build_modal_plant(spec)
    n, p = cont.n, cont.p
    M = np.zeros((n + p, n + p))
    M[:n, :n], M[:n, n:] = cont.A, cont.B
    Ts = 1.0 / np.linalg.norm(M, 2)
    E = taylor_expm(M * Ts)
    sd = zoh_sample(cont, Ts)
    assert np.max(np.abs(sd.A - E[:n, :n])) <= 1e-12
    assert np.max(np.abs(sd.B - E[:n, n:])) <= 1e-12
    for _ in range(5):
        A = rng.standard_normal((3, 3))
        A /= np.linalg.norm(A, 2)
        c = ContinuousStateSpace(A, rng.standard_normal((3, 1)), rng.standard_normal((1, 3)))
        Mx = np.zeros((4, 4))
        Mx[:3, :3], Mx[:3, 3:] = c.A, c.B
        Mx *= 0.9 / np.linalg.norm(Mx, 2)
        Ex = taylor_expm(Mx)
        ds = zoh_sample(ContinuousStateSpace(Mx[:3, :3], Mx[:3, 3:], c.C), 1.0)
        assert np.max(np.abs(ds.A - Ex[:3, :3])) <= 1e-12
        assert np.max(np.abs(ds.B - Ex[:3, 3:])) <= 1e-12

    # FRF against the DFT of a long impulse response
    plant = zoh_sample(build_modal_plant(demo_spec()), DEMO_SAMPLE_PERIOD)
    N = 2**18
    h = simulate(plant, "impulse", None, N).y[:, 0]
    H = np.fft.rfft(h)
    bins = np.array([1, 5, 20, 40, 50, 80, 200, 1000, 5000])
    f = bins / (N * DEMO_SAMPLE_PERIOD)
    G = frf(plant, f).siso()
    rel = np.abs(G - H[bins]) / np.abs(H[bins])
    assert np.max(rel) <= 1e-6

    # coupled simulation against the assembled closed-loop matrix
    scalar = DiscreteStateSpace([[0.5]], [[1.0]], [[0.5]], 1.0)
    ctrl = build_irc(IrcParams(0.01, -3.0))
    d = rng.standard_normal((100_000, 1))
    z0 = np.array([1.0, -1.0])
    a = simulate_coupled(scalar, ctrl, d, z0, 100_000)
    b = simulate(closed_loop_system(scalar, ctrl), d, z0, 100_000)
    assert np.max(np.abs(a.x - b.x)) <= 1e-12
    assert np.max(np.abs(a.y - b.y)) <= 1e-12


@pytest.mark.acceptance(6, "sampled modal plants certified NI within the iteration budget")
def test_zoh_preserves_ni():
    extra = Mode(45e3, 0.01, 0.6)
    for zeta in (0.002, 0.01, 0.05):
        for extra_modes in ((), (extra,)):
            plant = zoh_sample(
                build_modal_plant(demo_spec(zeta, extra_modes)), DEMO_SAMPLE_PERIOD
            )
            cert = find_certificate(plant)
            assert cert.accepted, (zeta, len(extra_modes) + 1, cert.reason)
            assert cert.iterations <= SEARCH_MAX_ITERS


@pytest.mark.acceptance(7, "scalar worked example")
def test_scalar_worked_example(scalar_plant):
    params = IrcParams(0.01, -3.0)
    A_hat = close_loop(scalar_plant, params)
    np.testing.assert_allclose(A_hat, [[0.505, 0.97], [0.005, 0.97]], atol=1e-15)

    tr, det = 0.505 + 0.97, 0.505 * 0.97 - 0.97 * 0.005
    disc = tr * tr - 4 * det
    rho_oracle = 0.5 * (tr + math.sqrt(disc))
    assert spectral_radius(A_hat) == pytest.approx(rho_oracle, abs=1e-12)
    assert abs(spectral_radius(A_hat) - 0.9802) <= 1e-4

    Q_listed = np.array([[1.0, -0.5], [-0.5, 3.0]])
    assert np.linalg.eigvalsh(Q_listed)[0] > 0

    # With C = 0.5 the storage that satisfies the equality condition is 0.25, not 1.
    assert not verify_candidate(scalar_plant, 1.0).accepted
    assert verify_candidate(scalar_plant, 0.25).accepted
    assert find_certificate(scalar_plant).P[0, 0] == pytest.approx(0.25)
    cl = certify_closed_loop(scalar_plant, 0.25, params)
    assert cl.accepted
    np.testing.assert_allclose(cl.Q, [[0.25, -0.5], [-0.5, 3.0]])

    finder = doctest.DocTestFinder()
    runner = doctest.DocTestRunner()
    for test in finder.find(interconnect.close_loop, "close_loop", globs={"close_loop": close_loop}):
        runner.run(test)
    assert runner.failures == 0
