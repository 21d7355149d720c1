import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtirc.errors import DefinitenessError, DimensionError, FormatError
from dtirc.irc_design import (
    IrcParams,
    build_irc,
    continuous_irc,
    discrete_k,
    load_params,
    save_params,
    synthesize_params,
)
from dtirc.ni_cert import verify_candidate
from dtirc.state_space import dc_gain, eval_transfer, spectral_radius


def admissible_params(rng, p, frac=None):
    G = rng.standard_normal((p, p))
    Gamma = G @ G.T + 0.1 * np.eye(p)
    frac = rng.uniform(0.05, 1.0) if frac is None else frac
    D = -frac * 2.0 * np.linalg.inv(Gamma)
    return IrcParams(0.5 * (Gamma + Gamma.T), 0.5 * (D + D.T))


class TestIrcParams:
    def test_definiteness(self):
        with pytest.raises(DefinitenessError):
            IrcParams(-1.0, -1.0)
        with pytest.raises(DefinitenessError):
            IrcParams(1.0, 1.0)
        with pytest.raises(DefinitenessError):
            IrcParams([[1.0, 0.5], [0.0, 1.0]], -np.eye(2))

    def test_size_mismatch(self):
        with pytest.raises(DimensionError):
            IrcParams(np.eye(2), -1.0)

    def test_flags(self):
        p = IrcParams(0.01, -3.0)
        assert p.stabilizing and p.gain_admissible
        assert p.sani_margin == pytest.approx(197.0)
        boundary = IrcParams(2.0, -1.0)
        assert boundary.gain_admissible and not boundary.stabilizing
        outside = IrcParams(1.0, -3.0)
        assert not outside.gain_admissible and not outside.stabilizing

    def test_json(self, tmp_path):
        p = IrcParams([[0.5, 0.1], [0.1, 0.4]], -2 * np.eye(2))
        save_params(p, tmp_path / "p.json")
        q = load_params(tmp_path / "p.json")
        np.testing.assert_array_equal(q.Gamma, p.Gamma)
        with pytest.raises(FormatError):
            IrcParams.from_dict({"Gamma": [[1.0]]})
        with pytest.raises(FormatError):
            load_params(tmp_path / "missing.json")


class TestRealizations:
    def test_continuous(self):
        sys = continuous_irc(IrcParams(0.01, -3.0))
        assert sys.A[0, 0] == pytest.approx(-0.03)
        assert sys.B[0, 0] == 0.01 and sys.C[0, 0] == 1.0
        assert continuous_irc(IrcParams(2.0, -4.0)).dc_gain()[0, 0] == pytest.approx(0.25)

    def test_discrete_k(self):
        k = discrete_k(IrcParams(0.01, -3.0))
        assert k.A[0, 0] == pytest.approx(0.97) and k.B[0, 0] == 0.01 and k.C[0, 0] == 1.0
        assert dc_gain(k)[0, 0] == pytest.approx(1 / 3)
        k2 = discrete_k(IrcParams(np.eye(2), -np.eye(2)))
        np.testing.assert_array_equal(k2.A, np.zeros((2, 2)))

    def test_step_advanced_structure(self):
        ctrl = build_irc(IrcParams(0.01, -3.0), 8e-7)
        r = ctrl.realization
        np.testing.assert_array_equal(r.C, r.A)
        np.testing.assert_array_equal(r.D, r.B)
        assert r.A[0, 0] == pytest.approx(0.97) and r.sample_period == 8e-7

    def test_steady_state_under_constant_input(self):
        r = build_irc(IrcParams(0.01, -3.0)).realization
        x = 0.0
        for _ in range(5000):
            x = r.A[0, 0] * x + r.B[0, 0]
        assert x == pytest.approx(1 / 3, rel=1e-12)

    def test_warns_outside_range(self):
        with pytest.warns(UserWarning):
            ctrl = build_irc(IrcParams(1.0, -3.0))
        assert not ctrl.params.stabilizing

    def test_no_warning_inside_range(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            build_irc(IrcParams(0.01, -3.0))

    def test_sani_transfer_is_z_times_k(self, rng):
        params = admissible_params(rng, 2)
        F = build_irc(params).realization
        K = discrete_k(params)
        for _ in range(50):
            z = complex(*rng.uniform(-2, 2, 2))
            if np.min(np.abs(np.linalg.eigvals(K.A) - z)) < 1e-3:
                continue
            np.testing.assert_allclose(eval_transfer(F, z), z * eval_transfer(K, z), rtol=1e-10, atol=1e-12)


class TestSynthesis:
    def test_scalar_default(self):
        p = synthesize_params(1.0)
        assert p.D[0, 0] == -3.0
        assert 0.010 < -2 / p.D[0, 0]

    def test_identity(self):
        p = synthesize_params(np.eye(2), delta=1.0, beta=0.5)
        np.testing.assert_allclose(p.D, -2 * np.eye(2))
        np.testing.assert_allclose(p.Gamma, 0.5 * np.eye(2))

    def test_rejects_non_positive_g1(self):
        with pytest.raises(DefinitenessError, match="positive definite"):
            synthesize_params(-1.0)
        with pytest.raises(DefinitenessError):
            synthesize_params([[1.0, 2.0], [0.0, 1.0]])

    def test_rejects_bad_margins(self):
        with pytest.raises(ValueError):
            synthesize_params(1.0, delta=-1.0)
        with pytest.raises(ValueError):
            synthesize_params(1.0, beta=1.0)

    @settings(max_examples=60, deadline=None)
    @given(
        seed=st.integers(0, 2**31 - 1),
        p=st.integers(1, 4),
        delta=st.one_of(st.none(), st.floats(1e-2, 10.0)),
        beta=st.floats(0.05, 0.95),
    )
    def test_strict_inequalities(self, seed, p, delta, beta):
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((p, p))
        G1 = M @ M.T + 0.05 * np.eye(p)
        params = synthesize_params(G1, delta, beta)
        assert params.stabilizing
        d = 2 * np.linalg.eigvalsh(G1)[-1] if delta is None else delta
        bound = min(d, 1 - beta) * 1e-3
        assert np.linalg.eigvalsh(params.D + 2 * np.linalg.inv(params.Gamma))[0] >= bound
        assert np.linalg.eigvalsh(-params.D - G1)[0] >= bound


class TestCoreCertificate:
    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), p=st.integers(1, 4))
    def test_minus_d_certifies_core(self, seed, p):
        rng = np.random.default_rng(seed)
        params = admissible_params(rng, p)
        cert = verify_candidate(discrete_k(params), -params.D)
        assert cert.accepted, cert.failures

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), p=st.integers(1, 4))
    def test_dc_identity(self, seed, p):
        params = admissible_params(np.random.default_rng(seed), p)
        np.testing.assert_allclose(
            dc_gain(discrete_k(params)), -np.linalg.inv(params.D), rtol=1e-10, atol=1e-10
        )

    def test_core_is_stable_inside_range(self, rng):
        for _ in range(20):
            params = admissible_params(rng, 3)
            assert spectral_radius(discrete_k(params).A) <= 1 + 1e-12
