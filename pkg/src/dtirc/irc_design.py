"""Integral resonant controller realizations and parameter synthesis."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DefinitenessError, DimensionError, FormatError
from .state_space import (
    ContinuousStateSpace,
    DiscreteStateSpace,
    as_matrix,
    require_symmetric,
    sym_eigvals,
)

INEQ_RTOL = 1e-10


def _margin(M):
    """Smallest eigenvalue of a symmetric matrix and the tolerance for its sign."""
    w = sym_eigvals(M)
    return float(w[0]), INEQ_RTOL * max(1.0, float(np.max(np.abs(w))))


@dataclass(frozen=True, eq=False)
class IrcParams:
    """Symmetric gains with Gamma > 0 and D < 0."""

    Gamma: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        G = require_symmetric(as_matrix(self.Gamma, "Gamma"), "Gamma")
        D = require_symmetric(as_matrix(self.D, "D"), "D")
        if G.shape != D.shape:
            raise DimensionError(f"Gamma {G.shape} and D {D.shape} differ in size")
        lo, eps = _margin(G)
        if not lo > eps:
            raise DefinitenessError(f"Gamma must be positive definite (min eig {lo:.3e})")
        lo, eps = _margin(-D)
        if not lo > eps:
            raise DefinitenessError(f"D must be negative definite (max eig {-lo:.3e})")
        object.__setattr__(self, "Gamma", G)
        object.__setattr__(self, "D", D)

    @property
    def p(self):
        return self.Gamma.shape[0]

    @property
    def lower_bound(self):
        """-2 Gamma^-1, the smallest admissible D."""
        return -2.0 * np.linalg.inv(self.Gamma)

    @property
    def sani_margin(self):
        """lambda_min(D + 2 Gamma^-1); >= 0 for the SANI property, > 0 to stabilize."""
        return _margin(self.D - self.lower_bound)[0]

    @property
    def gain_admissible(self):
        lo, eps = _margin(self.D - self.lower_bound)
        return lo >= -eps

    @property
    def stabilizing(self):
        lo, eps = _margin(self.D - self.lower_bound)
        return lo > eps

    def to_dict(self):
        return {"Gamma": self.Gamma.tolist(), "D": self.D.tolist()}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(data["Gamma"], data["D"])
        except KeyError as exc:
            raise FormatError(f"params missing field {exc.args[0]!r}") from None
        except TypeError as exc:
            raise FormatError(f"malformed params: {exc}") from None


@dataclass(frozen=True, eq=False)
class SaniController:
    """Step-advanced IRC: x+ = (I + Gamma D) x + Gamma u,  y = (I + Gamma D) x + Gamma u."""

    realization: DiscreteStateSpace
    params: IrcParams


def continuous_irc(params):
    """dx/dt = Gamma D x + Gamma u, y = x, i.e. K(s) = (sI - Gamma D)^-1 Gamma."""
    G, D = params.Gamma, params.D
    return ContinuousStateSpace(G @ D, G, np.eye(params.p))


def discrete_k(params, sample_period=None):
    """The NI system x+ = (I + Gamma D) x + Gamma u, y = x."""
    G, D = params.Gamma, params.D
    p = params.p
    return DiscreteStateSpace(np.eye(p) + G @ D, G, np.eye(p), sample_period)


def build_irc(params, sample_period=None):
    """Discrete IRC with one-step output advance, F(z) = z [zI - (I + Gamma D)]^-1 Gamma.

    Outside ``-2 Gamma^-1 <= D`` the controller is still built, with a
    warning; it is then neither SANI-certified nor stabilizing.
    """
    if not params.gain_admissible:
        warnings.warn(
            "D < -2 Gamma^-1: controller built but not SANI; "
            f"margin {params.sani_margin:.3e}",
            stacklevel=2,
        )
    G, D = params.Gamma, params.D
    Ac = np.eye(params.p) + G @ D
    real = DiscreteStateSpace(Ac, G, Ac, sample_period, D=G)
    return SaniController(real, params)


def synthesize_params(G1, delta=None, beta=0.5):
    """Pick D < -G(1) and then Gamma < -2 D^-1.

    D = -(G1 + delta I) and Gamma = beta * (-2 D^-1).  ``delta`` defaults to
    2 * lambda_max(G1).
    """
    G1 = as_matrix(G1, "G1")
    try:
        G1 = require_symmetric(G1, "G1", rtol=1e-9)
    except DefinitenessError:
        raise DefinitenessError(
            "G(1) must be symmetric positive definite for an NI plant "
            "(G(1) = C P^-1 C')"
        ) from None
    G1 = 0.5 * (G1 + G1.T)
    w = sym_eigvals(G1)
    if not w[0] > 0:
        raise DefinitenessError(
            "G(1) must be positive definite for an NI plant (G(1) = C P^-1 C'); "
            f"min eig {w[0]:.3e}"
        )
    if delta is None:
        delta = 2.0 * float(w[-1])
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    p = G1.shape[0]
    D = -(G1 + delta * np.eye(p))
    Gamma = beta * (-2.0 * np.linalg.inv(D))
    D = 0.5 * (D + D.T)
    Gamma = 0.5 * (Gamma + Gamma.T)
    return IrcParams(Gamma, D)


def load_params(path):
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise FormatError(f"params file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    return IrcParams.from_dict(data)


def save_params(params, path):
    Path(path).write_text(json.dumps(params.to_dict(), indent=2) + "\n")
