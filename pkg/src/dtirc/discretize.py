"""Collocated modal plants and zero-order-hold sampling."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .errors import DimensionError, FormatError
from .state_space import ContinuousStateSpace, DiscreteStateSpace

# Synthetic stand-in for the X-axis stage: only the resonance frequency and
# sampling rate come from the experiment; damping and DC gain are chosen.
DEMO_RESONANCE_HZ = 14.86e3
DEMO_ZETA = 0.005
DEMO_SAMPLE_PERIOD = 1.0 / 1.25e6


@dataclass(frozen=True)
class Mode:
    freq_hz: float
    zeta: float
    gain: float = 1.0


@dataclass(frozen=True)
class ModalSpec:
    modes: tuple
    dc_normalization: float | None = None

    def __post_init__(self):
        modes = tuple(m if isinstance(m, Mode) else Mode(*m) for m in self.modes)
        if not modes:
            raise DimensionError("a modal spec needs at least one mode")
        freqs = [m.freq_hz for m in modes]
        if any(f <= 0 for f in freqs) or any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise DimensionError("mode frequencies must be positive and strictly increasing")
        for m in modes:
            if not 0 < m.zeta < 1:
                raise DimensionError(f"damping ratio {m.zeta} outside (0, 1)")
            if not m.gain > 0:
                raise DimensionError(f"modal gain {m.gain} must be positive")
        if self.dc_normalization is not None and not self.dc_normalization > 0:
            raise DimensionError("dc_normalization must be positive")
        object.__setattr__(self, "modes", modes)

    def to_dict(self):
        return {
            "modes": [
                {"freq_hz": m.freq_hz, "zeta": m.zeta, "gain": m.gain} for m in self.modes
            ],
            "dc_normalization": self.dc_normalization,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            modes = [
                Mode(float(m["freq_hz"]), float(m["zeta"]), float(m.get("gain", 1.0)))
                for m in data["modes"]
            ]
            dc = data.get("dc_normalization")
            return cls(tuple(modes), None if dc is None else float(dc))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed modal spec: {exc}") from None


def demo_spec(zeta=DEMO_ZETA, extra_modes=()):
    modes = [Mode(DEMO_RESONANCE_HZ, zeta, 1.0), *extra_modes]
    return ModalSpec(tuple(modes), dc_normalization=1.0)


def build_modal_plant(spec):
    """Block-diagonal force-to-position model, one 2x2 block per mode.

    Mode i contributes g_i^2 / (s^2 + 2 zeta_i w_i s + w_i^2).  With
    ``dc_normalization`` set, all gains are scaled by a common factor so
    that G(0) hits the target.
    """
    k = len(spec.modes)
    w = np.array([2 * np.pi * m.freq_hz for m in spec.modes])
    g = np.array([m.gain for m in spec.modes])
    if spec.dc_normalization is not None:
        g = g * np.sqrt(spec.dc_normalization / np.sum(g**2 / w**2))
    A = np.zeros((2 * k, 2 * k))
    B = np.zeros((2 * k, 1))
    C = np.zeros((1, 2 * k))
    for i, m in enumerate(spec.modes):
        j = 2 * i
        A[j : j + 2, j : j + 2] = [[0.0, 1.0], [-w[i] ** 2, -2 * m.zeta * w[i]]]
        B[j + 1, 0] = g[i]
        C[0, j] = g[i]
    return ContinuousStateSpace(A, B, C)


def zoh_sample(sys, Ts):
    """Exact ZOH discretization via the exponential of [[A, B], [0, 0]] Ts."""
    Ts = float(Ts)
    if not Ts > 0:
        raise DimensionError("sample period must be positive")
    if np.any(sys.D != 0):
        raise DimensionError("ZOH sampling here expects a strictly proper plant (D = 0)")
    n, p = sys.n, sys.p
    M = np.zeros((n + p, n + p))
    M[:n, :n] = sys.A
    M[:n, n:] = sys.B
    E = expm(M * Ts)
    return DiscreteStateSpace(E[:n, :n], E[:n, n:], sys.C, sample_period=Ts)


def load_modal_spec(path):
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise FormatError(f"modal spec not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    return ModalSpec.from_dict(data)
