"""Simulation, frequency responses and damping summaries."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DefinitenessError, DimensionError
from .interconnect import certify_closed_loop, close_loop
from .irc_design import IrcParams, SaniController, build_irc
from .ni_cert import find_certificate
from .state_space import DiscreteStateSpace, as_matrix, eval_transfer_many

POINTS_PER_DECADE = 2000
PEAK_XATOL_HZ = 1e-3
SINGULAR_LOOP_RTOL = 1e-12


# --- signals -----------------------------------------------------------------


@dataclass(frozen=True)
class Signal:
    """Input signal description.

    kind is one of ``zero``, ``step``, ``impulse``, ``sine`` or ``samples``.
    ``direction`` picks the input channel pattern for multi-port systems
    (defaults to all ones).
    """

    kind: str = "zero"
    amplitude: float = 1.0
    freq_hz: float | None = None
    samples: np.ndarray | None = None
    direction: tuple | None = None

    KINDS = ("zero", "step", "impulse", "sine", "samples")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "sine" and (self.freq_hz is None or not self.freq_hz >= 0):
            raise ValueError("sine needs a nonnegative freq_hz")
        if self.kind == "samples" and self.samples is None:
            raise ValueError("samples signal needs data")

    def render(self, steps, p, sample_period=None):
        """Input array of shape (steps, p)."""
        if self.kind == "samples":
            U = np.asarray(self.samples, dtype=float)
            if U.ndim == 1:
                U = U[:, None]
            if U.shape != (steps, p):
                raise DimensionError(f"samples must have shape ({steps}, {p}), got {U.shape}")
            return U
        dirn = np.ones(p) if self.direction is None else np.asarray(self.direction, float)
        if dirn.shape != (p,):
            raise DimensionError(f"direction must have {p} entries")
        if self.kind == "zero":
            wave = np.zeros(steps)
        elif self.kind == "step":
            wave = np.full(steps, float(self.amplitude))
        elif self.kind == "impulse":
            wave = np.zeros(steps)
            if steps:
                wave[0] = float(self.amplitude)
        else:
            if sample_period is None:
                raise DimensionError("a sine input needs a sample period")
            nyq = 0.5 / sample_period
            if self.freq_hz >= nyq:
                raise ValueError(f"sine at {self.freq_hz} Hz is not below Nyquist ({nyq} Hz)")
            k = np.arange(steps)
            wave = float(self.amplitude) * np.sin(2 * np.pi * self.freq_hz * sample_period * k)
        return wave[:, None] * dirn[None, :]


def _as_signal(signal):
    if signal is None:
        return Signal("zero")
    if isinstance(signal, str):
        return Signal(signal)
    if isinstance(signal, Signal):
        return signal
    return Signal("samples", samples=np.asarray(signal, dtype=float))


# --- time domain -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States, inputs and outputs for k = 0..steps-1, plus the state after the last step."""

    k: np.ndarray
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    x_final: np.ndarray
    sample_period: float | None = None

    @property
    def t(self):
        return self.k * (self.sample_period if self.sample_period else 1.0)

    def __len__(self):
        return len(self.k)


def _check_steps(steps):
    steps = int(steps)
    if steps <= 0:
        raise ValueError("steps must be positive")
    return steps


def simulate(sys, signal=None, x0=None, steps=100):
    """Run the state recursion exactly in double precision.

    ``sys`` is a :class:`DiscreteStateSpace` (feedthrough honoured) or a
    square matrix, in which case the system is autonomous with ``y = x``
    and ``signal`` must be zero.
    """
    steps = _check_steps(steps)
    if isinstance(sys, DiscreteStateSpace):
        A, B, C, Dm = sys.A, sys.B, sys.C, sys.feedthrough()
        Ts = sys.sample_period
    else:
        A = as_matrix(sys, "closed-loop matrix")
        if A.shape[0] != A.shape[1]:
            raise DimensionError("closed-loop matrix must be square")
        n = A.shape[0]
        B, C, Dm, Ts = np.zeros((n, 0)), np.eye(n), np.zeros((n, 0)), None
        sig = _as_signal(signal)
        if sig.kind != "zero":
            raise ValueError("a bare matrix has no input; use a zero signal")
    n, m = B.shape
    U = np.zeros((steps, 0)) if m == 0 else _as_signal(signal).render(steps, m, Ts)
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).ravel().copy()
    if x.shape != (n,):
        raise DimensionError(f"x0 must have {n} entries")
    X = np.empty((steps, n))
    BU = U @ B.T
    for k in range(steps):
        X[k] = x
        x = A @ x + BU[k]
    Y = X @ C.T + U @ Dm.T
    return Trajectory(np.arange(steps), X, U, Y, x, Ts)


def simulate_coupled(plant, ctrl, signal=None, x0=None, steps=100):
    """Plant and controller stepped separately, linked by u~ = y and u = y~ + d.

    Independent of :func:`close_loop`; used to cross-check it.  ``x0``
    stacks plant and controller states; the returned trajectory uses the
    same stacking and records the disturbance ``d`` as its input.
    """
    steps = _check_steps(steps)
    ctrl = ctrl if isinstance(ctrl, SaniController) else build_irc(ctrl)
    K = ctrl.realization
    n, p = plant.n, plant.p
    if K.p != p:
        raise DimensionError("port dimensions differ")
    Dist = _as_signal(signal).render(steps, p, plant.sample_period)
    z0 = np.zeros(n + p) if x0 is None else np.asarray(x0, dtype=float).ravel()
    if z0.shape != (n + p,):
        raise DimensionError(f"x0 must have {n + p} entries")
    x, xc = z0[:n].copy(), z0[n:].copy()
    A, B, C = plant.A, plant.B, plant.C
    Ac, Bc, Cc, Dc = K.A, K.B, K.C, K.feedthrough()
    Z = np.empty((steps, n + p))
    Y = np.empty((steps, p))
    for k in range(steps):
        Z[k, :n] = x
        Z[k, n:] = xc
        y = C @ x
        Y[k] = y
        yc = Cc @ xc + Dc @ y
        u = yc + Dist[k]
        x = A @ x + B @ u
        xc = Ac @ xc + Bc @ y
    return Trajectory(np.arange(steps), Z, Dist, Y, np.concatenate([x, xc]), plant.sample_period)


# --- frequency domain --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FrfCurve:
    """Frequency response on a grid; ``response`` has shape (N, p, p)."""

    freq_hz: np.ndarray
    response: np.ndarray
    flagged: np.ndarray

    @property
    def mag_db(self):
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.response))

    @property
    def phase_deg(self):
        ph = np.angle(self.response)
        return np.degrees(np.unwrap(ph, axis=0))

    def siso(self):
        """Scalar response for single-port systems."""
        if self.response.shape[1:] != (1, 1):
            raise DimensionError("curve is not single-input single-output")
        return self.response[:, 0, 0]


def _check_grid(grid, sample_period):
    f = np.asarray(grid, dtype=float).ravel()
    if f.size == 0:
        raise ValueError("empty frequency grid")
    if sample_period is None:
        raise DimensionError("frequency responses need the sample period")
    if np.any(f < 0) or np.any(np.diff(f) <= 0):
        raise ValueError("grid must be nonnegative and strictly increasing")
    nyq = 0.5 / sample_period
    if f[-1] >= nyq:
        raise ValueError(f"grid reaches {f[-1]} Hz, not below Nyquist ({nyq} Hz)")
    return f


def log_grid(lo_hz, hi_hz, points_per_decade=POINTS_PER_DECADE):
    if not 0 < lo_hz < hi_hz:
        raise ValueError("band must satisfy 0 < lo < hi")
    num = max(2, int(np.ceil(np.log10(hi_hz / lo_hz) * points_per_decade)) + 1)
    return np.logspace(np.log10(lo_hz), np.log10(hi_hz), num)


def _z(f, Ts):
    return np.exp(2j * np.pi * f * Ts)


def frf(sys, grid):
    """Samples of the transfer matrix at ``z = exp(j 2 pi f Ts)``."""
    f = _check_grid(grid, sys.sample_period)
    H, bad = eval_transfer_many(sys, _z(f, sys.sample_period))
    return FrfCurve(f, H, bad)


def _loop_response(plant, K, zs):
    G, bad_g = eval_transfer_many(plant, zs)
    F, bad_f = eval_transfer_many(K, zs)
    p = plant.p
    M = np.eye(p)[None] - F @ G
    M = np.where((bad_g | bad_f)[:, None, None], np.eye(p)[None], M)
    s = np.linalg.svd(M, compute_uv=False)
    bad = bad_g | bad_f | (s[:, -1] <= SINGULAR_LOOP_RTOL * np.maximum(s[:, 0], 1.0))
    M[bad] = np.eye(p)
    # H = G M^-1  <=>  M' H' = G'
    H = np.linalg.solve(np.swapaxes(M, 1, 2), np.swapaxes(np.nan_to_num(G), 1, 2))
    H = np.swapaxes(H, 1, 2)
    H[bad] = np.nan
    return H, bad


def closed_loop_frf(plant, ctrl, grid):
    """Input-disturbance to output response ``G (I - F G)^-1`` of the positive-feedback loop."""
    ctrl = ctrl if isinstance(ctrl, SaniController) else build_irc(ctrl)
    f = _check_grid(grid, plant.sample_period)
    H, bad = _loop_response(plant, ctrl.realization, _z(f, plant.sample_period))
    return FrfCurve(f, H, bad)


def _gain(H):
    """Largest singular value per grid point (|H| for scalars)."""
    if H.shape[1:] == (1, 1):
        return np.abs(H[:, 0, 0])
    return np.linalg.svd(H, compute_uv=False)[:, 0]


@dataclass(frozen=True)
class DampingReport:
    open_peak_db: float
    open_peak_hz: float
    closed_peak_db: float
    closed_peak_hz: float
    reduction_db: float

    def to_dict(self):
        return {
            "open_peak_db": self.open_peak_db,
            "open_peak_hz": self.open_peak_hz,
            "closed_peak_db": self.closed_peak_db,
            "closed_peak_hz": self.closed_peak_hz,
            "reduction_db": self.reduction_db,
        }


def _peak(fn, f):
    """Grid maximum of ``fn`` refined by bounded scalar search between neighbours."""
    g = fn(f)
    if not np.any(np.isfinite(g)):
        raise ValueError("no finite response in band")
    i = int(np.nanargmax(g))
    lo, hi = f[max(i - 1, 0)], f[min(i + 1, len(f) - 1)]
    best_f, best_g = float(f[i]), float(g[i])
    if hi > lo:
        res = minimize_scalar(
            lambda x: -float(fn(np.array([x]))[0]),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": PEAK_XATOL_HZ},
        )
        if np.isfinite(res.fun) and -res.fun > best_g:
            best_f, best_g = float(res.x), float(-res.fun)
    return best_f, float(20.0 * np.log10(best_g))


def damping_report(plant, ctrl, search_band, points_per_decade=POINTS_PER_DECADE):
    """Open- and closed-loop resonance peaks within ``search_band`` (Hz)."""
    lo, hi = (float(v) for v in search_band)
    if not 0 < lo < hi:
        raise ValueError(f"empty search band ({lo}, {hi})")
    ctrl = ctrl if isinstance(ctrl, SaniController) else build_irc(ctrl)
    Ts = plant.sample_period
    f = _check_grid(log_grid(lo, hi, points_per_decade), Ts)

    def open_gain(fr):
        return _gain(eval_transfer_many(plant, _z(fr, Ts))[0])

    def closed_gain(fr):
        return _gain(_loop_response(plant, ctrl.realization, _z(fr, Ts))[0])

    of, odb = _peak(open_gain, f)
    cf, cdb = _peak(closed_gain, f)
    return DampingReport(odb, of, cdb, cf, odb - cdb)


@dataclass(frozen=True, eq=False)
class SweepEntry:
    gamma: np.ndarray
    admissible: bool
    certified: bool
    report: DampingReport | None
    spectral_radius: float = float("nan")
    reason: str = ""

    def to_dict(self):
        return {
            "gamma": self.gamma.tolist(),
            "admissible": self.admissible,
            "certified": self.certified,
            "spectral_radius": self.spectral_radius,
            "reason": self.reason,
            "report": None if self.report is None else self.report.to_dict(),
        }


def gamma_sweep(plant, D, gammas, search_band, P=None, points_per_decade=POINTS_PER_DECADE):
    """One damping report per candidate Gamma with D held fixed.

    Candidates outside ``0 < Gamma < -2 D^-1`` yield an inadmissible entry.
    ``P`` is the plant's NI storage matrix; it is searched for once when
    not supplied.
    """
    D = as_matrix(D, "D")
    if P is None:
        cert = find_certificate(plant)
        P = cert.P if cert.accepted else None
    entries = []
    for g in gammas:
        G = as_matrix(g, "Gamma")
        if G.shape == (1, 1) and D.shape[0] > 1:
            G = G[0, 0] * np.eye(D.shape[0])
        try:
            params = IrcParams(G, D)
        except (DefinitenessError, DimensionError) as exc:
            entries.append(SweepEntry(G, False, False, None, reason=str(exc)))
            continue
        if not params.stabilizing:
            entries.append(
                SweepEntry(
                    G, False, False, None,
                    reason=f"Gamma outside (0, -2 D^-1): margin {params.sani_margin:.3e}",
                )
            )
            continue
        ctrl = build_irc(params, plant.sample_period)
        if P is None:
            rho = float(np.max(np.abs(np.linalg.eigvals(close_loop(plant, ctrl)))))
            certified, reason = False, "no NI certificate for the plant"
        else:
            cl = certify_closed_loop(plant, P, params)
            rho, certified = cl.spectral_radius, cl.accepted
            reason = "" if certified else "; ".join(cl.failures)
        report = damping_report(plant, ctrl, search_band, points_per_decade)
        entries.append(SweepEntry(G, True, certified, report, rho, reason))
    return entries


# --- CSV ---------------------------------------------------------------------


def _fmt(x):
    return repr(float(x))


def frf_csv(curve):
    """CSV text with columns freq_hz, re, im, mag_db, phase_deg.

    Multi-port curves get one column group per entry, suffixed ``_ij``.
    """
    H = curve.response
    p = H.shape[1]
    mag, ph = curve.mag_db, curve.phase_deg
    pairs = [(i, j) for i in range(p) for j in range(p)]
    suffix = (lambda i, j: "") if p == 1 else (lambda i, j: f"_{i + 1}{j + 1}")
    header = ["freq_hz"]
    for i, j in pairs:
        header += [f"{c}{suffix(i, j)}" for c in ("re", "im", "mag_db", "phase_deg")]
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for r, f in enumerate(curve.freq_hz):
        row = [_fmt(f)]
        for i, j in pairs:
            h = H[r, i, j]
            row += [_fmt(h.real), _fmt(h.imag), _fmt(mag[r, i, j]), _fmt(ph[r, i, j])]
        out.write(",".join(row) + "\n")
    return out.getvalue()


def trajectory_csv(traj):
    """CSV text with columns k, t, u..., y..."""
    m, p = traj.u.shape[1], traj.y.shape[1]
    header = ["k", "t"] + [f"u{i + 1}" for i in range(m)] + [f"y{i + 1}" for i in range(p)]
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    t = traj.t
    for r in range(len(traj)):
        row = [str(int(traj.k[r])), _fmt(t[r])]
        row += [_fmt(v) for v in traj.u[r]] + [_fmt(v) for v in traj.y[r]]
        out.write(",".join(row) + "\n")
    return out.getvalue()


def read_csv(text):
    """Parse CSV text written by this module into (header, float array)."""
    lines = text.strip().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return header, data


__all__ = [
    "Signal",
    "Trajectory",
    "simulate",
    "simulate_coupled",
    "FrfCurve",
    "frf",
    "closed_loop_frf",
    "log_grid",
    "DampingReport",
    "damping_report",
    "SweepEntry",
    "gamma_sweep",
    "frf_csv",
    "trajectory_csv",
    "read_csv",
]
