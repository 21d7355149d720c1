"""Positive-feedback loop of an NI plant with a step-advanced IRC.

The loop is ``u_k = y~_k`` (plus an optional disturbance), ``u~_k = y_k``.
Stability is certified with the quadratic form ``W = z'Qz / 2`` where
``Q = [[P, -C'], [-C, -D]]`` and ``P`` is the plant's NI storage matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionError, DimensionError, UnitEigenvalueError
from .irc_design import IrcParams, SaniController, build_irc
from .ni_cert import DEFAULT_TOL, NiCertificate, equilibrate, verify_candidate
from .state_space import (
    DiscreteStateSpace,
    as_matrix,
    balanced,
    dc_gain,
    minimality,
    spectral_radius,
    sym_eigvals,
)

PRECONDITION_RTOL = 1e-10


def _controller(ctrl):
    if isinstance(ctrl, SaniController):
        return ctrl
    if isinstance(ctrl, IrcParams):
        return build_irc(ctrl)
    raise TypeError("expected a SaniController or IrcParams")


def close_loop(plant, ctrl):
    """Closed-loop state matrix for the stacked state ``[x; x~]``.

    For the IRC this is ``[[A + B Gamma C, B + B Gamma D], [Gamma C, I + Gamma D]]``.

    >>> from dtirc import DiscreteStateSpace, IrcParams, spectral_radius
    >>> plant = DiscreteStateSpace([[0.5]], [[1.0]], [[0.5]])
    >>> A_hat = close_loop(plant, IrcParams(0.01, -3.0))
    >>> A_hat.round(12).tolist()
    [[0.505, 0.97], [0.005, 0.97]]
    >>> round(spectral_radius(A_hat), 4)
    0.9802
    """
    ctrl = _controller(ctrl)
    K = ctrl.realization
    if K.p != plant.p:
        raise DimensionError(f"plant has {plant.p} ports, controller has {K.p}")
    A, B, C = plant.A, plant.B, plant.C
    Dc = K.feedthrough()
    return np.block([[A + B @ Dc @ C, B @ K.C], [K.B @ C, K.A]])


def closed_loop_system(plant, ctrl):
    """Closed loop driven by an input disturbance ``d`` (``u = y~ + d``), output ``y``."""
    ctrl = _controller(ctrl)
    A_hat = close_loop(plant, ctrl)
    p = plant.p
    B = np.vstack([plant.B, np.zeros((p, p))])
    C = np.hstack([plant.C, np.zeros((p, p))])
    return DiscreteStateSpace(A_hat, B, C, plant.sample_period)


def lyapunov_matrix(plant, P, params):
    P = _storage(P)
    return np.block([[P, -plant.C.T], [-plant.C, -params.D]])


def _storage(P):
    if isinstance(P, NiCertificate):
        return P.P
    return as_matrix(P, "P")


@dataclass(frozen=True)
class Condition:
    name: str
    holds: bool
    margin: float
    detail: str = ""
    hard: bool = True

    def to_dict(self):
        return {
            "name": self.name,
            "holds": self.holds,
            "margin": self.margin,
            "detail": self.detail,
            "hard": self.hard,
        }


@dataclass(frozen=True, eq=False)
class ClosedLoopCertificate:
    A_hat: np.ndarray
    Q: np.ndarray | None
    min_eig_Q: float
    max_eig_decrement: float
    decomposition_residual: float
    spectral_radius: float
    conditions_report: tuple
    accepted: bool
    tol: float
    schur_margin: float = float("nan")
    failures: tuple = field(default=())

    def condition(self, name):
        for c in self.conditions_report:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {
            "accepted": self.accepted,
            "tol": self.tol,
            "A_hat": self.A_hat.tolist(),
            "Q": None if self.Q is None else self.Q.tolist(),
            "min_eig_Q": self.min_eig_Q,
            "schur_margin": self.schur_margin,
            "max_eig_decrement": self.max_eig_decrement,
            "decomposition_residual": self.decomposition_residual,
            "spectral_radius": self.spectral_radius,
            "conditions_report": [c.to_dict() for c in self.conditions_report],
            "failures": list(self.failures),
        }

    def table(self):
        """Plain-text conditions table."""
        rows = [("condition", "holds", "margin")]
        for c in self.conditions_report:
            flag = "yes" if c.holds else ("WARN" if not c.hard else "NO")
            rows.append((c.name, flag, f"{c.margin:.6g}"))
        rows.append(("min eig Q (equilibrated)", "", f"{self.min_eig_Q:.6g}"))
        rows.append(("max eig A'QA - Q (equilibrated)", "", f"{self.max_eig_decrement:.6g}"))
        rows.append(("spectral radius", "", f"{self.spectral_radius:.10g}"))
        w0 = max(len(r[0]) for r in rows)
        lines = [f"{a:<{w0}}  {b:<5}  {c}" for a, b, c in rows]
        lines.append("ACCEPTED" if self.accepted else "REJECTED: " + "; ".join(self.failures))
        return "\n".join(lines)


def _strict_margin(M):
    """(smallest eigenvalue, threshold) for a strict positive-definiteness test."""
    w = sym_eigvals(M)
    return float(w[0]), 1e-10 * max(1.0, float(np.max(np.abs(w))))


def certify_closed_loop(plant, P, params, tol=DEFAULT_TOL):
    """Check the stability hypotheses for the plant/IRC loop and the Lyapunov inequality.

    ``P`` is the plant's NI storage matrix (array or :class:`NiCertificate`);
    it is re-verified here.  Each hypothesis is reported separately with
    its margin.  Definiteness of ``Q`` and of the decrement
    ``A_hat' Q A_hat - Q`` is judged after an exact power-of-two congruence
    that brings the diagonal of ``Q`` to unit order.
    """
    P = _storage(P)
    ctrl = _build_quiet(params)
    A_hat = close_loop(plant, ctrl)
    G, D = params.Gamma, params.D
    n = plant.n
    conds = []

    sv = np.linalg.svd(np.eye(n) - balanced(plant.A), compute_uv=False)
    det_margin = float(sv[-1] / sv[0])
    det_ok = det_margin > 1e-10
    conds.append(Condition("det(I - A) != 0", det_ok, det_margin, "relative smallest singular value"))

    lo, eps = _strict_margin(D + 2.0 * np.linalg.inv(G))
    conds.append(Condition("D > -2 Gamma^-1", lo > eps, lo, "min eig of D + 2 Gamma^-1"))

    G1 = None
    if det_ok:
        try:
            G1 = dc_gain(plant)
        except UnitEigenvalueError:
            G1 = None
    if G1 is None:
        conds.append(Condition("D < -G(1)", False, float("nan"), "G(1) undefined"))
    else:
        lo, eps = _strict_margin(-D - 0.5 * (G1 + G1.T))
        conds.append(Condition("D < -G(1)", lo > eps, lo, "min eig of -D - G(1)"))

    cert = None
    if det_ok and P.shape == (n, n):
        try:
            cert = verify_candidate(plant, P, tol)
        except (AssumptionError, DimensionError):
            cert = None
    if cert is None:
        conds.append(Condition("P is an NI certificate", False, float("nan"), "could not verify"))
    else:
        conds.append(
            Condition(
                "P is an NI certificate",
                cert.accepted,
                min(cert.min_eig_P_scaled, tol - cert.max_eig_lyap_scaled),
                "; ".join(cert.failures) or "all three conditions hold",
            )
        )

    ctrb_ok, obsv_ok = minimality(plant)
    conds.append(
        Condition(
            "plant realization minimal",
            ctrb_ok and obsv_ok,
            float(ctrb_ok and obsv_ok),
            f"controllable={ctrb_ok}, observable={obsv_ok} (advisory)",
            hard=False,
        )
    )

    rho = spectral_radius(A_hat)
    Q = None
    min_q = schur = dec = resid = float("nan")
    if P.shape == (n, n):
        Q = lyapunov_matrix(plant, P, params)
        Q = 0.5 * (Q + Q.T)
        t = equilibrate(Q)
        Qs = Q * np.outer(t, t)
        As = A_hat * np.outer(1.0 / t, t)
        min_q = float(sym_eigvals(Qs)[0])
        dec = float(sym_eigvals(As.T @ Qs @ As - Qs)[-1])
        try:
            schur_m = -D - plant.C @ np.linalg.solve(P, plant.C.T)
            schur = float(sym_eigvals(schur_m)[0])
        except np.linalg.LinAlgError:
            schur = float("nan")
        resid = decomposition_check(plant, P, params).residual

    failures = [f"{c.name} fails (margin {c.margin:.3e})" for c in conds if c.hard and not c.holds]
    if not min_q > tol:
        failures.append(f"Q not positive definite (min eig {min_q:.3e})")
    dec_bound = tol * (max(1.0, float(np.linalg.norm(Qs, 2))) if Q is not None else 1.0)
    if not dec <= dec_bound:
        failures.append(f"A'QA - Q not <= 0 (max eig {dec:.3e})")
    if not rho < 1.0:
        failures.append(f"spectral radius {rho:.12g} >= 1")

    return ClosedLoopCertificate(
        A_hat=A_hat,
        Q=Q,
        min_eig_Q=min_q,
        max_eig_decrement=dec,
        decomposition_residual=resid,
        spectral_radius=rho,
        conditions_report=tuple(conds),
        accepted=not failures,
        tol=float(tol),
        schur_margin=schur,
        failures=tuple(failures),
    )


def _build_quiet(params):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_irc(params)


@dataclass(frozen=True, eq=False)
class DecompositionResult:
    residual: float
    precondition_residual: float
    precondition_holds: bool
    direct: np.ndarray
    term1: np.ndarray
    term2: np.ndarray
    scale: float = 1.0

    @property
    def meaningful(self):
        return self.precondition_holds

    @property
    def relative_residual(self):
        """Residual divided by ``1 + ||Q|| ||A_hat||^2``."""
        return self.residual / self.scale


def decomposition_check(plant, P, params, rtol=PRECONDITION_RTOL):
    """Compare ``A_hat' Q A_hat - Q`` with its two-term split.

    term1 = X P^-1 (A'PA - P) P^-1 X' with X = [C' Gamma C - P; (I + D Gamma) C]
    term2 = -Y (D + 2 Gamma^-1) Y'    with Y = [C' Gamma; D Gamma]

    The split needs ``B = (I - A) P^-1 C'``; when that fails beyond
    ``rtol`` the residual is still returned but ``precondition_holds`` is
    False and the number carries no meaning.
    """
    P = _storage(P)
    A, B, C = plant.A, plant.B, plant.C
    G, D = params.Gamma, params.D
    n, p = plant.n, plant.p
    PinvCt = np.linalg.solve(P, C.T)
    pre = float(np.linalg.norm(B - (np.eye(n) - A) @ PinvCt))
    holds = pre <= rtol * (1.0 + float(np.linalg.norm(B)))

    A_hat = close_loop(plant, _build_quiet(params))
    Q = lyapunov_matrix(plant, P, params)
    direct = A_hat.T @ Q @ A_hat - Q

    X = np.vstack([C.T @ G @ C - P, (np.eye(p) + D @ G) @ C])
    XPinv = np.linalg.solve(P, X.T).T
    L = A.T @ P @ A - P
    term1 = XPinv @ L @ XPinv.T
    Y = np.vstack([C.T @ G, D @ G])
    term2 = -Y @ (D + 2.0 * np.linalg.inv(G)) @ Y.T
    residual = float(np.max(np.abs(direct - (term1 + term2))))
    scale = 1.0 + float(np.linalg.norm(Q, 2)) * float(np.linalg.norm(A_hat, 2)) ** 2
    return DecompositionResult(residual, pre, holds, direct, term1, term2, scale)


def lyapunov_decrement_trace(plant, P, params, x0, steps):
    """W_k = z_k' Q z_k / 2 along the autonomous loop, k = 0..steps."""
    P = _storage(P)
    A_hat = close_loop(plant, _build_quiet(params))
    Q = lyapunov_matrix(plant, P, params)
    z = np.asarray(x0, dtype=float).ravel()
    if z.shape != (A_hat.shape[0],):
        raise DimensionError(f"x0 must have {A_hat.shape[0]} entries (plant and controller state)")
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    W = np.empty(int(steps) + 1)
    for k in range(int(steps) + 1):
        W[k] = 0.5 * z @ Q @ z
        z = A_hat @ z
    return W
