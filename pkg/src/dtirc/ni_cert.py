"""Discrete-time negative-imaginary certificates.

A linear system ``x+ = Ax + Bu, y = Cx`` with ``det(I - A) != 0`` is NI with
storage ``V(x) = x'Px / 2`` iff ``P = P' > 0``, ``A'PA - P <= 0`` and
``C = B'(I - A)^-T P``.  This module checks a given ``P``, searches for one
by alternating projections, and runs the dissipation inequality on
simulated data as an independent sanity check.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AssumptionError, DimensionError, FormatError
from .state_space import (
    DiscreteStateSpace,
    as_matrix,
    balance_scaling,
    balanced,
    is_singular,
    require_symmetric,
    sym_eigvals,
)

DEFAULT_TOL = 1e-9
SEARCH_EPS = 1e-8
SEARCH_MAX_ITERS = 5000
SEARCH_STEP_TOL = 1e-11


def equilibrate(P):
    """Power-of-two diagonal t with diag(t) P diag(t) having diagonal in [0.5, 2).

    The scaling is exact in floating point, so definiteness tests on the
    scaled matrices are tests on the originals without extra rounding.
    """
    d = np.diag(np.asarray(P, dtype=float)).copy()
    d[~(d > 0)] = 1.0
    return np.exp2(-np.round(0.5 * np.log2(d)))


@dataclass(frozen=True, eq=False)
class NiCertificate:
    P: np.ndarray
    min_eig_P: float
    max_eig_lyap: float
    equality_residual: float
    tol: float
    accepted: bool
    failures: tuple = ()
    iterations: int | None = None
    # eigenvalues after exact diagonal equilibration of P; these decide acceptance
    min_eig_P_scaled: float | None = None
    max_eig_lyap_scaled: float | None = None

    def to_dict(self):
        return {
            "P": self.P.tolist(),
            "min_eig_P": self.min_eig_P,
            "max_eig_lyap": self.max_eig_lyap,
            "equality_residual": self.equality_residual,
            "tol": self.tol,
            "accepted": self.accepted,
            "min_eig_P_scaled": self.min_eig_P_scaled,
            "max_eig_lyap_scaled": self.max_eig_lyap_scaled,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                P=as_matrix(data["P"], "P"),
                min_eig_P=float(data["min_eig_P"]),
                max_eig_lyap=float(data["max_eig_lyap"]),
                equality_residual=float(data["equality_residual"]),
                tol=float(data["tol"]),
                accepted=bool(data.get("accepted", True)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed certificate: {exc}") from None


@dataclass(frozen=True, eq=False)
class InfeasibilityReport:
    """Search gave up. Advisory only: this does not prove the system is not NI."""

    P_last: np.ndarray
    min_eig_P: float
    max_eig_lyap: float
    equality_residual: float
    iterations: int
    reason: str
    accepted: bool = False

    def to_dict(self):
        return {
            "status": "infeasible_or_stalled",
            "advisory": "not a proof that the system is not NI",
            "reason": self.reason,
            "iterations": self.iterations,
            "P_last": self.P_last.tolist(),
            "min_eig_P": self.min_eig_P,
            "max_eig_lyap": self.max_eig_lyap,
            "equality_residual": self.equality_residual,
        }


def _plant_checks(sys):
    if not isinstance(sys, DiscreteStateSpace):
        raise TypeError("expected a DiscreteStateSpace")
    if sys.has_feedthrough and np.any(sys.D != 0):
        raise DimensionError("NI certificates apply to systems without feedthrough")
    I_A = np.eye(sys.n) - sys.A
    if is_singular(np.eye(sys.n) - balanced(sys.A)):
        raise AssumptionError("det(I - A) = 0: NI certification requires I - A nonsingular")
    return np.linalg.solve(I_A, sys.B)


def _residuals(sys, P, b):
    t = equilibrate(P)
    Ps = P * np.outer(t, t)
    As = sys.A * np.outer(1.0 / t, t)
    Ls = As.T @ Ps @ As - Ps
    L = sys.A.T @ P @ sys.A - P
    return {
        "min_eig_P": float(sym_eigvals(P)[0]),
        "max_eig_lyap": float(sym_eigvals(L)[-1]),
        "min_eig_P_scaled": float(sym_eigvals(Ps)[0]),
        "max_eig_lyap_scaled": float(sym_eigvals(Ls)[-1]),
        "equality_residual": float(np.linalg.norm(sys.C - b.T @ P)),
    }


def verify_candidate(sys, P, tol=DEFAULT_TOL):
    """Check the three NI certificate conditions for a given symmetric ``P``.

    Definiteness is judged after exact power-of-two equilibration of P (see
    :func:`equilibrate`), so badly scaled modal coordinates are handled;
    for P with unit-order diagonal this is the plain eigenvalue test.
    Returns an :class:`NiCertificate` whose ``accepted`` flag carries the
    verdict.
    """
    b = _plant_checks(sys)
    P = require_symmetric(as_matrix(P, "P"), "P")
    if P.shape != (sys.n, sys.n):
        raise DimensionError(f"P must be {sys.n}x{sys.n}, got {P.shape}")
    P = 0.5 * (P + P.T)
    r = _residuals(sys, P, b)
    failures = []
    if not r["min_eig_P_scaled"] > tol:
        failures.append(f"P not positive definite (min eig {r['min_eig_P']:.3e})")
    if r["max_eig_lyap_scaled"] > tol:
        failures.append(f"A'PA - P not <= 0 (max eig {r['max_eig_lyap']:.3e})")
    eq_bound = tol * (1.0 + np.linalg.norm(sys.C))
    if r["equality_residual"] > eq_bound:
        failures.append(
            f"C != B'(I-A)^-T P (residual {r['equality_residual']:.3e})"
        )
    P = P.copy()
    P.setflags(write=False)
    return NiCertificate(
        P=P,
        min_eig_P=r["min_eig_P"],
        max_eig_lyap=r["max_eig_lyap"],
        equality_residual=r["equality_residual"],
        tol=float(tol),
        accepted=not failures,
        failures=tuple(failures),
        min_eig_P_scaled=r["min_eig_P_scaled"],
        max_eig_lyap_scaled=r["max_eig_lyap_scaled"],
    )


class _SymBasis:
    """Orthonormal coordinates for symmetric n x n matrices (Frobenius)."""

    def __init__(self, n):
        self.n = n
        self.iu = np.triu_indices(n)
        self.w = np.where(self.iu[0] == self.iu[1], 1.0, np.sqrt(2.0))
        self.m = len(self.w)

    def vec(self, M):
        return M[self.iu] * self.w

    def mat(self, v):
        M = np.zeros((self.n, self.n))
        M[self.iu] = v / self.w
        return M + np.triu(M, 1).T

    def operator(self, fn):
        """Matrix of a linear map on symmetric matrices in these coordinates."""
        cols = []
        for k in range(self.m):
            e = np.zeros(self.m)
            e[k] = 1.0
            cols.append(np.ravel(fn(self.mat(e))))
        return np.column_stack(cols)


def _clip(M, lo=None, hi=None):
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    w = np.clip(w, lo, hi)
    return (V * w) @ V.T


def find_certificate(
    sys,
    tol=DEFAULT_TOL,
    eps=SEARCH_EPS,
    max_iters=SEARCH_MAX_ITERS,
    step_tol=SEARCH_STEP_TOL,
):
    """Search for an NI storage matrix by alternating projections.

    Works on the pair (P, S) with the affine coupling ``S = A'PA - P`` and
    ``P (I-A)^-1 B = C'``; the cone is ``P >= eps I, S <= 0``.  Each
    iteration projects the current affine point onto the cone (eigenvalue
    clipping), then onto the affine set intersected with the halfspace that
    separates the point from the cone.  That halfspace contains every
    feasible point, so iterates approach the feasible set monotonically;
    unlike plain alternating projections the step does not shrink when the
    affine set meets the cone at a grazing angle, which is the normal
    situation for lightly damped sampled plants.

    The state is first balanced by a power-of-two diagonal similarity and
    the output scaled so the least-squares start has unit norm.  The result
    is mapped back and re-checked with :func:`verify_candidate`.

    Returns an :class:`NiCertificate` or an :class:`InfeasibilityReport`.
    """
    _plant_checks(sys)
    n, p = sys.n, sys.p
    t = balance_scaling(sys.A)  # x = diag(t) z
    A = sys.A * np.outer(1.0 / t, t)
    B = sys.B / t[:, None]
    C = sys.C * t[None, :]
    b = np.linalg.solve(np.eye(n) - A, B)

    basis = _SymBasis(n)
    m = basis.m
    Eq = basis.operator(lambda E: E @ b)
    Lop = basis.operator(lambda E: basis.vec(A.T @ E @ A - E))
    h = np.ravel(C.T)
    theta0 = np.linalg.lstsq(Eq, h, rcond=None)[0]
    scale = float(np.linalg.norm(theta0)) or 1.0
    h = h / scale
    theta0 = theta0 / scale

    # S = kappa * S~ so the Lyapunov map has unit gain in the search metric
    kappa = float(np.linalg.norm(Lop, 2)) or 1.0
    M = np.block([[Eq, np.zeros((n * p, m))], [Lop / kappa, -np.eye(m)]])
    r = np.concatenate([h, np.zeros(m)])
    M_pinv = np.linalg.pinv(M, rcond=1e-13)

    def proj_affine(z):
        return z - M_pinv @ (M @ z - r)

    def proj_cone(z):
        Pm = _clip(basis.mat(z[:m]), lo=eps)
        Sm = _clip(basis.mat(z[m:]), hi=0.0)
        return np.concatenate([basis.vec(Pm), basis.vec(Sm)])

    def to_original(theta):
        return basis.mat(theta) * scale / np.outer(t, t)

    x = proj_affine(np.concatenate([theta0, Lop @ theta0 / kappa]))
    reason = "max_iters reached without a feasible point"
    iterations = 0
    for iterations in range(max_iters + 1):
        cert = verify_candidate(sys, to_original(x[:m]), tol)
        if cert.accepted:
            return _with_iterations(cert, iterations)
        if iterations == max_iters:
            break
        d = proj_cone(x) - x
        u = d - M_pinv @ (M @ d)  # component along the affine set
        uu = float(u @ u)
        if uu <= 1e-28 * float(d @ d):
            reason = "no feasible direction within the affine set"
            break
        step = (float(d @ d) / uu) * u
        x = proj_affine(x + step)
        if np.linalg.norm(step) < step_tol:
            reason = "iterates converged"
            break

    return InfeasibilityReport(
        P_last=cert.P,
        min_eig_P=cert.min_eig_P,
        max_eig_lyap=cert.max_eig_lyap,
        equality_residual=cert.equality_residual,
        iterations=iterations,
        reason=f"{reason}; " + "; ".join(cert.failures),
    )


def _with_iterations(cert, iterations):
    return dataclasses.replace(cert, iterations=iterations)


@dataclass(frozen=True, eq=False)
class DissipationTrace:
    """Both sides of V(x+) - V(x) <= u'(y+ - y), per step.

    Arrays have shape (steps,) for one input sequence or (batch, steps).
    """

    increments: np.ndarray
    supplies: np.ndarray
    worst_violation: float
    max_state_sq: float = field(default=0.0)


def check_dissipation_empirical(sys, P, inputs, x0=None):
    """Simulate the plant and evaluate the NI dissipation inequality step by step.

    ``inputs`` is (steps, p) or, for several runs at once, (batch, steps, p);
    ``x0`` is (n,) or (batch, n).
    """
    P = as_matrix(P, "P")
    n, p = sys.n, sys.p
    if P.shape != (n, n):
        raise DimensionError(f"P must be {n}x{n}")
    U = np.asarray(inputs, dtype=float)
    single = U.ndim == 2
    if single:
        U = U[None]
    if U.ndim != 3 or U.shape[2] != p:
        raise DimensionError(f"inputs must be (steps, {p}) or (batch, steps, {p})")
    batch, steps, _ = U.shape
    X0 = np.zeros((batch, n)) if x0 is None else np.asarray(x0, dtype=float)
    X0 = np.broadcast_to(X0, (batch, n)) if X0.ndim == 1 else X0
    if X0.shape != (batch, n):
        raise DimensionError("x0 shape does not match")

    X = np.empty((batch, steps + 1, n))
    X[:, 0] = X0
    BU = U @ sys.B.T
    At = sys.A.T
    for k in range(steps):
        X[:, k + 1] = X[:, k] @ At + BU[:, k]
    V = 0.5 * np.einsum("bki,ij,bkj->bk", X, P, X)
    Y = X @ sys.C.T
    inc = V[:, 1:] - V[:, :-1]
    sup = np.einsum("bki,bki->bk", U, Y[:, 1:] - Y[:, :-1])
    worst = float(np.max(inc - sup)) if steps else 0.0
    max_sq = float(np.max(np.einsum("bki,bki->bk", X, X)))
    if single:
        inc, sup = inc[0], sup[0]
    return DissipationTrace(inc, sup, worst, max_sq)


@dataclass(frozen=True, eq=False)
class SaniCheck:
    is_sani: bool
    H: np.ndarray | None
    underlying: DiscreteStateSpace | None
    certificate: object
    reason: str = ""

    def __bool__(self):
        return self.is_sani


def verify_sani_structure(controller, tol=DEFAULT_TOL):
    """Check that ``controller`` is a step-advanced NI system.

    Looks for H with ``C_c = H A_c`` and ``D_c = H B_c`` (least squares over
    both equations), then asks :func:`find_certificate` whether
    ``(A_c, B_c, H)`` is NI.
    """
    Ac, Bc, Cc = controller.A, controller.B, controller.C
    Dc = controller.feedthrough()
    left = np.hstack([Ac, Bc])
    right = np.hstack([Cc, Dc])
    H = np.linalg.lstsq(left.T, right.T, rcond=None)[0].T
    resid = np.linalg.norm(H @ left - right)
    if resid > tol * (1.0 + np.linalg.norm(right)):
        return SaniCheck(False, None, None, None, f"no H with C=HA, D=HB (residual {resid:.3e})")
    underlying = DiscreteStateSpace(Ac, Bc, H, controller.sample_period)
    try:
        cert = find_certificate(underlying, tol=tol)
    except AssumptionError as exc:
        return SaniCheck(False, H, underlying, None, str(exc))
    if not cert.accepted:
        return SaniCheck(False, H, underlying, cert, "underlying system not certified NI")
    return SaniCheck(True, H, underlying, cert)


def load_certificate(path):
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise FormatError(f"certificate file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(data, dict) and "P" in data and "min_eig_P" not in data:
        return as_matrix(data["P"], "P")
    if isinstance(data, list):
        return as_matrix(data, "P")
    return NiCertificate.from_dict(data).P
