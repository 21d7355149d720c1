"""State-space value types, transfer evaluation and small linear-algebra queries."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DefinitenessError,
    DimensionError,
    FormatError,
    PoleEvaluationError,
    UnitEigenvalueError,
)

SINGULAR_RTOL = 1e-10


def as_matrix(value, name="matrix"):
    """Coerce scalars, nested lists and arrays to a read-only 2-D float array."""
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def balance_scaling(A, sweeps=50):
    """Power-of-two diagonal t such that diag(1/t) A diag(t) is balanced.

    Osborne iteration on the off-diagonal part only.  LAPACK's gebal counts
    the diagonal, which stalls on sampled systems where A is close to I.
    """
    A = np.abs(np.asarray(A, dtype=float))
    n = A.shape[0]
    off = A - np.diag(np.diag(A))
    t = np.ones(n)
    for _ in range(sweeps):
        changed = False
        for i in range(n):
            M = off * np.outer(1.0 / t, t)
            r = np.linalg.norm(M[i])
            c = np.linalg.norm(M[:, i])
            if r == 0 or c == 0:
                continue
            f = np.exp2(np.round(0.5 * np.log2(r / c)))
            if f != 1.0:
                t[i] *= f
                changed = True
        if not changed:
            break
    return t


def balanced(A):
    t = balance_scaling(A)
    return A * np.outer(1.0 / t, t)


def is_singular(M, rtol=SINGULAR_RTOL):
    """True if the smallest singular value of M is within rtol * ||M||_2 of zero.

    Callers testing ``zI - A`` pass a balanced A (see :func:`balanced`) so
    the test does not depend on the units of individual states.
    """
    s = np.linalg.svd(np.asarray(M), compute_uv=False)
    return bool(s[-1] <= rtol * s[0])


def require_symmetric(M, name="matrix", rtol=1e-12):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > rtol * scale:
        raise DefinitenessError(f"{name} is not symmetric")
    return M


def sym_eigvals(M):
    """Eigenvalues of the symmetric part of M, ascending."""
    M = np.asarray(M, dtype=float)
    return np.linalg.eigvalsh(0.5 * (M + M.T))


def min_eig(M):
    return float(sym_eigvals(M)[0])


def max_eig(M):
    return float(sym_eigvals(M)[-1])


@dataclass(frozen=True, eq=False)
class DiscreteStateSpace:
    """x[k+1] = A x[k] + B u[k],  y[k] = C x[k] (+ D u[k] when D is given).

    Plants carry no feedthrough; ``D`` exists only so step-advanced
    controllers can share the type.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    sample_period: float | None = None
    D: np.ndarray | None = None

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        C = as_matrix(self.C, "C")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionError(f"B must have {n} rows, got {B.shape}")
        p = B.shape[1]
        if p < 1:
            raise DimensionError("need at least one input")
        if C.shape != (p, n):
            raise DimensionError(
                f"C must be {p}x{n} (square transfer matrix), got {C.shape}"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        if self.D is not None:
            D = as_matrix(self.D, "D")
            if D.shape != (p, p):
                raise DimensionError(f"D must be {p}x{p}, got {D.shape}")
            object.__setattr__(self, "D", D)
        if self.sample_period is not None:
            ts = float(self.sample_period)
            if not ts > 0:
                raise DimensionError("sample_period must be positive")
            object.__setattr__(self, "sample_period", ts)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.B.shape[1]

    @property
    def has_feedthrough(self):
        return self.D is not None

    def feedthrough(self):
        return self.D if self.D is not None else np.zeros((self.p, self.p))

    def to_dict(self):
        out = {
            "n": self.n,
            "p": self.p,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "sample_period": self.sample_period,
        }
        if self.D is not None:
            out["D"] = self.D.tolist()
        return out

    @classmethod
    def from_dict(cls, data):
        try:
            sys = cls(
                A=data["A"],
                B=data["B"],
                C=data["C"],
                sample_period=data.get("sample_period"),
                D=data.get("D"),
            )
        except KeyError as exc:
            raise FormatError(f"model is missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise FormatError(f"malformed model: {exc}") from None
        for key, value in (("n", sys.n), ("p", sys.p)):
            if key in data and int(data[key]) != value:
                raise FormatError(f"declared {key}={data[key]} but matrices give {value}")
        return sys


@dataclass(frozen=True, eq=False)
class ContinuousStateSpace:
    """dx/dt = A x + B u,  y = C x + D u."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray | None = None

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        C = as_matrix(self.C, "C")
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n:
            raise DimensionError("inconsistent A/B dimensions")
        p = B.shape[1]
        if C.shape != (p, n):
            raise DimensionError(f"C must be {p}x{n}, got {C.shape}")
        D = np.zeros((p, p)) if self.D is None else self.D
        D = as_matrix(D, "D")
        if D.shape != (p, p):
            raise DimensionError(f"D must be {p}x{p}, got {D.shape}")
        for name, value in (("A", A), ("B", B), ("C", C), ("D", D)):
            object.__setattr__(self, name, value)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.B.shape[1]

    def dc_gain(self):
        """-C A^-1 B + D, the response at s = 0."""
        if is_singular(balanced(self.A)):
            raise UnitEigenvalueError("A is singular; continuous DC gain undefined")
        return -self.C @ np.linalg.solve(self.A, self.B) + self.D

    def eval(self, s):
        n = self.n
        if is_singular(s * np.eye(n) - balanced(self.A)):
            raise PoleEvaluationError(f"s={s} is a pole")
        M = s * np.eye(n) - self.A
        return self.C @ np.linalg.solve(M, self.B.astype(complex)) + self.D


@dataclass(frozen=True)
class TransferEval:
    frequency: float  # rad/s
    value: np.ndarray


def dc_gain(sys):
    """C (I - A)^-1 B (+ D), the discrete transfer matrix at z = 1."""
    M = np.eye(sys.n) - sys.A
    if is_singular(np.eye(sys.n) - balanced(sys.A)):
        eigs = np.linalg.eigvals(sys.A)
        worst = eigs[np.argmin(np.abs(eigs - 1.0))]
        raise UnitEigenvalueError(
            f"I - A is singular: A has a unit eigenvalue ({worst:.6g})", worst
        )
    return sys.C @ np.linalg.solve(M, sys.B) + sys.feedthrough()


def eval_transfer(sys, z):
    """C (zI - A)^-1 B (+ D) at a single complex point."""
    M = complex(z) * np.eye(sys.n) - sys.A
    if is_singular(complex(z) * np.eye(sys.n) - balanced(sys.A)):
        raise PoleEvaluationError(f"z={z} coincides with an eigenvalue of A")
    return sys.C @ np.linalg.solve(M, sys.B.astype(complex)) + sys.feedthrough()


def eval_transfer_many(sys, zs):
    """Batched evaluation; returns (values, singular_mask).

    Points flagged in ``singular_mask`` hold NaN.
    """
    zs = np.asarray(zs, dtype=complex).ravel()
    n, p = sys.n, sys.p
    M = zs[:, None, None] * np.eye(n)[None] - sys.A[None]
    Mb = zs[:, None, None] * np.eye(n)[None] - balanced(sys.A)[None]
    s = np.linalg.svd(Mb, compute_uv=False)
    bad = s[:, -1] <= SINGULAR_RTOL * s[:, 0]
    safe = M.copy()
    safe[bad] = np.eye(n)
    rhs = np.broadcast_to(sys.B.astype(complex), (len(zs), n, p))
    X = np.linalg.solve(safe, rhs)
    out = sys.C[None] @ X + sys.feedthrough()[None]
    out[bad] = np.nan
    return out, bad


def frequency_point(sys, freq_hz):
    """TransferEval at a physical frequency; needs ``sample_period``."""
    if sys.sample_period is None:
        raise DimensionError("system has no sample_period")
    w = 2 * np.pi * float(freq_hz)
    return TransferEval(w, eval_transfer(sys, np.exp(1j * w * sys.sample_period)))


def spectral_radius(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"spectral radius needs a square matrix, got {M.shape}")
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def ctrb(A, B):
    n = A.shape[0]
    blocks = [B]
    for _ in range(1, n):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def obsv(A, C):
    return ctrb(A.T, C.T).T


def _rank(M, rtol):
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0


def minimality(sys, rtol=1e-8):
    """(controllable, observable) by Kalman rank tests with relative tolerance."""
    n = sys.n
    return (
        _rank(ctrb(sys.A, sys.B), rtol) == n,
        _rank(obsv(sys.A, sys.C), rtol) == n,
    )


def load_model(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise FormatError(f"model file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise FormatError(f"{path}: expected a JSON object")
    return DiscreteStateSpace.from_dict(data)


def save_model(sys, path):
    Path(path).write_text(json.dumps(sys.to_dict(), indent=2) + "\n")
