"""Small dense-matrix numerics for systems up to ~8 states.

Matrices are plain 2-D float64 numpy arrays.  Everything here is a pure
function: inputs are validated, never mutated, and all entries must be
finite.  Sized and tuned for the 2- and 4-state vehicle models; none of
this is meant for large systems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import NumericalError

# Iteration caps / tolerances are fixed so results are reproducible.
DARE_STEP_TOL = 1e-12
DARE_RESIDUAL_TOL = 1e-9
DARE_MAX_ITER = 100_000
QR_MAX_SWEEPS = 20_000


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return a finite 2-D float64 matrix (copy not guaranteed)."""
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be 2-D with at least one row and column, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def _square(a, name: str) -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


@dataclass(frozen=True)
class StateSpace:
    """Linear state-space model x' = Ax + Bu, y = Cx.

    dt is the sample period in seconds; dt == 0 marks a continuous-time
    model.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    dt: float = 0.0

    def __post_init__(self):
        A = _square(self.A, "A")
        B = as_matrix(self.B, "B")
        C = as_matrix(self.C, "C")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B has {B.shape[0]} rows, expected {A.shape[0]}")
        if C.shape[1] != A.shape[0]:
            raise ValueError(f"C has {C.shape[1]} cols, expected {A.shape[0]}")
        if self.dt < 0:
            raise ValueError("dt must be >= 0")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def is_discrete(self) -> bool:
        return self.dt > 0.0


def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with a Taylor series.

    Adequate for the small, well-scaled matrices handled here.  The
    series is summed until terms vanish at double precision, so nilpotent
    inputs terminate exactly.
    """
    m = _square(a, "expm input")
    n = m.shape[0]
    norm = np.linalg.norm(m, np.inf)
    s = max(0, int(np.ceil(np.log2(norm))) + 1) if norm > 0.5 else 0
    x = m / (2.0**s)
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, 120):
        term = term @ x / k
        result = result + term
        if np.linalg.norm(term, np.inf) <= 1e-18 * max(1.0, np.linalg.norm(result, np.inf)):
            break
    for _ in range(s):
        result = result @ result
    return result


def c2d(sys: StateSpace, dt: float) -> StateSpace:
    """Zero-order-hold discretization of a continuous-time model.

    Uses the augmented-matrix exponential: exp([[A, B], [0, 0]] * dt)
    yields Ad in the upper-left block and Bd = (int_0^dt e^{A tau} dtau) B
    in the upper-right block.  C carries over unchanged.
    """
    if sys.is_discrete:
        raise ValueError("c2d expects a continuous-time model (dt == 0)")
    if dt <= 0:
        raise ValueError("sample period dt must be > 0")
    n, m = sys.n_states, sys.n_inputs
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = sys.A
    aug[:n, n:] = sys.B
    phi = expm(aug * dt)
    ad = phi[:n, :n]
    bd = phi[:n, n:]
    return StateSpace(A=ad, B=bd, C=sys.C.copy(), dt=dt)


def mat_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve AX = B by LU factorization with partial pivoting.

    Raises NumericalError when a pivot is singular to working precision.
    """
    a = _square(a, "A")
    b = as_matrix(b, "B")
    n = a.shape[0]
    if b.shape[0] != n:
        raise ValueError(f"B has {b.shape[0]} rows, expected {n}")
    if n == 1:
        piv = a[0, 0]
        if abs(piv) <= 1e-300:
            raise NumericalError("singular pivot in 1x1 solve")
        return b / piv

    lu = a.copy()
    x = b.astype(float, copy=True)
    scale = max(np.abs(lu).max(), 1e-300)
    for col in range(n):
        p = col + int(np.argmax(np.abs(lu[col:, col])))
        if abs(lu[p, col]) <= 1e-14 * scale:
            raise NumericalError(f"matrix singular to working precision at pivot {col}")
        if p != col:
            lu[[col, p]] = lu[[p, col]]
            x[[col, p]] = x[[p, col]]
        rows = slice(col + 1, n)
        factors = lu[rows, col] / lu[col, col]
        lu[rows, col:] -= np.outer(factors, lu[col, col:])
        x[rows] -= np.outer(factors, x[col])
    # back substitution
    for col in range(n - 1, -1, -1):
        x[col] = (x[col] - lu[col, col + 1 :] @ x[col + 1 :]) / lu[col, col]
    return x


def dare_residual(a: np.ndarray, b: np.ndarray, q: np.ndarray, r: np.ndarray, x: np.ndarray) -> float:
    """Frobenius norm of A'XA - X + Q - A'XB (R + B'XB)^-1 B'XA."""
    axa = a.T @ x @ a
    bxb = r + b.T @ x @ b
    gain_term = a.T @ x @ b @ mat_solve(bxb, b.T @ x @ a)
    return float(np.linalg.norm(axa - x + q - gain_term, "fro"))


def solve_dare(a: np.ndarray, b: np.ndarray, q: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Solve the discrete algebraic Riccati equation by fixed-point iteration.

    Iterates X <- A'XA + Q - A'XB (R + B'XB)^-1 B'XA from X0 = Q,
    re-symmetrizing each step, until the step norm drops below 1e-12.
    Non-convergence within the iteration cap signals an unstabilizable
    pair or ill conditioning and raises NumericalError.

    Returns the positive-semidefinite solution X with residual Frobenius
    norm <= 1e-9 * (1 + ||X||).
    """
    a = _square(a, "A")
    b = as_matrix(b, "B")
    q = _square(q, "Q")
    r = _square(r, "R")
    n = a.shape[0]
    if b.shape[0] != n or q.shape[0] != n:
        raise ValueError("A, B, Q dimensions are inconsistent")
    if r.shape[0] != b.shape[1]:
        raise ValueError(f"R must be {b.shape[1]}x{b.shape[1]}")
    if np.linalg.norm(q - q.T, "fro") > 1e-10 * (1 + np.linalg.norm(q, "fro")):
        raise ValueError("Q must be symmetric")
    if np.linalg.norm(r - r.T, "fro") > 1e-10 * (1 + np.linalg.norm(r, "fro")):
        raise ValueError("R must be symmetric")

    x = 0.5 * (q + q.T)
    at = a.T
    bt = b.T
    # divergence for unstabilizable pairs is caught by the finite check
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(DARE_MAX_ITER):
            xb = x @ b
            gram = r + bt @ xb
            xa = x @ a
            gain = mat_solve(gram, xb.T @ a)
            x_next = at @ xa + q - (at @ xb) @ gain
            x_next = 0.5 * (x_next + x_next.T)
            if not np.all(np.isfinite(x_next)):
                raise NumericalError("DARE iteration diverged (unstabilizable pair?)")
            step = np.linalg.norm(x_next - x, "fro")
            x = x_next
            if step < DARE_STEP_TOL:
                break
        else:
            raise NumericalError(
                f"DARE iteration did not converge in {DARE_MAX_ITER} steps "
                "(unstabilizable pair or ill-conditioning?)"
            )
    res = dare_residual(a, b, q, r, x)
    if res > DARE_RESIDUAL_TOL * (1.0 + np.linalg.norm(x, "fro")):
        raise NumericalError(f"DARE residual {res:.3e} exceeds tolerance after convergence")
    return x


def _hessenberg(a: np.ndarray) -> np.ndarray:
    """Reduce to upper Hessenberg form by Householder similarity."""
    h = a.copy()
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1 :, k]
        alpha = np.linalg.norm(x)
        if alpha <= 1e-300:
            continue
        v = x.copy()
        v[0] += np.copysign(alpha, x[0] if x[0] != 0 else 1.0)
        v /= np.linalg.norm(v)
        h[k + 1 :, k:] -= 2.0 * np.outer(v, v @ h[k + 1 :, k:])
        h[:, k + 1 :] -= 2.0 * np.outer(h[:, k + 1 :] @ v, v)
    return h


def _block_moduli(h: np.ndarray) -> list[float]:
    """Eigenvalue moduli of a quasi-triangular matrix (1x1/2x2 diagonal blocks)."""
    n = h.shape[0]
    moduli: list[float] = []
    i = 0
    while i < n:
        if i == n - 1 or abs(h[i + 1, i]) == 0.0:
            moduli.append(abs(h[i, i]))
            i += 1
        else:
            a11, a12 = h[i, i], h[i, i + 1]
            a21, a22 = h[i + 1, i], h[i + 1, i + 1]
            mean = 0.5 * (a11 + a22)
            disc = 0.25 * (a11 - a22) ** 2 + a12 * a21
            if disc >= 0.0:
                root = np.sqrt(disc)
                moduli.extend([abs(mean + root), abs(mean - root)])
            else:
                # complex pair: |lambda|^2 = det of the block
                moduli.extend([np.sqrt(a11 * a22 - a12 * a21)] * 2)
            i += 2
    return moduli


def spectral_radius(a: np.ndarray) -> float:
    """Largest eigenvalue modulus via unshifted QR iteration on Hessenberg form.

    Subdiagonal entries are deflated as they converge; unreduced 2x2
    blocks (complex pairs, equal-modulus real pairs) are resolved by the
    quadratic formula.  Intended for matrices up to ~8x8.
    """
    a = _square(a, "A")
    n = a.shape[0]
    if n == 1:
        return abs(float(a[0, 0]))
    h = _hessenberg(a)
    scale = max(np.linalg.norm(h, np.inf), 1e-300)

    def deflate(m: np.ndarray) -> None:
        for i in range(n - 1):
            if abs(m[i + 1, i]) <= 1e-13 * (abs(m[i, i]) + abs(m[i + 1, i + 1]) + 1e-30 * scale):
                m[i + 1, i] = 0.0

    def largest_unreduced(m: np.ndarray) -> int:
        best, run = 1, 1
        for i in range(n - 1):
            run = run + 1 if m[i + 1, i] != 0.0 else 1
            best = max(best, run)
        return best

    deflate(h)
    for _ in range(QR_MAX_SWEEPS):
        if largest_unreduced(h) <= 2:
            break
        qmat, rmat = np.linalg.qr(h)
        h = rmat @ qmat
        deflate(h)
    else:
        if largest_unreduced(h) > 2:
            raise NumericalError(
                "QR iteration stalled on an equal-modulus eigenvalue cluster larger than 2"
            )
    return max(_block_moduli(h))
