"""Normal step, primal-dual step and inertia-corrected KKT solves."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, lstsq, solve_triangular

from .barrier import ScaledSystem

DELTA_MIN = 1e-8
DELTA_MAX = 1e8
PD_TOL = 1e-10
KAPPA_SIGMA = 1e10


class InertiaCorrectionError(RuntimeError):
    """The Hessian shift exceeded its cap without producing correct inertia."""


@dataclass
class TrustRegionResult:
    v: np.ndarray
    on_boundary: bool
    lam: float
    predicted_residual: float
    radius: float


@dataclass
class KktResult:
    d: np.ndarray
    u: np.ndarray
    y_next: np.ndarray
    W_used: np.ndarray
    modification_shift: float
    attempts: int = 1


# --------------------------------------------------------------- trust region

def solve_trust_region(H, b, delta, *, rtol: float = 1e-12, max_iter: int = 200):
    """Minimize ``0.5 t'Ht + b't`` over ``||t|| <= delta`` for PSD ``H``.

    Moré-Sorensen iteration: Newton's method on ``1/delta - 1/||t(lam)||``
    with ``t(lam) = -(H + lam I)^{-1} b`` evaluated through Cholesky
    factors, safeguarded by a bracket on ``lam``.  For positive
    semidefinite ``H`` the hard case can only occur at ``lam = 0``; when the
    unconstrained minimizers reach the ball, the least-norm minimizer
    ``-pinv(H) b`` is returned with ``lam = 0``.

    Returns
    -------
    t : ndarray
    lam : float
        Multiplier of the norm constraint.
    """
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    m = b.size
    if H.shape != (m, m):
        raise ValueError(f"H has shape {H.shape}, expected {(m, m)}")
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(b)) and math.isfinite(delta)):
        raise ValueError("nonfinite trust-region data")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    H = 0.5 * (H + H.T)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(m), 0.0
    if delta == 0.0:
        return np.zeros(m), math.inf

    hnorm = float(np.linalg.norm(H))
    lam_tiny = 1e-13 * hnorm if hnorm > 0.0 else 1e-13 * bnorm / delta
    eye = np.eye(m)

    def step(lam):
        try:
            L = np.linalg.cholesky(H + lam * eye)
        except np.linalg.LinAlgError:
            return None, None
        w = solve_triangular(L, -b, lower=True)
        return solve_triangular(L.T, w, lower=False), L

    with np.errstate(over="ignore", invalid="ignore"):
        t, _ = step(lam_tiny)
    if t is not None and np.all(np.isfinite(t)) and np.linalg.norm(t) <= delta:
        # Interior: least-norm minimizer of the (possibly singular) quadratic.
        t0, *_ = lstsq(H, -b, cond=1e-12, lapack_driver="gelsd")
        if np.linalg.norm(t0) <= delta * (1.0 + 1e-10):
            return t0, 0.0
        t = None

    # On the boundary ||b|| / (lam + ||H||) <= delta = ||t|| <= ||b|| / lam.
    lam_lo = max(lam_tiny, bnorm / delta - hnorm)
    lam_hi = bnorm / delta + lam_tiny
    lam = lam_lo
    if t is None:
        lam = math.sqrt(lam_lo * lam_hi)
    best = None
    for _ in range(max_iter):
        with np.errstate(over="ignore", invalid="ignore"):
            t, L = step(lam)
        if t is None or not np.all(np.isfinite(t)):
            lam_lo = lam
            lam = math.sqrt(lam_lo * lam_hi) if lam_lo > 0 else 0.5 * lam_hi
            continue
        tn = float(np.linalg.norm(t))
        best = (t, lam)
        if abs(tn - delta) <= rtol * delta:
            break
        if tn > delta:
            lam_lo = max(lam_lo, lam)
        else:
            lam_hi = min(lam_hi, lam)
        w = solve_triangular(L, t, lower=True)
        lam_new = lam + (tn / np.linalg.norm(w)) ** 2 * (tn - delta) / delta
        if not (lam_lo < lam_new < lam_hi):
            lam_new = math.sqrt(lam_lo * lam_hi) if lam_lo > 0 else 0.5 * (lam_lo + lam_hi)
        if lam_new == lam:
            break
        lam = lam_new
    t, lam = best
    return t, float(lam)


def normal_step(sys: ScaledSystem, omega: float, tol_tr: float = 1e-10) -> TrustRegionResult:
    """Normal step: ``min 0.5||c + Jv||^2`` over ``v`` in range(J^T), ``||v|| <= omega ||J^T c||``.

    With ``J^T = QR`` every admissible step is ``v = Qw`` and ``||v|| = ||w||``,
    so the problem is solved in the orthonormal range coordinates ``w``
    (``H = R R^T``, ``b = R c``); this keeps ``v`` in range(J^T) to machine
    precision and avoids squaring the conditioning of ``J`` for the
    interior (Newton) step.
    """
    c, J = sys.c, sys.J
    m = J.shape[1]
    JTc = J.T @ c
    rnorm = float(np.linalg.norm(JTc))
    if rnorm == 0.0:
        return TrustRegionResult(np.zeros(m), False, 0.0, float(np.linalg.norm(c)), 0.0)
    radius = omega * rnorm
    Q, R = np.linalg.qr(J.T)
    w = solve_triangular(R, -c, trans="T", lower=False)
    lam = 0.0
    on_boundary = False
    if np.linalg.norm(w) > radius:
        w, lam = solve_trust_region(R @ R.T, R @ c, radius, rtol=min(tol_tr, 1e-12))
        on_boundary = True
    v = Q @ w
    return TrustRegionResult(v, on_boundary, lam, float(np.linalg.norm(c + J @ v)), radius)


# ------------------------------------------------------------- primal-dual

def build_W(H_noisy, s, y, mu, kappa_sigma: float = KAPPA_SIGMA) -> np.ndarray:
    """``blkdiag(H, Sigma)`` with ``Sigma = S Y`` safeguarded into ``[mu/kappa, kappa mu]``."""
    s = np.asarray(s, dtype=float)
    y_safe = np.clip(y, mu / (kappa_sigma * s), kappa_sigma * mu / s)
    n, q = H_noisy.shape[0], s.size
    W = np.zeros((n + q, n + q))
    W[:n, :n] = 0.5 * (H_noisy + H_noisy.T)
    W[n:, n:] = np.diag(s * y_safe)
    return W


def pivot_eigenvalues(ldu: np.ndarray, ipiv: np.ndarray) -> np.ndarray:
    """Eigenvalues of the block-diagonal factor of a lower Bunch-Kaufman ``dsytrf``."""
    N = ldu.shape[0]
    out = np.empty(N)
    i = 0
    while i < N:
        if ipiv[i] > 0:
            out[i] = ldu[i, i]
            i += 1
        else:
            a, b, c = ldu[i, i], ldu[i + 1, i], ldu[i + 1, i + 1]
            mid, rad = 0.5 * (a + c), math.hypot(0.5 * (a - c), b)
            out[i], out[i + 1] = mid - rad, mid + rad
            i += 2
    return out


def kkt_inertia(K: np.ndarray):
    """Factor ``K`` and return ``(ldu, ipiv, pivot eigenvalues)`` or ``None`` on breakdown."""
    ldu, ipiv, info = lapack.dsytrf(K, lower=1)
    if info != 0:
        return None
    return ldu, ipiv, pivot_eigenvalues(ldu, ipiv)


def inertia_correct_and_solve(W, sys: ScaledSystem, v, *, pd_tol: float = PD_TOL,
                              delta_last: float = 0.0, delta_min: float = DELTA_MIN,
                              delta_max: float = DELTA_MAX, refine: int = 1) -> KktResult:
    """Shift ``W`` until ``[[W, J'], [J, 0]]`` has inertia ``(n+q, q, 0)``, then solve.

    Acceptance needs ``n+q`` pivot eigenvalues of at least ``pd_tol`` and
    ``q`` negative ones (``n+q`` is the size of ``W``; counting only ``n``
    positives would not certify positive definiteness on null(J)), and the
    resulting tangential step must show curvature ``u'Wu >= pd_tol ||u||^2``.
    Shifts start at ``max(delta_min, delta_last / 3)`` and grow tenfold.
    """
    J, g = sys.J, sys.g
    q, m = J.shape
    N = m + q
    K = np.zeros((N, N))
    K[m:, :m] = J
    K[:m, m:] = J.T
    rhs = np.concatenate([-g, J @ v])
    W = 0.5 * (W + W.T)

    delta = 0.0
    attempts = 0
    while True:
        attempts += 1
        K[:m, :m] = W
        if delta:
            K[np.arange(m), np.arange(m)] += delta
        fact = kkt_inertia(K)
        if fact is not None:
            ldu, ipiv, eig = fact
            if np.count_nonzero(eig >= pd_tol) == m and np.count_nonzero(eig < 0.0) == q:
                sol, _ = lapack.dsytrs(ldu, ipiv, rhs, lower=1)
                for _ in range(refine):
                    corr, _ = lapack.dsytrs(ldu, ipiv, rhs - K @ sol, lower=1)
                    sol = sol + corr
                d, y_next = sol[:m], sol[m:]
                u = d - v
                Wd = K[:m, :m]
                if np.all(np.isfinite(sol)) and u @ Wd @ u >= pd_tol * (u @ u):
                    return KktResult(d=d, u=u, y_next=y_next, W_used=Wd.copy(),
                                     modification_shift=delta, attempts=attempts)
        if delta == 0.0:
            delta = max(delta_min, delta_last / 3.0)
        else:
            delta *= 10.0
        if delta > delta_max:
            raise InertiaCorrectionError(f"Hessian shift exceeded {delta_max:g}")
