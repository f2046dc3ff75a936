"""Eigenpairs of the symmetric picture by Sturm-sequence bisection."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .discretize import DiscreteSystem, assemble_H_mu, extend_grid, refined_grid
from .model import OperatorParams, weight_phi

_TINY = 1e-300


class SpectralError(RuntimeError):
    pass


def sturm_count(diag, off, shifts) -> np.ndarray:
    """Number of eigenvalues strictly below each shift (LDL^T inertia)."""
    d = np.asarray(diag, dtype=float)
    e2 = np.asarray(off, dtype=float) ** 2
    x = np.atleast_1d(np.asarray(shifts, dtype=float))
    count = np.zeros(x.shape, dtype=np.int64)
    q = d[0] - x
    count += q < 0
    for i in range(1, d.size):
        q = np.where(q == 0.0, -_TINY, q)
        q = d[i] - x - e2[i - 1] / q
        count += q < 0
    return count


def gershgorin(diag, off):
    d = np.asarray(diag, float)
    a = np.abs(np.asarray(off, float))
    rad = np.zeros_like(d)
    rad[:-1] += a
    rad[1:] += a
    return float(np.min(d - rad)), float(np.max(d + rad))


def smallest_eigenvalues(diag, off, m: int, points: int | None = None, rtol: float = 1e-12) -> np.ndarray:
    """The ``m`` smallest eigenvalues of a symmetric tridiagonal matrix.

    Multisection: each sweep evaluates ``points`` Sturm counts inside every
    bracket at once and keeps the sub-bracket holding the target index. A
    sweep costs about the same for one shift or a few hundred, so the
    default spends roughly 256 shifts per sweep.
    """
    if points is None:
        points = max(15, 256 // m - 1)
    lo_all, hi_all = gershgorin(diag, off)
    span = hi_all - lo_all
    lo_all -= 1e-3 * span + 1.0
    hi_all += 1e-3 * span + 1.0
    scale = max(abs(lo_all), abs(hi_all))
    lo = np.full(m, lo_all)
    hi = np.full(m, hi_all)
    target = np.arange(m)
    frac = np.arange(1, points + 1) / (points + 1)
    for _ in range(200):
        width = hi - lo
        active = width > rtol * np.maximum(np.abs(lo), np.abs(hi)) + 1e-300 * scale
        if not active.any():
            break
        x = lo[:, None] + width[:, None] * frac[None, :]
        cnt = sturm_count(diag, off, x.ravel()).reshape(x.shape)
        above = cnt > target[:, None]
        # first shift with count > target bounds the eigenvalue from above
        first = np.where(above.any(axis=1), above.argmax(axis=1), points)
        new_hi = np.where(first < points, x[np.arange(m), np.minimum(first, points - 1)], hi)
        new_lo = np.where(first > 0, x[np.arange(m), np.maximum(first - 1, 0)], lo)
        same = np.isclose(new_hi, new_lo, rtol=0, atol=0)
        if np.all(~active | same):
            break
        lo = np.where(active, new_lo, lo)
        hi = np.where(active, new_hi, hi)
    return 0.5 * (lo + hi)


def _tridiag_solve_factory(diag, off, shift):
    dl = off.copy()
    du = off.copy()
    d = diag - shift
    dl_f, d_f, du_f, du2, ipiv, info = lapack.dgttrf(dl, d, du)
    if info < 0:
        raise SpectralError(f"tridiagonal factorization failed (info={info})")
    if info > 0:
        d_f[info - 1] = _TINY * max(1.0, np.abs(d).max())

    def solve(b):
        x, info2 = lapack.dgttrs(dl_f, d_f, du_f, du2, ipiv, b)
        if info2 != 0:
            raise SpectralError("tridiagonal solve failed")
        return x

    return solve


def _tri_matvec(diag, off, x):
    y = diag * x
    y[:-1] += off * x[1:]
    y[1:] += off * x[:-1]
    return y


def inverse_iteration(diag, off, shifts, max_iter: int = 50, tol: float = 1e-13):
    """Eigenvectors for the given (accurate) eigenvalue estimates.

    Vectors for close shifts are orthogonalized against earlier ones. At
    least three solves are made: the first one leaves start-vector noise of
    order ``eps`` in components where the eigenvector is exponentially small.
    """
    diag = np.asarray(diag, float)
    off = np.asarray(off, float)
    n = diag.size
    scale = max(1.0, float(np.max(np.abs(diag))))
    vecs = np.zeros((n, len(shifts)))
    start = np.sin(np.arange(1, n + 1) * 0.7548776662466927) + 1.3
    for k, sigma in enumerate(shifts):
        pert = 8.0 * np.finfo(float).eps * max(abs(sigma), 1.0)
        solve = _tridiag_solve_factory(diag, off, sigma + pert)
        x = start / np.linalg.norm(start)
        for it in range(max_iter):
            y = solve(x)
            for j in range(k):
                if abs(shifts[j] - sigma) < 1e-3 * scale:
                    y -= (vecs[:, j] @ y) * vecs[:, j]
            y /= np.linalg.norm(y)
            theta = y @ _tri_matvec(diag, off, y)
            res = np.linalg.norm(_tri_matvec(diag, off, y) - theta * y)
            x = y
            # extra steps clean the tiny tail components, which a normwise
            # test cannot see
            if it >= 2 and res < tol * scale:
                break
        else:
            raise SpectralError(f"inverse iteration did not converge for eigenvalue {k} in {max_iter} steps")
        vecs[:, k] = x
    return vecs


@dataclass(frozen=True, eq=False)
class EigenData:
    """Eigenpairs in descending order ``lam_0 > lam_1 >= ...``.

    ``psi`` columns are orthonormal for the lumped mass; ``phi_vectors`` are
    ``psi / weight_phi``.
    """

    eigenvalues: np.ndarray
    psi: np.ndarray
    phi_vectors: np.ndarray
    nodes: np.ndarray
    mass: np.ndarray
    residuals: np.ndarray
    backward_errors: np.ndarray
    normalization: str = "mass-norm of psi = T Phi equals 1"

    @property
    def m(self) -> int:
        return self.eigenvalues.size

    @property
    def lambda0(self) -> float:
        return float(self.eigenvalues[0])

    def gram(self) -> np.ndarray:
        return self.psi.T @ (self.mass[:, None] * self.psi)


def eigensolve_arrays(op_diag, op_off, mass, m: int):
    """Top ``m`` eigenpairs of ``(K + P) psi = -lam M psi`` for tridiagonal ``K + P``.

    Returns ``(eigenvalues, psi, residuals, backward_errors)`` with
    eigenvalues descending. ``residuals`` is ``|(K+P)psi + lam M psi| / |M psi|``;
    ``backward_errors`` divides the same vector norm by
    ``| |K+P| |psi| | + |lam| |M psi|`` and is the scale-free accuracy measure.
    """
    op_diag = np.asarray(op_diag, float)
    op_off = np.asarray(op_off, float)
    mass = np.asarray(mass, float)
    s = 1.0 / np.sqrt(mass)
    sd = op_diag * s * s
    so = op_off * s[:-1] * s[1:]
    sig = smallest_eigenvalues(sd, so, m)
    x = inverse_iteration(sd, so, sig)
    psi = x * s[:, None]
    psi /= np.sqrt(np.sum(mass[:, None] * psi**2, axis=0))
    # Rayleigh quotient: far more accurate than the bisection bracket
    Kpsi = _block_matvec(op_diag, op_off, psi)
    lam = -np.sum(psi * Kpsi, axis=0)
    res = np.linalg.norm(Kpsi + lam * mass[:, None] * psi, axis=0) / np.linalg.norm(mass[:, None] * psi, axis=0)
    absK = _block_matvec(np.abs(op_diag), np.abs(op_off), np.abs(psi))
    berr = np.linalg.norm(Kpsi + lam * mass[:, None] * psi, axis=0) / np.linalg.norm(
        absK + np.abs(lam) * mass[:, None] * np.abs(psi), axis=0
    )
    for j in range(m):
        i = int(np.argmax(np.abs(psi[:, j])))
        if psi[i, j] < 0:
            psi[:, j] *= -1
    return lam, psi, res, berr


def _block_matvec(d, e, v):
    out = d[:, None] * v
    out[:-1] += e[:, None] * v[1:]
    out[1:] += e[:, None] * v[:-1]
    return out


def eigensolve(sys: DiscreteSystem, m: int = 8) -> EigenData:
    """Top ``m`` eigenpairs of the symmetric picture."""
    if not 1 <= m <= sys.size // 10:
        raise ValueError(f"m must satisfy 1 <= m <= n/10 (got m={m}, n={sys.size})")
    lam, psi, res, berr = eigensolve_arrays(sys.operator_diag, sys.stiffness_off, sys.mass, m)
    if np.any(berr > 1e-12):
        raise SpectralError(f"eigenpair backward error {berr.max():.3g} above 1e-12")
    p = sys.params
    if p.c == 1.0 and lam[0] >= 0:
        raise SpectralError(f"top eigenvalue {lam[0]:g} is not negative: discretization error alarm")
    if psi[:, 0].min() < 0 and abs(psi[:, 0].min()) > 1e-10 * psi[:, 0].max():
        warnings.warn("ground state changes sign on the grid")
    phi = psi / weight_phi(p, sys.nodes)[:, None]
    return EigenData(lam, psi, phi, sys.nodes.copy(), sys.mass.copy(), res, berr)


def ground_state(sys: DiscreteSystem, p: OperatorParams | None = None):
    """``(lambda_0, Phi, psi)`` with both vectors positive."""
    eig = eigensolve(sys, m=1)
    return eig.lambda0, eig.phi_vectors[:, 0], eig.psi[:, 0]


def expansion_kernel_block(eig: EigenData, t: float, rows, cols, m: int | None = None):
    """``sum_{j<m} e^{lam_j t} psi_j(r_i) psi_j(r_l)`` for all ``i`` in rows, ``l`` in cols."""
    m = eig.m if m is None else m
    w = np.exp(eig.eigenvalues[:m] * t)
    A = eig.psi[np.asarray(rows)][:, :m] if rows is not None else eig.psi[:, :m]
    B = eig.psi[np.asarray(cols)][:, :m] if cols is not None else eig.psi[:, :m]
    return (A * w) @ B.T


def expansion_kernel_mu(eig: EigenData, t: float, i: int, j: int, m: int | None = None):
    """Truncated spectral sum for ``k_mu(t, r_i, r_j)``.

    Returns ``(value, truncation_estimate)``; the estimate is
    ``e^{lam_{m-1} t} max|psi_{m-1}|^2`` (last retained mode as a proxy for
    the first dropped one).
    """
    if t <= 0:
        raise ValueError("t must be positive")
    m = eig.m if m is None else m
    terms = np.exp(eig.eigenvalues[:m] * t) * (eig.psi[i, :m] * eig.psi[j, :m])
    value = float(np.sum(terms))
    last = eig.psi[:, m - 1]
    estimate = float(np.exp(eig.eigenvalues[m - 1] * t) * np.max(np.abs(last)) ** 2)
    if m >= 2 and estimate > 0.01 * abs(value):
        warnings.warn(f"spectral truncation estimate {estimate:.3g} exceeds 1% of the kernel value")
    return value, estimate


def export_eigenpairs(eig: EigenData, path) -> None:
    """TSV table ``r psi_0 .. psi_{m-1}`` preceded by an eigenvalue header."""
    with open(path, "w") as fh:
        fh.write("# eigenvalues\t" + "\t".join(repr(float(x)) for x in eig.eigenvalues) + "\n")
        fh.write("r\t" + "\t".join(f"psi_{j}" for j in range(eig.m)) + "\n")
        for r, row in zip(eig.nodes, eig.psi):
            fh.write(repr(float(r)) + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")


@dataclass
class ConvergenceReport:
    n_list: list
    lambda0: list
    observed_order: float
    extrapolated: float
    monotone: bool
    truncation: dict = field(default_factory=dict)

    def as_record(self) -> dict:
        rec = {
            "observed_order": self.observed_order,
            "extrapolated_lambda0": self.extrapolated,
            "monotone": self.monotone,
        }
        for n, lam in zip(self.n_list, self.lambda0):
            rec[f"lambda0_n{n}"] = lam
        for R, d in self.truncation.items():
            rec[f"truncation_rel_diff_R{R:g}"] = d
        return rec


def richardson(n_list, values):
    """Observed order and extrapolated limit from the last three levels.

    Assumes a constant refinement factor between successive levels.
    """
    n1, n2, n3 = n_list[-3:]
    v1, v2, v3 = values[-3:]
    ratio = n2 / n1
    d12, d23 = v2 - v1, v3 - v2
    if d23 == 0 or d12 == 0 or np.sign(d12) != np.sign(d23):
        return float("nan"), float(v3)
    order = float(np.log(abs(d12 / d23)) / np.log(ratio))
    extrap = float(v3 + d23 / ((n3 / n2) ** order - 1.0))
    return order, extrap


def convergence_study(p: OperatorParams, R_list, n_list, base_grid) -> ConvergenceReport:
    """Refinement ladder at ``R_list[0]`` plus truncation sensitivity at the other radii."""
    if len(n_list) < 3:
        raise ValueError("need at least 3 refinement levels")
    lams = []
    finest_grid = None
    for n in n_list:
        g = refined_grid(base_grid, n)
        lams.append(ground_state(assemble_H_mu(p, g))[0])
        finest_grid = g
    order, extrap = richardson(n_list, lams)
    diffs = np.diff(lams)
    monotone = bool(np.all(diffs > 0) or np.all(diffs < 0))
    trunc = {}
    for R in R_list[1:]:
        lam_R = ground_state(assemble_H_mu(p, extend_grid(finest_grid, R)))[0]
        trunc[float(R)] = abs(lam_R - lams[-1]) / abs(lams[-1])
    return ConvergenceReport(list(n_list), [float(x) for x in lams], order, extrap, monotone, trunc)
