"""Radial grids and the two discrete pictures of the operator.

Symmetric picture: piecewise-linear elements for the weighted form with
row-sum lumped mass, natural condition at the first node and a Dirichlet
node at ``R`` (dropped from the unknowns).

Drift picture: second-order centered differences for ``A`` on the same
nodes and with the same boundary conditions.
"""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np

from .asymptotics import agmon_J
from .model import OperatorParams, potential_U

GRADINGS = ("uniform", "geometric")
DEFAULT_R = 20.0
DEFAULT_N = 4000
DEFAULT_RATIO = 1.0005

_G2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)


class AssemblyError(RuntimeError):
    pass


def grid_nodes(R: float, n: int, grading: str = "geometric", ratio: float = DEFAULT_RATIO) -> np.ndarray:
    """Node rule without size validation.

    ``uniform``: ``n`` equispaced nodes from ``R/(10 n)`` to ``R``.
    ``geometric``: steps ``h_1 q^(i-1)`` starting at the origin, ``r_n = R``.
    """
    if grading == "uniform":
        return np.linspace(R / (10.0 * n), R, n)
    if grading == "geometric":
        if not 1.0 < ratio <= 1.1:
            raise ValueError("geometric ratio must lie in (1, 1.1]")
        i = np.arange(1, n + 1)
        nodes = R * np.expm1(i * np.log(ratio)) / np.expm1(n * np.log(ratio))
        nodes[-1] = R
        return nodes
    raise ValueError(f"unknown grading {grading!r}")


@dataclass(frozen=True, eq=False)
class RadialGrid:
    nodes: np.ndarray
    grading: str
    ratio: float | None
    R: float
    agmon_R: float | None = None

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def truncation_indicator(self) -> float | None:
        """``exp(-J(R))``; small values mean the Dirichlet cut is harmless."""
        return None if self.agmon_R is None else float(np.exp(-self.agmon_R))


def build_grid(R: float = DEFAULT_R, n: int = DEFAULT_N, grading: str = "geometric",
               ratio: float = DEFAULT_RATIO, params: OperatorParams | None = None) -> RadialGrid:
    """Validated radial grid; stores ``J(R)`` when ``params`` is given."""
    if n < 100:
        raise ValueError(f"grid needs n >= 100 (got {n})")
    if R < 10:
        raise ValueError(f"grid needs R >= 10 (got {R})")
    nodes = grid_nodes(R, n, grading, ratio)
    agmon_R = None
    if params is not None:
        agmon_R = agmon_J(params, R, 1e-8)
        if np.exp(-agmon_R) > 1e-10:
            warnings.warn(f"truncation indicator exp(-J(R)) = {np.exp(-agmon_R):.3g} exceeds 1e-10")
    return RadialGrid(nodes, grading, ratio if grading == "geometric" else None, float(R), agmon_R)


def refined_grid(grid: RadialGrid, n: int, params: OperatorParams | None = None) -> RadialGrid:
    """Same grading family with ``n`` nodes; geometric grids keep the total stretch ``q^(n-1)``."""
    if grid.grading == "geometric":
        stretch = grid.ratio ** (grid.n - 1)
        ratio = stretch ** (1.0 / (n - 1))
        return build_grid(grid.R, n, "geometric", ratio, params)
    return build_grid(grid.R, n, grid.grading, params=params)


def extend_grid(grid: RadialGrid, R_new: float, params: OperatorParams | None = None) -> RadialGrid:
    """Continue the node sequence past ``R`` with the same step law.

    The original nodes are kept, so the discretization on ``(0, R)`` is
    unchanged and only the truncation point moves.
    """
    nodes = list(grid.nodes)
    q = grid.ratio if grid.grading == "geometric" else 1.0
    step = nodes[-1] - nodes[-2]
    while nodes[-1] < R_new:
        step *= q
        nodes.append(nodes[-1] + step)
    if nodes[-1] - R_new > 0 and R_new - nodes[-2] < 0.5 * step:
        nodes.pop()
    nodes[-1] = R_new
    agmon_R = agmon_J(params, R_new, 1e-8) if params is not None else None
    return RadialGrid(np.array(nodes), grid.grading, grid.ratio, float(R_new), agmon_R)


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    """Assembled arrays on the unknown nodes ``r_1 .. r_{n-1}``.

    ``stiffness_diag``/``stiffness_off`` hold the symmetric tridiagonal form
    matrix; ``mass`` and ``potential_mass`` are lumped diagonals. The drift
    arrays hold the centered-difference matrix of ``A`` (lower, diag, upper).
    """

    grid: RadialGrid
    params: OperatorParams
    stiffness_diag: np.ndarray
    stiffness_off: np.ndarray
    potential_mass: np.ndarray
    mass: np.ndarray
    drift_lower: np.ndarray | None = None
    drift_diag: np.ndarray | None = None
    drift_upper: np.ndarray | None = None

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes[:-1]

    @property
    def size(self) -> int:
        return self.mass.size

    @property
    def operator_diag(self) -> np.ndarray:
        return self.stiffness_diag + self.potential_mass

    def operator_matvec(self, v):
        """``(stiffness + potential_mass) v`` for vectors or column blocks."""
        v = np.asarray(v, dtype=float)
        d = self.operator_diag
        e = self.stiffness_off
        if v.ndim == 1:
            out = d * v
            out[:-1] += e * v[1:]
            out[1:] += e * v[:-1]
            return out
        out = d[:, None] * v
        out[:-1] += e[:, None] * v[1:]
        out[1:] += e[:, None] * v[:-1]
        return out

    def stiffness_matvec(self, v):
        v = np.asarray(v, dtype=float)
        out = self.stiffness_diag * v
        out[:-1] += self.stiffness_off * v[1:]
        out[1:] += self.stiffness_off * v[:-1]
        return out

    def symmetrized(self):
        """Diagonal and off-diagonal of ``M^{-1/2} (K + P) M^{-1/2}``."""
        s = 1.0 / np.sqrt(self.mass)
        return self.operator_diag * s * s, self.stiffness_off * s[:-1] * s[1:]


def _element_gauss(r):
    """Gauss points (two per element) and half-widths."""
    a, b = r[:-1], r[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * _G2[None, :]
    return pts, half


def _lumped(values_at_pts, pts, a, b, half):
    """Row-sum lumping of ``int f phi_i`` on each element."""
    h = b - a
    phi_right = (pts - a[:, None]) / h[:, None]
    phi_left = 1.0 - phi_right
    left = half * np.sum(values_at_pts * phi_left, axis=1)
    right = half * np.sum(values_at_pts * phi_right, axis=1)
    out = np.zeros(a.size + 1)
    out[:-1] += left
    out[1:] += right
    return out


def assemble_H_mu(p: OperatorParams, grid: RadialGrid) -> DiscreteSystem:
    """Weighted form ``int v'w' r^{N-1} dr + int U v w r^{N-1}/(1+r^a) dr`` and mass."""
    r = grid.nodes
    N = p.dim_N
    a, b = r[:-1], r[1:]
    h = b - a
    pts, half = _element_gauss(r)
    w_stiff = np.mean(pts ** (N - 1), axis=1) / h
    dens = pts ** (N - 1) / (1.0 + pts**p.alpha)
    mass = _lumped(dens, pts, a, b, half)
    pot = _lumped(dens * potential_U(p, pts), pts, a, b, half)
    if np.any(w_stiff <= 0) or np.any(mass <= 0):
        raise AssemblyError("nonpositive quadrature weight in assembly")
    # element contributions; node 0 has no left element (natural condition)
    kd = np.zeros(r.size)
    kd[:-1] += w_stiff
    kd[1:] += w_stiff
    ko = -w_stiff
    # drop the Dirichlet node at R
    return DiscreteSystem(grid, p, kd[:-1], ko[:-1], pot[:-1], mass[:-1])


def drift_arrays(p: OperatorParams, r: np.ndarray, c: float | None = None):
    """Centered-difference coefficients of ``A`` at nodes ``r[0..n-2]``.

    Returns lower (length n-2), diagonal (n-1) and upper (n-2) bands after
    removing the Dirichlet node ``r[-1]``. The first row uses a mirror ghost
    node, which encodes ``u'(r_1) = 0``.
    """
    c = p.c if c is None else c
    n = r.size
    D = 1.0 + r**p.alpha
    drift = (p.dim_N - 1) / r * D + p.b * r ** (p.alpha - 1.0)
    lower = np.zeros(n)
    diag = -c * r**p.beta
    upper = np.zeros(n)
    hm = np.empty(n)
    hp = np.empty(n)
    hm[1:] = np.diff(r)
    hp[:-1] = np.diff(r)
    i = np.arange(1, n - 1)
    A, B = hm[i], hp[i]
    lower[i] = D[i] * 2.0 / (A * (A + B)) - drift[i] * B / (A * (A + B))
    upper[i] = D[i] * 2.0 / (B * (A + B)) + drift[i] * A / (B * (A + B))
    diag[i] += -2.0 * D[i] / (A * B) + drift[i] * (B - A) / (A * B)
    h0 = hp[0]
    diag[0] += -2.0 * D[0] / h0**2
    upper[0] = 2.0 * D[0] / h0**2
    return lower[1 : n - 1], diag[: n - 1], upper[: n - 2]


def assemble_A_radial(p: OperatorParams, grid: RadialGrid, system: DiscreteSystem | None = None) -> DiscreteSystem:
    """Attach the drift-picture matrix to ``system`` (assembling it if needed)."""
    if system is None:
        system = assemble_H_mu(p, grid)
    lower, diag, upper = drift_arrays(p, grid.nodes)
    return dataclasses.replace(system, drift_lower=lower, drift_diag=diag, drift_upper=upper)


def assemble(p: OperatorParams, grid: RadialGrid) -> DiscreteSystem:
    """Both pictures on one grid."""
    return assemble_A_radial(p, grid, assemble_H_mu(p, grid))


def dump_system(system: DiscreteSystem, path) -> None:
    """Plain-text matrix dump: header ``n R grading`` then one row per unknown node."""
    g = system.grid
    grading = g.grading if g.ratio is None else f"{g.grading}({g.ratio!r})"
    n = system.size
    cols = [
        system.nodes,
        system.stiffness_diag,
        np.append(system.stiffness_off, 0.0),
        system.potential_mass,
        system.mass,
    ]
    if system.drift_diag is not None:
        cols += [np.insert(system.drift_lower, 0, 0.0), system.drift_diag, np.append(system.drift_upper, 0.0)]
    with open(path, "w") as fh:
        fh.write(f"{n}\t{g.R!r}\t{grading}\n")
        fh.write("#r\tstiff_diag\tstiff_upper\tpotential_mass\tmass")
        fh.write("\tdrift_lower\tdrift_diag\tdrift_upper\n" if system.drift_diag is not None else "\n")
        for row in zip(*cols):
            fh.write("\t".join(repr(float(x)) for x in row) + "\n")


def load_dump(path) -> dict:
    """Read a dump written by :func:`dump_system` into named arrays."""
    with open(path) as fh:
        n, R, grading = fh.readline().rstrip("\n").split("\t")
        names = fh.readline().lstrip("#").split()
        data = np.loadtxt(fh, ndmin=2)
    out = {"n": int(n), "R": float(R), "grading": grading}
    out.update({name: data[:, k] for k, name in enumerate(names)})
    return out


def _drift_similarity(system: DiscreteSystem):
    """Symmetric form ``D A D^{-1}`` of the drift matrix and ``log D``."""
    l, d, u = system.drift_lower, system.drift_diag, system.drift_upper
    prod = l * u
    if np.any(prod <= 0):
        raise AssemblyError("drift matrix is not sign-symmetrizable")
    logD = np.concatenate([[0.0], np.cumsum(0.5 * np.log(u / l))])
    return d, np.sqrt(prod), logD


def drift_eigenpairs(system: DiscreteSystem, m: int):
    """Top ``m`` eigenpairs ``A Phi = lam Phi`` of the drift matrix.

    Eigenvalues come from the diagonally symmetrized matrix; each vector is
    then polished by inverse iteration on the nonsymmetric matrix itself.
    """
    from scipy.linalg import lapack

    from .spectral import inverse_iteration, smallest_eigenvalues

    d, e, logD = _drift_similarity(system)
    sig = smallest_eigenvalues(-d, -e, m)
    x = inverse_iteration(-d, -e, sig)
    lam = np.array([-(x[:, j] @ (-d * x[:, j] - np.append(e * x[1:, j], 0) - np.insert(e * x[:-1, j], 0, 0))) for j in range(m)])
    Phi = x * np.exp(-(logD - logD.max()))[:, None]
    power_gap = np.zeros(m)
    for j in range(m):
        dl_f, d_f, du_f, du2, ipiv, info = lapack.dgttrf(
            system.drift_lower.copy(), system.drift_diag - lam[j] * (1 + 1e-12), system.drift_upper.copy()
        )
        y = Phi[:, j] / np.linalg.norm(Phi[:, j])
        for _ in range(3):
            y, _ = lapack.dgttrs(dl_f, d_f, du_f, du2, ipiv, y)
            y /= np.linalg.norm(y)
        ref = Phi[:, j] / np.linalg.norm(Phi[:, j])
        power_gap[j] = min(np.abs(y - ref).max(), np.abs(y + ref).max())
    return lam, Phi, power_gap


def similarity_transform_check(system: DiscreteSystem, p: OperatorParams, m: int = 5) -> dict:
    """Compare the drift picture with the symmetric picture.

    Returns the largest relative eigenvalue mismatch over the first ``m``
    pairs, the largest eigenvector mismatch ``|c Phi phi - psi| / |psi|``
    (``c`` the least-squares scale), and the inverse-iteration cross-check
    on the nonsymmetric matrix.
    """
    from .model import weight_phi
    from .spectral import eigensolve

    if system.drift_diag is None:
        system = assemble_A_radial(p, system.grid, system)
    eig = eigensolve(system, m)
    lam_d, Phi, power_gap = drift_eigenpairs(system, m)
    w = weight_phi(p, system.nodes)
    rel = np.abs(lam_d - eig.eigenvalues) / np.abs(eig.eigenvalues)
    vec = np.zeros(m)
    for j in range(m):
        a = Phi[:, j] * w
        psi = eig.psi[:, j]
        c = (a @ psi) / (a @ a)
        vec[j] = np.abs(c * a - psi).max() / np.abs(psi).max()
    return {
        "eigenvalue_rel_mismatch": float(rel.max()),
        "eigenvalue_rel_mismatch_each": rel,
        "eigenvector_mismatch": float(vec.max()),
        "eigenvector_mismatch_each": vec,
        "drift_inverse_iteration_gap": float(power_gap.max()),
        "drift_eigenvalues": lam_d,
        "symmetric_eigenvalues": eig.eigenvalues,
    }
