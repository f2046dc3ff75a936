"""Liouville-Green barrier, Agmon integral and the kernel bound expressions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import OperatorParams
from .quadrature import cumulative_integral


def h_fun(p: OperatorParams, r):
    """``c r^beta / (1 + r^alpha)``."""
    r = np.asarray(r, dtype=float)
    return p.c * r**p.beta / (1.0 + r**p.alpha)


def _check_ge1(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 1.0):
        raise ValueError("radius must be >= 1")
    return r


def agmon_J(p: OperatorParams, r, rel_tol: float = 1e-10):
    """Agmon distance ``J(r) = int_1^r sqrt(h(s)) ds`` for ``r >= 1``.

    Raises
    ------
    QuadratureError
        If the adaptive rule exhausts its subdivision budget.
    """
    if not 0.0 < rel_tol <= 1e-3:
        raise ValueError("rel_tol must lie in (0, 1e-3]")
    r = _check_ge1(r)
    out = cumulative_integral(lambda s: np.sqrt(h_fun(p, s)), 1.0, r, rel_tol=rel_tol)
    return float(out) if out.ndim == 0 else out


def default_k(p: OperatorParams) -> int:
    """Smallest ``k >= 3`` with ``k xi + 2 - alpha > 1``."""
    k = 3
    while k * p.xi + 2.0 - p.alpha <= 1.0:
        k += 1
    return k


def c0_coefficient(p: OperatorParams) -> float:
    xi, N, a, b = p.xi, p.dim_N, p.alpha, p.b
    return (
        ((xi - 1) / 2) ** 2
        + (xi - 1) / 2
        - (N - 1) * (N - 3) / 4
        - (b / 2) * (N - 2 + a)
        - (b * a / 2) * (b / (2 * a) - 1)
    )


def solve_recursion(xi: float, c0: float, lam: float, k: int) -> np.ndarray:
    """Coefficients ``c_0..c_k`` of the correction series.

    ``2c1 + c0 = lam``, ``2 xi c1 + 2 c2 = 0`` and, for ``i = 2..k-1``,
    ``xi (i+1) c_i + 2 c_{i+1} + sum_{j+s=i} c_j c_s = 0`` (ordered pairs,
    ``j, s >= 1``).
    """
    c = np.zeros(k + 1)
    c[0] = c0
    c[1] = 0.5 * (lam - c0)
    if k >= 2:
        c[2] = -xi * c[1]
    for i in range(2, k):
        quad = sum(c[j] * c[i - j] for j in range(1, i))
        c[i + 1] = -0.5 * (xi * (i + 1) * c[i] + quad)
    return c


def recursion_residuals(xi: float, coeffs, lam: float) -> np.ndarray:
    """Residuals of the defining relations (zero for a consistent set)."""
    c = np.asarray(coeffs, dtype=float)
    k = c.size - 1
    res = [2 * c[1] + c[0] - lam, 2 * c[1] * xi + 2 * c[2]]
    for i in range(2, k):
        quad = sum(c[j] * c[i - j] for j in range(1, i))
        res.append(xi * (i + 1) * c[i] + 2 * c[i + 1] + quad)
    return np.array(res)


@dataclass(frozen=True)
class WkbModel:
    """Truncated correction series ``v(r) = sum_i c_i r^(-i xi - 1)``."""

    params: OperatorParams
    lam: float
    k_terms: int
    coeffs: tuple

    def v(self, r):
        r = np.asarray(r, dtype=float)
        xi = self.params.xi
        return sum(ci * r ** (-i * xi - 1.0) for i, ci in enumerate(self.coeffs) if i >= 1)

    def v_prime(self, r):
        r = np.asarray(r, dtype=float)
        xi = self.params.xi
        return sum(-ci * (i * xi + 1.0) * r ** (-i * xi - 2.0) for i, ci in enumerate(self.coeffs) if i >= 1)

    def v_integral(self, r):
        """Closed form of ``int_1^r v(s) ds`` (the ``c_0`` term is excluded)."""
        r = np.asarray(r, dtype=float)
        xi = self.params.xi
        return sum(ci / (i * xi) * (1.0 - r ** (-i * xi)) for i, ci in enumerate(self.coeffs) if i >= 1)


def wkb_coefficients(p: OperatorParams, lam: float, k: int | None = None, *, c0: float | None = None) -> WkbModel:
    """Build the correction series for eigenvalue parameter ``lam``.

    ``c0`` may be overridden for synthetic checks of the recursion.
    """
    if k is None:
        k = default_k(p)
    if k < 3 or k * p.xi + 2.0 - p.alpha <= 0:
        raise ValueError(f"k={k} violates k >= 3 and k*xi + 2 - alpha > 0")
    c0 = c0_coefficient(p) if c0 is None else float(c0)
    coeffs = solve_recursion(p.xi, c0, lam, k)
    return WkbModel(p, float(lam), int(k), tuple(float(x) for x in coeffs))


def log_barrier_g(model: WkbModel, r, rel_tol: float = 1e-12):
    p = model.params
    r = _check_ge1(r)
    J = agmon_J(p, r, rel_tol)
    return (
        -(p.dim_N - 1) / 2.0 * np.log(r)
        - p.b / (2.0 * p.alpha) * np.log1p(r**p.alpha)
        - 0.25 * np.log(h_fun(p, r))
        - J
        - model.v_integral(r)
    )


def barrier_g(model: WkbModel, r, rel_tol: float = 1e-12):
    """Barrier ``r^{-(N-1)/2} (1+r^a)^{-b/2a} h^{-1/4} exp(-J - int v)``."""
    return np.exp(log_barrier_g(model, r, rel_tol))


def log_comparator(p: OperatorParams, r, rel_tol: float = 1e-12, J=None):
    r = _check_ge1(r)
    if J is None:
        J = agmon_J(p, r, rel_tol)
    return -p.decay_power * np.log(r) - p.b / (2.0 * p.alpha) * np.log1p(r**p.alpha) - J


def comparator_psi_hat(p: OperatorParams, r, rel_tol: float = 1e-12):
    """Two-sided comparator ``r^{-(N-1)/2-(beta-alpha)/4} (1+r^a)^{-b/2a} e^{-J}``."""
    return np.exp(log_comparator(p, r, rel_tol))


def _log_derivative_parts(p: OperatorParams, r):
    """Return ``sqrt(h)``, ``h'/h`` and its derivative, drift ``a1`` and ``a1'``."""
    a, beta, b = p.alpha, p.beta, p.b
    ra = r**a
    sqh = np.sqrt(h_fun(p, r))
    dlogh = beta / r - a * r ** (a - 1) / (1 + ra)
    d2logh = -beta / r**2 - a * r ** (a - 2) * (a - 1 - ra) / (1 + ra) ** 2
    a1 = b * r ** (a - 1) / (1 + ra)
    a1p = b * r ** (a - 2) * (a - 1 - ra) / (1 + ra) ** 2
    return sqh, dlogh, d2logh, a1, a1p


def log_barrier_derivative(model: WkbModel, r):
    """``d/dr log g`` in closed form."""
    p = model.params
    r = np.asarray(r, dtype=float)
    sqh, dlogh, _, a1, _ = _log_derivative_parts(p, r)
    return -(p.dim_N - 1) / (2 * r) - 0.5 * a1 - 0.25 * dlogh - sqh - model.v(r)


def wkb_residual_g1(model: WkbModel, r):
    """Relative defect ``g1 = (g'' + p g' - h g) / g`` of the barrier.

    With ``L = log g`` and ``L' = -sqrt(h) + rho`` the leading terms cancel
    analytically, so the formula is free of large-r cancellation.
    """
    p = model.params
    r = _check_ge1(r)
    N = p.dim_N
    sqh, dlogh, d2logh, a1, a1p = _log_derivative_parts(p, r)
    v = model.v(r)
    rho = -(N - 1) / (2 * r) - 0.5 * a1 - 0.25 * dlogh - v
    drift = (N - 1) / r + a1
    # L'' + (sqrt h)'
    curv = (N - 1) / (2 * r**2) - 0.5 * a1p - 0.25 * d2logh - model.v_prime(r)
    return curv + rho**2 + drift * rho + 2.0 * sqh * v


def log_bound_B(p: OperatorParams, rx, ry, rel_tol: float = 1e-12, Jx=None, Jy=None):
    rx, ry = _check_ge1(rx), _check_ge1(ry)
    if Jx is None:
        Jx = agmon_J(p, rx, rel_tol)
    if Jy is None:
        Jy = agmon_J(p, ry, rel_tol)
    lx, ly = np.log1p(rx**p.alpha), np.log1p(ry**p.alpha)
    return (
        p.b / (2 * p.alpha) * (ly - lx)
        - p.decay_power * (np.log(rx) + np.log(ry))
        - ly
        - Jx
        - Jy
    )


def bound_B(p: OperatorParams, rx, ry, rel_tol: float = 1e-12):
    """Right side of the two-point kernel bound, without the constants."""
    return np.exp(log_bound_B(p, rx, ry, rel_tol))


def tilde_exponent(p: OperatorParams, r):
    """``(sqrt 2/(beta-alpha+2)) (r^{(beta-alpha+2)/2} - 1)``, a lower bound for ``J``."""
    s = p.beta - p.alpha + 2.0
    return np.sqrt(2.0) / s * (np.asarray(r, dtype=float) ** (s / 2.0) - 1.0)


def log_bound_B_tilde(p: OperatorParams, rx, ry):
    rx, ry = _check_ge1(rx), _check_ge1(ry)
    return log_bound_B(p, rx, ry, Jx=tilde_exponent(p, rx), Jy=tilde_exponent(p, ry))


def simplified_bound_B_tilde(p: OperatorParams, rx, ry):
    """Bound with each Agmon factor replaced by its power-law lower estimate.

    Normalized so that it equals ``bound_B`` at ``rx = ry = 1``.
    """
    return np.exp(log_bound_B_tilde(p, rx, ry))


def tilde_integrand_gap(p: OperatorParams, r):
    """``sqrt(2 h(r)) - r^{(beta-alpha)/2}``; nonnegative on ``r >= 1`` when ``c = 1``."""
    r = np.asarray(r, dtype=float)
    return np.sqrt(2.0 * h_fun(p, r)) - r ** ((p.beta - p.alpha) / 2.0)


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log|y|`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.abs(np.asarray(y, float))), 1)[0])


def residual_slope(model: WkbModel, r_lo: float = 5.0, r_hi: float = 50.0, num: int = 200) -> float:
    """Decay slope of ``|r^2 g1(r) - lam|`` on ``[r_lo, r_hi]``."""
    r = np.geomspace(r_lo, r_hi, num)
    return loglog_slope(r, r**2 * wkb_residual_g1(model, r) - model.lam)
