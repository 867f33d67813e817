"""Spectral bound on the phase-error observable combination.

The security argument needs a scalar ``B(kappa, gamma)`` dominating the
largest spectrum point of ``M[kappa, gamma]``, the combination of the
phase-error measurement, the fidelity projector weighted by ``kappa``, and
the minus-sector projector weighted by ``-gamma``.  Exploiting photon-number
parity, the bound reduces to the top eigenvalues of one 4x4 and one 2x2
symmetric matrix built from closed-form acceptance moments of the homodyne
filter, maximized with the constant 1.

A brute-force oracle assembles the full observable in a truncated
photon-number space and exposes its largest eigenvalue so the inequality can
be checked directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import erfc

__all__ = [
    "AcceptanceSpec",
    "ParityMoments",
    "DualCoefficients",
    "parity_moments",
    "parity_moments_quad",
    "m_err_r4",
    "m_cor_r2",
    "bound_B",
    "jacobi_eigenvalues",
    "charpoly_eigenvalues",
    "hermite_functions",
    "msuc_matrices",
    "coherent_fock_vector",
    "oracle_sigma_sup_M",
]

_SQRT2 = math.sqrt(2.0)
_SQRT_PI = math.sqrt(math.pi)

# below this amplitude the odd-sector moments switch to their series form
SMALL_BETA_THRESHOLD = 1e-3


@dataclass(frozen=True)
class AcceptanceSpec:
    """Homodyne acceptance threshold and reference coherent amplitude."""

    x_th: float
    beta: float

    def __post_init__(self) -> None:
        if self.x_th <= 0:
            raise ValueError(f"acceptance threshold must be positive, got {self.x_th}")
        if self.beta < 0:
            raise ValueError(f"reference amplitude must be nonnegative, got {self.beta}")


@dataclass(frozen=True)
class ParityMoments:
    """Even/odd-sector weights and acceptance moments of a coherent state.

    ``c`` are the parity weights (summing to 1), ``d`` the acceptance
    probabilities of the filtered homodyne measurement conditioned on parity,
    and ``v = d - d^2`` the corresponding variances.  ``small_beta`` flags
    that the odd-sector values came from the series around ``beta = 0``.
    """

    c_ev: float
    c_od: float
    d_ev: float
    d_od: float
    v_ev: float
    v_od: float
    small_beta: bool = False


@dataclass(frozen=True)
class DualCoefficients:
    """Nonnegative multipliers of the fidelity and minus-sector observables."""

    kappa: float
    gamma: float

    def __post_init__(self) -> None:
        if self.kappa < 0 or self.gamma < 0:
            raise ValueError(
                f"dual coefficients must be nonnegative, got ({self.kappa}, {self.gamma})"
            )


def parity_moments(spec: AcceptanceSpec) -> ParityMoments:
    """Closed-form parity weights and acceptance moments.

    For ``beta`` below :data:`SMALL_BETA_THRESHOLD` the odd-sector ratio is a
    0/0 form whose direct evaluation loses all significant digits, so the
    second-order series around ``beta = 0`` is used instead (flagged in the
    result, not an error).
    """
    t, b = spec.x_th, spec.beta
    b2 = b * b
    c_od = -math.expm1(-2.0 * b2) / 2.0
    c_ev = 1.0 - c_od
    num_sym = erfc(_SQRT2 * (t - b)) + erfc(_SQRT2 * (t + b))
    g = erfc(_SQRT2 * t)
    num_cross = 2.0 * math.exp(-2.0 * b2) * g
    d_ev = (num_sym + num_cross) / (4.0 * c_ev)
    small = b < SMALL_BETA_THRESHOLD
    if small:
        a = _SQRT2 * t
        ea = math.exp(-a * a)
        gpp = 4.0 * a / _SQRT_PI * ea
        g4 = 8.0 * a / _SQRT_PI * (2.0 * a * a - 3.0) * ea
        lead = gpp + 2.0 * g
        quart = g4 / 3.0 - 4.0 * g
        d_od = lead / 2.0 + b2 * (lead / 2.0 + quart / 4.0)
    else:
        d_od = (num_sym - num_cross) / (4.0 * c_od)
    return ParityMoments(
        c_ev=c_ev,
        c_od=c_od,
        d_ev=d_ev,
        d_od=d_od,
        v_ev=d_ev - d_ev * d_ev,
        v_od=d_od - d_od * d_od,
        small_beta=small,
    )


def parity_moments_quad(spec: AcceptanceSpec) -> ParityMoments:
    """Quadrature cross-check of :func:`parity_moments`.

    Integrates the squared even/odd projections of the coherent-state wave
    function directly, with no error-function identities.
    """
    t, b = spec.x_th, spec.beta
    amp = (2.0 / math.pi) ** 0.25

    def even_part(x):
        return 0.5 * amp * (np.exp(-((x - b) ** 2)) + np.exp(-((x + b) ** 2)))

    def odd_part(x):
        return 0.5 * amp * (np.exp(-((x - b) ** 2)) - np.exp(-((x + b) ** 2)))

    opts = dict(limit=300, epsabs=1e-14, epsrel=1e-13)
    c_ev = 2.0 * integrate.quad(lambda x: even_part(x) ** 2, 0.0, np.inf, **opts)[0]
    c_od = 2.0 * integrate.quad(lambda x: odd_part(x) ** 2, 0.0, np.inf, **opts)[0]
    if c_od <= 0.0:
        raise ValueError("odd-sector weight vanishes; quadrature oracle needs beta > 0")
    d_ev = 2.0 * integrate.quad(lambda x: even_part(x) ** 2, t, np.inf, **opts)[0] / c_ev
    d_od = 2.0 * integrate.quad(lambda x: odd_part(x) ** 2, t, np.inf, **opts)[0] / c_od
    return ParityMoments(
        c_ev=c_ev,
        c_od=c_od,
        d_ev=d_ev,
        d_od=d_od,
        v_ev=d_ev - d_ev * d_ev,
        v_od=d_od - d_od * d_od,
    )


def m_err_r4(pm: ParityMoments, duals: DualCoefficients, gamma_plus: float = 0.0) -> np.ndarray:
    """Rank-four comparison matrix for the error sector.

    Basis ordering: second odd vector, first odd vector, first even vector,
    second even vector, with the plus sector carrying ``gamma_plus`` and the
    minus sector ``duals.gamma``.
    """
    k, gp, gm = duals.kappa, gamma_plus, duals.gamma
    sv_od = math.sqrt(max(pm.v_od, 0.0))
    sv_ev = math.sqrt(max(pm.v_ev, 0.0))
    cross = k * math.sqrt(max(pm.c_od * pm.c_ev, 0.0))
    return np.array(
        [
            [1.0 - gp, sv_od, 0.0, 0.0],
            [sv_od, k * pm.c_od + pm.d_od - gp, cross, 0.0],
            [0.0, cross, k * pm.c_ev + pm.d_ev - gm, sv_ev],
            [0.0, 0.0, sv_ev, 1.0 - gm],
        ]
    )


def m_cor_r2(pm: ParityMoments, duals: DualCoefficients, gamma_plus: float = 0.0) -> np.ndarray:
    """Rank-two comparison matrix for the correlated sector."""
    k = duals.kappa
    cross = k * math.sqrt(max(pm.c_ev * pm.c_od, 0.0))
    return np.array(
        [
            [k * pm.c_ev - gamma_plus, cross],
            [cross, k * pm.c_od - duals.gamma],
        ]
    )


def _top_eig_2x2(a: float, b: float, d: float) -> float:
    # largest eigenvalue of [[a, b], [b, d]]
    return 0.5 * ((a + d) + math.hypot(a - d, 2.0 * b))


def _jacobi4_eigs(
    a00: float, a11: float, a22: float, a33: float,
    a01: float, a02: float, a03: float,
    a12: float, a13: float, a23: float,
    tol: float = 1e-14, max_sweeps: int = 60,
) -> list[float]:
    # unrolled cyclic Jacobi on compact symmetric 4x4 storage; identical
    # rotations to _jacobi_sweep, kept separate only to avoid list overhead
    # in the dual-optimization inner loop
    scale = max(
        1.0, abs(a00), abs(a11), abs(a22), abs(a33),
        abs(a01), abs(a02), abs(a03), abs(a12), abs(a13), abs(a23),
    )
    thresh = (tol * scale) ** 2
    sqrt = math.sqrt
    for _ in range(max_sweeps):
        off2 = (
            a01 * a01 + a02 * a02 + a03 * a03 + a12 * a12 + a13 * a13 + a23 * a23
        )
        if off2 <= thresh:
            return [a00, a11, a22, a33]
        if abs(a01) > 1e-300:
            tau = (a11 - a00) / (2.0 * a01)
            t = 1.0 / (tau + sqrt(1.0 + tau * tau)) if tau >= 0.0 else -1.0 / (-tau + sqrt(1.0 + tau * tau))
            c = 1.0 / sqrt(1.0 + t * t)
            s = t * c
            a00, a11, a01 = a00 - t * a01, a11 + t * a01, 0.0
            a02, a12 = c * a02 - s * a12, s * a02 + c * a12
            a03, a13 = c * a03 - s * a13, s * a03 + c * a13
        if abs(a02) > 1e-300:
            tau = (a22 - a00) / (2.0 * a02)
            t = 1.0 / (tau + sqrt(1.0 + tau * tau)) if tau >= 0.0 else -1.0 / (-tau + sqrt(1.0 + tau * tau))
            c = 1.0 / sqrt(1.0 + t * t)
            s = t * c
            a00, a22, a02 = a00 - t * a02, a22 + t * a02, 0.0
            a01, a12 = c * a01 - s * a12, s * a01 + c * a12
            a03, a23 = c * a03 - s * a23, s * a03 + c * a23
        if abs(a03) > 1e-300:
            tau = (a33 - a00) / (2.0 * a03)
            t = 1.0 / (tau + sqrt(1.0 + tau * tau)) if tau >= 0.0 else -1.0 / (-tau + sqrt(1.0 + tau * tau))
            c = 1.0 / sqrt(1.0 + t * t)
            s = t * c
            a00, a33, a03 = a00 - t * a03, a33 + t * a03, 0.0
            a01, a13 = c * a01 - s * a13, s * a01 + c * a13
            a02, a23 = c * a02 - s * a23, s * a02 + c * a23
        if abs(a12) > 1e-300:
            tau = (a22 - a11) / (2.0 * a12)
            t = 1.0 / (tau + sqrt(1.0 + tau * tau)) if tau >= 0.0 else -1.0 / (-tau + sqrt(1.0 + tau * tau))
            c = 1.0 / sqrt(1.0 + t * t)
            s = t * c
            a11, a22, a12 = a11 - t * a12, a22 + t * a12, 0.0
            a01, a02 = c * a01 - s * a02, s * a01 + c * a02
            a13, a23 = c * a13 - s * a23, s * a13 + c * a23
        if abs(a13) > 1e-300:
            tau = (a33 - a11) / (2.0 * a13)
            t = 1.0 / (tau + sqrt(1.0 + tau * tau)) if tau >= 0.0 else -1.0 / (-tau + sqrt(1.0 + tau * tau))
            c = 1.0 / sqrt(1.0 + t * t)
            s = t * c
            a11, a33, a13 = a11 - t * a13, a33 + t * a13, 0.0
            a01, a03 = c * a01 - s * a03, s * a01 + c * a03
            a12, a23 = c * a12 - s * a23, s * a12 + c * a23
        if abs(a23) > 1e-300:
            tau = (a33 - a22) / (2.0 * a23)
            t = 1.0 / (tau + sqrt(1.0 + tau * tau)) if tau >= 0.0 else -1.0 / (-tau + sqrt(1.0 + tau * tau))
            c = 1.0 / sqrt(1.0 + t * t)
            s = t * c
            a22, a33, a23 = a22 - t * a23, a33 + t * a23, 0.0
            a02, a03 = c * a02 - s * a03, s * a02 + c * a03
            a12, a13 = c * a12 - s * a13, s * a12 + c * a13
    raise RuntimeError("Jacobi iteration did not reduce the off-diagonal norm")


def _jacobi_sweep(a: list[list[float]], tol: float, max_sweeps: int) -> list[float]:
    # in-place cyclic Jacobi on a nested-list symmetric matrix
    n = len(a)
    scale = max(1.0, max(abs(v) for row in a for v in row))
    for _ in range(max_sweeps):
        off2 = 0.0
        for p in range(n - 1):
            row = a[p]
            for q in range(p + 1, n):
                off2 += row[q] * row[q]
        if off2 <= (tol * scale) ** 2:
            return [a[i][i] for i in range(n)]
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p][q]
                if abs(apq) <= 1e-300:
                    continue
                tau = (a[q][q] - a[p][p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for i in range(n):
                    aip, aiq = a[i][p], a[i][q]
                    a[i][p] = c * aip - s * aiq
                    a[i][q] = s * aip + c * aiq
                for i in range(n):
                    api, aqi = a[p][i], a[q][i]
                    a[p][i] = c * api - s * aqi
                    a[q][i] = s * api + c * aqi
    raise RuntimeError("Jacobi iteration did not reduce the off-diagonal norm")


def jacobi_eigenvalues(mat, tol: float = 1e-14, max_sweeps: int = 60) -> np.ndarray:
    """All eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm falls below ``tol`` times the
    matrix scale; raises ``RuntimeError`` if that never happens.
    """
    a = [[float(v) for v in row] for row in np.asarray(mat, dtype=float)]
    n = len(a)
    if any(len(row) != n for row in a):
        raise ValueError("matrix must be square")
    if n == 4:
        eigs = _jacobi4_eigs(
            a[0][0], a[1][1], a[2][2], a[3][3],
            a[0][1], a[0][2], a[0][3], a[1][2], a[1][3], a[2][3],
            tol, max_sweeps,
        )
        return np.sort(np.array(eigs))
    return np.sort(np.array(_jacobi_sweep(a, tol, max_sweeps)))


def _bound_from_moments(
    c_ev: float,
    c_od: float,
    d_ev: float,
    d_od: float,
    v_ev: float,
    v_od: float,
    kappa: float,
    gamma: float,
) -> float:
    # scalar fast path shared by bound_B and the dual optimizer's inner loop
    sv_od = math.sqrt(v_od) if v_od > 0.0 else 0.0
    sv_ev = math.sqrt(v_ev) if v_ev > 0.0 else 0.0
    cc = c_od * c_ev
    cross = kappa * (math.sqrt(cc) if cc > 0.0 else 0.0)
    top4 = max(
        _jacobi4_eigs(
            1.0, kappa * c_od + d_od, kappa * c_ev + d_ev - gamma, 1.0 - gamma,
            sv_od, 0.0, 0.0, cross, 0.0, sv_ev,
        )
    )
    top2 = _top_eig_2x2(kappa * c_ev, cross, kappa * c_od - gamma)
    return max(top4, top2, 1.0)


def bound_B(pm: ParityMoments, duals: DualCoefficients) -> float:
    """Scalar spectral bound; always at least 1."""
    return _bound_from_moments(
        pm.c_ev, pm.c_od, pm.d_ev, pm.d_od, pm.v_ev, pm.v_od, duals.kappa, duals.gamma
    )


def _real_poly_roots(coeffs: list[float]) -> list[float]:
    """Real roots of a monic real-rooted polynomial (ascending coefficients).

    Critical points come from the recursively solved derivative; each
    monotone interval is bisected.  Only meant for the tiny characteristic
    polynomials used as an eigenvalue cross-check.
    """
    deg = len(coeffs) - 1
    if deg == 1:
        return [-coeffs[0]]
    if deg == 2:
        c, b = coeffs[0], coeffs[1]
        disc = max(b * b - 4.0 * c, 0.0)
        rt = math.sqrt(disc)
        return sorted([(-b - rt) / 2.0, (-b + rt) / 2.0])

    def value(x: float) -> float:
        acc = 1.0
        for c in reversed(coeffs[:-1]):
            acc = acc * x + c
        return acc

    deriv = [coeffs[j] * j / deg for j in range(1, deg + 1)]
    crits = _real_poly_roots(deriv)
    bound = 1.0 + max(abs(c) for c in coeffs)
    knots = [-bound] + crits + [bound]
    scale = max(abs(value(k)) for k in knots) + 1.0
    roots: list[float] = []
    for lo, hi in zip(knots[:-1], knots[1:]):
        flo, fhi = value(lo), value(hi)
        if flo == 0.0:
            roots.append(lo)
            continue
        if flo * fhi > 0.0:
            continue
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fmid = value(mid)
            if fmid == 0.0 or hi - lo < 1e-15 * max(1.0, abs(mid)):
                break
            if flo * fmid < 0.0:
                hi = mid
            else:
                lo, flo = mid, fmid
        roots.append(0.5 * (lo + hi))
    if value(knots[-1]) == 0.0:
        roots.append(knots[-1])
    # double roots sit at critical points without a sign change
    for c in crits:
        if abs(value(c)) <= 1e-11 * scale and all(abs(c - r) > 1e-7 for r in roots):
            roots.extend([c, c])
    roots = sorted(roots)
    while len(roots) > deg:
        roots.pop(0)
    return roots


def charpoly_eigenvalues(mat) -> np.ndarray:
    """Eigenvalues via the characteristic polynomial, as an independent oracle.

    Coefficients come from Newton's identities on the trace power sums; roots
    from monotone-interval bisection.  Distinct from both the Jacobi solver
    and LAPACK, so it can arbitrate between them.
    """
    a = np.asarray(mat, dtype=float)
    n = a.shape[0]
    powers = [a]
    for _ in range(n - 1):
        powers.append(powers[-1] @ a)
    s = [float(np.trace(p)) for p in powers]
    e = [1.0]
    for k in range(1, n + 1):
        acc = 0.0
        for j in range(1, k + 1):
            acc += (-1) ** (j - 1) * e[k - j] * s[j - 1]
        e.append(acc / k)
    # det(xI - A) = x^n - e1 x^{n-1} + e2 x^{n-2} - ...
    coeffs = [(-1) ** (n - j) * e[n - j] for j in range(n)]
    roots = _real_poly_roots(coeffs + [1.0])
    if len(roots) != n:
        raise RuntimeError("characteristic-polynomial root count mismatch")
    return np.array(sorted(roots))


def hermite_functions(n_max: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal quadrature eigenfunctions up to ``n_max``.

    Normalized for the convention in which a coherent state has quadrature
    variance 1/4.  Returns an array of shape ``(n_max + 1, len(x))``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1, x.size))
    out[0] = (2.0 / math.pi) ** 0.25 * np.exp(-x * x)
    if n_max >= 1:
        out[1] = 2.0 * x * out[0]
    for n in range(1, n_max):
        out[n + 1] = (2.0 * x * out[n] - math.sqrt(n) * out[n - 1]) / math.sqrt(n + 1)
    return out


def _gauss_legendre_panels(a: float, b: float, n_panels: int, order: int):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    halves = 0.5 * np.diff(edges)
    xs = (mids[:, None] + halves[:, None] * nodes[None, :]).ravel()
    ws = (halves[:, None] * weights[None, :]).ravel()
    return xs, ws


def msuc_matrices(x_th: float, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Photon-number matrix elements of the successful filtered homodyne.

    Returns the even- and odd-sector operators, each supported on its parity
    block.  Integration runs over ``[x_th, x_th + 12]``, beyond which the
    integrand underflows.
    """
    xs, ws = _gauss_legendre_panels(x_th, x_th + 12.0, 24, 24)
    psi = hermite_functions(n_max, xs)
    overlap = 2.0 * (psi * ws) @ psi.T
    if not np.all(np.isfinite(overlap)):
        raise RuntimeError("quadrature for the acceptance matrix elements failed")
    n = np.arange(n_max + 1)
    even = n % 2 == 0
    m_ev = np.where(np.outer(even, even), overlap, 0.0)
    m_od = np.where(np.outer(~even, ~even), overlap, 0.0)
    return m_ev, m_od


def coherent_fock_vector(beta: float, n_max: int) -> np.ndarray:
    """Photon-number amplitudes of a real-amplitude coherent state."""
    n = np.arange(n_max + 1)
    if beta == 0.0:
        v = np.zeros(n_max + 1)
        v[0] = 1.0
        return v
    sign = np.ones(n_max + 1) if beta > 0 else (-1.0) ** n
    mag = np.abs(beta)
    from scipy.special import gammaln

    return sign * np.exp(-0.5 * beta * beta + n * math.log(mag) - 0.5 * gammaln(n + 1))


def oracle_sigma_sup_M(spec: AcceptanceSpec, duals: DualCoefficients, n_max: int) -> float:
    """Largest eigenvalue of the full observable in a truncated number space.

    The truncation is a compression, so the result can only undershoot the
    untruncated spectrum; it must stay below :func:`bound_B` for the same
    inputs, which is the inequality this oracle exists to check.
    """
    if n_max < 20:
        raise ValueError(f"need n_max >= 20 for a meaningful check, got {n_max}")
    m_ev, m_od = msuc_matrices(spec.x_th, n_max)
    dim = n_max + 1
    p_plus = 0.5 * np.array([[1.0, 1.0], [1.0, 1.0]])
    p_minus = 0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]])
    e00 = np.array([[1.0, 0.0], [0.0, 0.0]])
    e11 = np.array([[0.0, 0.0], [0.0, 1.0]])
    v_plus = coherent_fock_vector(spec.beta, n_max)
    v_minus = coherent_fock_vector(-spec.beta, n_max)
    big = (
        np.kron(p_plus, m_od)
        + np.kron(p_minus, m_ev)
        + duals.kappa
        * (np.kron(e00, np.outer(v_plus, v_plus)) + np.kron(e11, np.outer(v_minus, v_minus)))
        - duals.gamma * np.kron(p_minus, np.eye(dim))
    )
    top = float(np.linalg.eigvalsh(big)[-1])
    if not math.isfinite(top):
        raise RuntimeError("eigenvalue computation for the oracle failed")
    return top
