"""Fourier and matrix mean-square stability analysis of the explicit scheme.

A discrete Fourier mode g_n exp(i j theta) is multiplied per step by
a(theta) + b(theta) Z + c(theta) Z^2, and its mean-square amplitude by
S(theta) = |a+c|^2 + |b|^2 + 2|c|^2.  The scheme is mean-square stable iff
mu^2 k <= 1 - rho and k/h^2 <= 1/(1 + 2 rho^2); both conditions are exactly
the endpoints of S(theta) <= 1 over theta.

The matrix half mirrors the same quantities on the finite Dirichlet grid:
the quadratic form driving E[V^T V] is a symmetric matrix whose eigenvectors
are the discrete sine modes with eigenvalues S(theta_m), plus two rank-one
boundary corrections.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FourierSymbol",
    "StabilityCheck",
    "StabilityMatrices",
    "fourier_symbols",
    "ms_amplification",
    "check_stability",
    "scan_amplification",
    "build_stability_matrices",
    "verify_matrix_eigenstructure",
]


@dataclass(frozen=True)
class FourierSymbol:
    """Per-mode step multiplier coefficients: factor = a + b Z + c Z^2."""

    a: complex
    b: complex
    c: complex


def fourier_symbols(theta, params, h, k):
    """Symbol coefficients of the three-point scheme at mode angle theta."""
    s = math.sin(theta)
    s2 = math.sin(0.5 * theta) ** 2
    a = 1.0 - 1j * params.mu * k / h * s - 2.0 * (1.0 - params.rho) * k / h**2 * s2
    b = -1j * math.sqrt(params.rho * k) / h * s
    c = -2.0 * params.rho * k / h**2 * s2
    return FourierSymbol(a=a, b=b, c=complex(c))


def ms_amplification(theta, params, h, k):
    """Mean-square amplification S(theta) = |a+c|^2 + |b|^2 + 2|c|^2.

    Vectorised: theta may be an array.
    """
    theta = np.asarray(theta, dtype=float)
    s = np.sin(theta)
    s2 = np.sin(0.5 * theta) ** 2
    a = 1.0 - 1j * params.mu * k / h * s - 2.0 * (1.0 - params.rho) * k / h**2 * s2
    b = -1j * math.sqrt(params.rho * k) / h * s
    c = -2.0 * params.rho * k / h**2 * s2
    out = np.abs(a + c) ** 2 + np.abs(b) ** 2 + 2.0 * c * c
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class StabilityCheck:
    """Outcome of the two-condition mean-square stability test.

    Margins are left/right ratios of the two inequalities; both <= 1 means
    stable (boundaries included).
    """

    stable: bool
    margin_drift: float
    margin_mesh: float


def _ratio(lhs, rhs):
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs == 0 else math.inf


def check_stability(params, h, k):
    """Test mu^2 k <= 1 - rho and k/h^2 <= 1/(1 + 2 rho^2)."""
    margin_drift = _ratio(params.mu**2 * k, 1.0 - params.rho)
    margin_mesh = (k / h**2) * (1.0 + 2.0 * params.rho**2)
    return StabilityCheck(stable=margin_drift <= 1.0 and margin_mesh <= 1.0,
                          margin_drift=margin_drift, margin_mesh=margin_mesh)


def scan_amplification(params, h, k, n_theta=10000):
    """Dense theta scan of S on [0, pi]; the endpoint pi is always included."""
    theta = np.linspace(0.0, math.pi, n_theta)
    return theta, ms_amplification(theta, params, h, k)


@dataclass(frozen=True)
class StabilityMatrices:
    """Difference matrices and the mean-square growth matrix on J-1 interior nodes.

    d1/d2 are the central first/second difference matrices, d3 the doubled-span
    second difference closed with -3 corners (odd reflection), corner_first and
    corner_last the rank-one corner matrices with entry 2.  growth is the
    symmetric matrix M whose sine-mode eigenvalues are S(theta_m); the discarded
    boundary terms carry coefficients boundary_sym (on both corners) and
    boundary_skew (odd between them).
    """

    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    corner_first: np.ndarray
    corner_last: np.ndarray
    growth: np.ndarray
    boundary_sym: float
    boundary_skew: float


def build_stability_matrices(J, params, h, k):
    """Assemble the Dirichlet-grid stability matrices for J intervals (J >= 3)."""
    if J < 3:
        raise ValueError("matrix analysis needs J >= 3")
    n = J - 1
    ones = np.ones(n - 1)
    d1 = np.diag(ones, 1) - np.diag(ones, -1)
    d2 = np.diag(ones, 1) + np.diag(ones, -1) - 2.0 * np.eye(n)
    d3 = -2.0 * np.eye(n)
    if n > 2:
        d3 += np.diag(np.ones(n - 2), 2) + np.diag(np.ones(n - 2), -2)
    d3[0, 0] = -3.0
    d3[-1, -1] = -3.0
    corner_first = np.zeros((n, n))
    corner_first[0, 0] = 2.0
    corner_last = np.zeros((n, n))
    corner_last[-1, -1] = 2.0

    rho, mu = params.rho, params.mu
    lam = k / h**2
    # Expansion of (A+C)^T (A+C) + B^T B + 2 C^T C using D1^2 = D3 + corners:
    # the sine-diagonalisable part.
    growth = (np.eye(n)
              + lam * d2
              + (1.0 + 2.0 * rho**2) * lam**2 / 4.0 * (d2 @ d2)
              - (rho * k + mu**2 * k**2) / (4.0 * h**2) * d3)
    boundary_sym = (rho * k + mu**2 * k**2) / (2.0 * h**2)
    boundary_skew = mu * k**2 / (2.0 * h**3)
    return StabilityMatrices(d1=d1, d2=d2, d3=d3, corner_first=corner_first,
                             corner_last=corner_last, growth=growth,
                             boundary_sym=boundary_sym, boundary_skew=boundary_skew)


def verify_matrix_eigenstructure(J, params, h, k):
    """Max relative sup-norm deviation of M w_m from S(theta_m) w_m.

    w_m has elements sin(j theta_m), theta_m = m pi / J, applied for every
    m = 1..J-1 by direct matrix-vector products (no eigensolver involved).
    """
    mats = build_stability_matrices(J, params, h, k)
    j = np.arange(1, J)
    worst = 0.0
    for m in range(1, J):
        theta = m * math.pi / J
        w = np.sin(j * theta)
        resid = mats.growth @ w - ms_amplification(theta, params, h, k) * w
        worst = max(worst, np.max(np.abs(resid)) / np.max(np.abs(w)))
    return worst
