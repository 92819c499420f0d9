"""Independent numeric oracles shared by the test modules.

Everything here is computed from first principles (series expansions,
closed-form special functions, brute-force quadrature or Monte Carlo) and
deliberately avoids the code paths under test.
"""

import math

import numpy as np
from scipy.special import betaln, digamma, gammaln


def student_entropy(nu: float) -> float:
    """Differential entropy (nats) of the unit-variance t with df ``nu``.

    h = ((nu+1)/2) * (psi((nu+1)/2) - psi(nu/2)) + ln(sqrt(nu-2) * B(nu/2, 1/2))
    """
    a = (nu + 1.0) / 2.0
    return a * (digamma(a) - digamma(nu / 2.0)) + 0.5 * math.log(nu - 2.0) + betaln(
        nu / 2.0, 0.5
    )


def gaussian_entropy() -> float:
    return 0.5 * math.log(2.0 * math.pi * math.e)


def student_log_norm(nu: float) -> float:
    """log of the unit-variance t normalization constant, from log-Gamma."""
    return gammaln((nu + 1.0) / 2.0) - gammaln(nu / 2.0) - 0.5 * math.log(
        math.pi * (nu - 2.0)
    )


def student_tail_integral(nu: float, y_from: float, moment: int = 0, terms: int = 12) -> float:
    """integral over [y_from, inf) of y^moment * p(y; nu) dy by asymptotic series.

    Expands (1 + u^-2)^(-(nu+1)/2) binomially after substituting u = y/sqrt(nu-2);
    valid (and extremely accurate) once y_from^2 >> nu - 2.
    """
    m = nu - 2.0
    u0 = y_from / math.sqrt(m)
    if u0 < 4.0:
        raise ValueError("tail series needs y_from well beyond sqrt(nu-2)")
    k_norm = math.exp(student_log_norm(nu))
    total = 0.0
    # binomial series (1+u^-2)^(-a) = sum_k (-1)^k (a)_k / k! * u^(-2k)
    coeff = 1.0
    a = (nu + 1.0) / 2.0
    for k in range(terms):
        power = nu + 2.0 * k - moment
        total += coeff * u0 ** (-power) / power
        coeff *= -(a + k) / (k + 1.0)
    return k_norm * m ** ((moment + 1.0) / 2.0) * total


def linear_jscc_mse(d: int, k: int, sigma2: float) -> float:
    """Best achievable MSE of a linear encoder/decoder pair over AWGN.

    Source x ~ N(0, I_d), encoder E (k x d) under the per-scalar unit power
    budget tr(E E^T) = k, Wiener decoder. MSE = d - tr(E^T (E E^T + s2 I)^-1 E)
    = d - sum_i l_i/(l_i + s2) over the k eigenvalues l_i of E E^T; the sum is
    concave in l, so the equal allocation l_i = 1 is optimal:

        MSE* = (d - k) + k * sigma2 / (1 + sigma2)
    """
    return (d - k) + k * sigma2 / (1.0 + sigma2)


def wiener_mse_for_encoder(enc: np.ndarray, d: int, sigma2: float) -> float:
    """MSE of an arbitrary linear encoder (power-normalized) with the optimal
    linear decoder; used to sanity-check the closed form above."""
    k = enc.shape[0]
    enc = enc * math.sqrt(k / np.trace(enc @ enc.T))
    gram = enc @ enc.T + sigma2 * np.eye(k)
    return float(d - np.trace(enc.T @ np.linalg.solve(gram, enc)))


def finite_diff_gradient(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function over a flat vector."""
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (f(xp) - f(xm)) / (2.0 * step)
    return g
