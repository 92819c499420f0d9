"""Variance-normalized Student's t family with its Gaussian and Cauchy limits.

The central object is the one-parameter density

    p(y; nu) = Gamma((nu+1)/2) / (sqrt(pi*(nu-2)) * Gamma(nu/2))
               * (1 + y^2/(nu-2)) ** (-(nu+1)/2),   nu > 2,

whose variance is exactly 1 by construction. Small ``nu`` means heavy,
Cauchy-like tails; ``nu -> inf`` recovers the standard normal. The Gaussian
and Cauchy limits are first-class model kinds rather than sentinel ``nu``
values, because neither is reached at any finite parameter.

Also provided: exact sampling via the Gaussian-over-chi-square scale mixture,
numeric CDF/quantiles for QQ support, and the parameter bridges from the
two-parameter scaled law ``p(y) ~ (1 + y^2/s^2)^(-nu_t)`` and from the
payload-constraint Lagrange multiplier to ``nu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate
from scipy.special import gammaln, ndtr, ndtri

from .batch import SymbolBatch
from .errors import (
    InfiniteVarianceError,
    InputError,
    InvalidTailIndexError,
    NonFiniteInputError,
)

__all__ = [
    "TailKind",
    "TailModel",
    "ScaledTailLaw",
    "pdf",
    "log_pdf",
    "cdf",
    "ppf",
    "sample",
    "scaled_to_normalized",
    "lagrange_to_nu",
]

_LOG_2PI = math.log(2.0 * math.pi)
# Above this |y|, y*y would overflow or lose the log1p benefit; switch to the
# exact power-law form of the log density.
_HUGE_Y = 1e140


class TailKind(str, Enum):
    STUDENT_T = "student_t"
    GAUSSIAN = "gaussian"
    CAUCHY = "cauchy"


@dataclass(frozen=True)
class TailModel:
    """A symbol-amplitude law: unit-variance Student's t, or one of its limits.

    ``nu`` is a continuous degrees-of-freedom parameter and is only present
    for the ``STUDENT_T`` kind, where ``nu > 2`` keeps the variance finite
    (and equal to 1). The Gaussian and Cauchy kinds carry no parameter.
    """

    kind: TailKind
    nu: float | None = None

    def __post_init__(self):
        if self.kind == TailKind.STUDENT_T:
            if self.nu is None or not np.isfinite(self.nu):
                raise InvalidTailIndexError("student_t model requires a finite nu")
            if self.nu <= 2.0:
                raise InvalidTailIndexError(
                    f"student_t requires nu > 2 for unit variance, got nu={self.nu}"
                )
            object.__setattr__(self, "nu", float(self.nu))
        else:
            if self.nu is not None:
                raise InputError(f"{self.kind.value} model takes no nu parameter")

    @staticmethod
    def student_t(nu: float) -> "TailModel":
        return TailModel(TailKind.STUDENT_T, nu)

    @staticmethod
    def gaussian() -> "TailModel":
        return TailModel(TailKind.GAUSSIAN)

    @staticmethod
    def cauchy() -> "TailModel":
        return TailModel(TailKind.CAUCHY)

    def describe(self) -> str:
        if self.kind == TailKind.STUDENT_T:
            return f"student_t(nu={self.nu:g})"
        return self.kind.value


@dataclass(frozen=True)
class ScaledTailLaw:
    """Two-parameter power law ``p(y) ~ (1 + y^2/s^2)^(-nu_t)``.

    Integrability needs ``nu_t > 1/2``; a finite variance needs
    ``nu_t > 3/2``, in which case the variance is ``s^2 / (2*nu_t - 3)``.
    """

    s: float
    nu_t: float

    def __post_init__(self):
        if not (np.isfinite(self.s) and self.s > 0):
            raise InputError(f"scale s must be finite and positive, got {self.s}")
        if not (np.isfinite(self.nu_t) and self.nu_t > 0.5):
            raise InputError(
                f"tail exponent nu_t must exceed 1/2 for integrability, got {self.nu_t}"
            )


def _as_finite_array(y) -> tuple[np.ndarray, bool]:
    arr = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInputError("y must be finite")
    return arr, arr.ndim == 0


def _student_log_norm(nu: float) -> float:
    # log of Gamma((nu+1)/2) / (sqrt(pi*(nu-2)) * Gamma(nu/2))
    return (
        gammaln((nu + 1.0) / 2.0)
        - gammaln(nu / 2.0)
        - 0.5 * math.log(math.pi * (nu - 2.0))
    )


def log_pdf(model: TailModel, y) -> float | np.ndarray:
    """Natural log of :func:`pdf`, stable far into the tails.

    Stays finite for |y| up to at least 1e150 for the Student's t and Cauchy
    kinds, whose true log density is representable there.
    """
    arr, scalar = _as_finite_array(y)
    if model.kind == TailKind.GAUSSIAN:
        out = -0.5 * _LOG_2PI - 0.5 * arr * arr
    elif model.kind == TailKind.CAUCHY:
        big = np.abs(arr) > _HUGE_Y
        safe = np.where(big, 1.0, arr)
        out = -math.log(math.pi) - np.where(
            big, 2.0 * np.log(np.abs(np.where(big, arr, 1.0))), np.log1p(safe * safe)
        )
    else:
        nu = model.nu
        m = nu - 2.0
        big = np.abs(arr) > _HUGE_Y
        safe = np.where(big, 1.0, arr)
        log_kernel = np.where(
            big,
            2.0 * np.log(np.abs(np.where(big, arr, 1.0))) - math.log(m),
            np.log1p(safe * safe / m),
        )
        out = _student_log_norm(nu) - 0.5 * (nu + 1.0) * log_kernel
    return float(out) if scalar else out


def pdf(model: TailModel, y) -> float | np.ndarray:
    """Density of the model at ``y``.

    Student's t follows the variance-normalized form (unit variance for every
    ``nu > 2``); Gaussian is the standard normal; Cauchy is 1/(pi*(1+y^2)).
    Always positive and even in ``y``.
    """
    out = np.exp(log_pdf(model, y))
    return out


def cdf(model: TailModel, y) -> float | np.ndarray:
    """Cumulative distribution function.

    Gaussian and Cauchy use their closed forms. The Student's t CDF is
    integrated numerically outward from 0 (the density is even), which keeps
    the implementation independent of library t routines.
    """
    arr, scalar = _as_finite_array(y)
    if model.kind == TailKind.GAUSSIAN:
        out = ndtr(arr)
    elif model.kind == TailKind.CAUCHY:
        out = 0.5 + np.arctan(arr) / math.pi
    else:
        out = _student_cdf(model.nu, np.atleast_1d(arr)).reshape(arr.shape)
    return float(out) if scalar else out


def _student_cdf(nu: float, y: np.ndarray) -> np.ndarray:
    if y.size <= 4:
        half = np.array(
            [integrate.quad(lambda t: _student_pdf_scalar(nu, t), 0.0, a)[0] for a in np.abs(y)]
        )
    else:
        half = _half_integral_sorted(nu, np.abs(y))
    return 0.5 + np.sign(y) * half


def _student_pdf_scalar(nu: float, t: float) -> float:
    m = nu - 2.0
    return math.exp(_student_log_norm(nu) - 0.5 * (nu + 1.0) * math.log1p(t * t / m))


# 16-point Gauss-Legendre nodes/weights on [-1, 1], for the vectorized CDF.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _half_integral_sorted(nu: float, a: np.ndarray) -> np.ndarray:
    """integral of the t pdf over [0, a_i] for every a_i >= 0, vectorized.

    Integrates over the segments between consecutive sorted values with
    fixed-order Gauss-Legendre and accumulates; the density is smooth, so
    per-segment error is negligible against the 1e-8 contract.
    """
    order = np.argsort(a, kind="stable")
    edges = np.concatenate(([0.0], a[order]))
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    rad = 0.5 * (hi - lo)
    pts = mid[:, None] + rad[:, None] * _GL_NODES[None, :]
    m = nu - 2.0
    vals = np.exp(
        _student_log_norm(nu) - 0.5 * (nu + 1.0) * np.log1p(pts * pts / m)
    )
    seg = rad * (vals @ _GL_WEIGHTS)
    cum = np.cumsum(seg)
    out = np.empty_like(a)
    out[order] = np.minimum(cum, 0.5)
    return out


def ppf(model: TailModel, p) -> float | np.ndarray:
    """Quantile function (inverse CDF).

    Closed form for Gaussian and Cauchy; bisection on the numeric CDF to an
    absolute tolerance of 1e-8 for the Student's t.
    """
    arr = np.asarray(p, dtype=np.float64)
    scalar = arr.ndim == 0
    if np.any((arr <= 0.0) | (arr >= 1.0)):
        raise InputError("quantile levels must lie strictly inside (0, 1)")
    if model.kind == TailKind.GAUSSIAN:
        out = ndtri(arr)
    elif model.kind == TailKind.CAUCHY:
        out = np.tan(math.pi * (arr - 0.5))
    else:
        flat = np.atleast_1d(arr).reshape(-1)
        out = np.array([_student_ppf_scalar(model.nu, pi) for pi in flat]).reshape(arr.shape)
    return float(out) if scalar else out


def _student_ppf_scalar(nu: float, p: float, tol: float = 1e-8) -> float:
    if p == 0.5:
        return 0.0
    q = p if p > 0.5 else 1.0 - p
    target = q - 0.5  # integral of pdf over [0, x]

    def half(x: float) -> float:
        return integrate.quad(lambda t: _student_pdf_scalar(nu, t), 0.0, x)[0]

    hi = 1.0
    while half(hi) < target:
        hi *= 2.0
        if hi > 1e12:
            raise InputError(f"quantile level {p} not reachable by bisection")
    lo = 0.0
    while hi - lo > tol:
        midp = 0.5 * (lo + hi)
        if half(midp) < target:
            lo = midp
        else:
            hi = midp
    x = 0.5 * (lo + hi)
    return x if p > 0.5 else -x


def sample(model: TailModel, n: int, seed: int) -> SymbolBatch:
    """Draw ``n`` independent values from the model as a 1 x n batch.

    Student's t uses the exact scale-mixture construction: a standard normal
    divided by the square root of an independent chi-square, scaled so the
    population variance is exactly 1 (the inverse symbol power is then Gamma
    distributed). Deterministic for a fixed seed.
    """
    if n < 1:
        raise InputError(f"need n >= 1 samples, got {n}")
    rng = np.random.default_rng(seed)
    if model.kind == TailKind.GAUSSIAN:
        vals = rng.standard_normal(n)
    elif model.kind == TailKind.CAUCHY:
        vals = rng.standard_cauchy(n)
    else:
        nu = model.nu
        z = rng.standard_normal(n)
        w = rng.chisquare(nu, n)
        vals = z * np.sqrt((nu - 2.0) / w)
    return SymbolBatch(vals.reshape(1, n), meta=model.describe())


def scaled_to_normalized(law: ScaledTailLaw) -> tuple[TailModel, float]:
    """Convert the two-parameter scaled law to the unit-variance model.

    Returns the Student's t model with ``nu = 2*nu_t - 1`` together with the
    multiplicative rescale that maps a draw from the scaled law to unit
    variance. The scaled law's variance is ``s^2/(2*nu_t - 3)``, so the
    rescale is ``sqrt(2*nu_t - 3)/s``.
    """
    if law.nu_t <= 1.5:
        raise InfiniteVarianceError(
            f"scaled law has no finite variance for nu_t <= 3/2, got nu_t={law.nu_t}"
        )
    nu = 2.0 * law.nu_t - 1.0
    rescale = math.sqrt(2.0 * law.nu_t - 3.0) / law.s
    return TailModel.student_t(nu), rescale


def lagrange_to_nu(lam: float) -> float:
    """Degrees of freedom implied by the payload-constraint multiplier.

    The constrained-entropy solution has tail exponent ``nu_t`` equal to the
    multiplier, so ``nu = 2*lam - 1`` exactly; ``lam > 3/2`` is required for
    the unit-variance model to exist.
    """
    if not (np.isfinite(lam) and lam > 1.5):
        raise InputError(f"multiplier must exceed 3/2 for finite variance, got {lam}")
    return 2.0 * lam - 1.0
