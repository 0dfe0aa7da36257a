"""Statistical pipeline for the direct-rating approach.

Raw 1-100 ratings are moment-matched onto the Rasch logit scale, then a
simple per-(subject, grade) OLS regression maps the rescaled ratings to
true difficulties.  The omnibus F test for each regression is computed
from scratch via the regularized incomplete beta function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

__all__ = [
    "RescaleParams",
    "CalibrationModel",
    "fit_rescale",
    "rescale",
    "fit_ols",
    "predict_calibrated",
    "f_survival",
    "regularized_incomplete_beta",
    "format_p",
]

_MACHEP = 2.220446049250313e-16


@dataclass(frozen=True)
class RescaleParams:
    """Moments used to map raw ratings onto the Rasch scale.

    All standard deviations are sample (n-1) standard deviations.
    """

    mu_gpt: float
    sigma_gpt: float
    mu_rasch: float
    sigma_rasch: float

    def __post_init__(self) -> None:
        if not self.sigma_gpt > 0:
            raise ValueError("sigma_gpt must be > 0")
        if not self.sigma_rasch > 0:
            raise ValueError("sigma_rasch must be > 0")


@dataclass(frozen=True)
class CalibrationModel:
    """Per-(subject, grade) affine calibration with inference statistics."""

    subject: str
    grade: int
    beta0: float
    beta1: float
    n: int
    r2: float
    r2_adj: float
    f_stat: float
    df: tuple[int, int]
    p_value: float

    @property
    def significant(self) -> bool:
        return self.p_value < 0.05


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def _sample_sd(values: Sequence[float]) -> float:
    m = _mean(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / (len(values) - 1))


def fit_rescale(raw: Sequence[float], target: Sequence[float]) -> RescaleParams:
    """Fit moment-matching parameters from raw ratings and target difficulties.

    Both samples must come from the training split only.
    """
    if len(raw) < 2 or len(target) < 2:
        raise ValueError(
            f"need at least 2 observations to fit rescaling, "
            f"got {len(raw)} raw / {len(target)} target"
        )
    sigma_gpt = _sample_sd(raw)
    if sigma_gpt == 0:
        raise ValueError("raw ratings have zero variance; cannot rescale")
    sigma_rasch = _sample_sd(target)
    if sigma_rasch == 0:
        raise ValueError("target difficulties have zero variance; cannot rescale")
    return RescaleParams(
        mu_gpt=_mean(raw),
        sigma_gpt=sigma_gpt,
        mu_rasch=_mean(target),
        sigma_rasch=sigma_rasch,
    )


def rescale(params: RescaleParams, raw: Sequence[float]) -> list[float]:
    """Map raw ratings onto the Rasch scale: z-score then re-moment."""
    return [
        (x - params.mu_gpt) / params.sigma_gpt * params.sigma_rasch + params.mu_rasch
        for x in raw
    ]


def fit_ols(
    x: Sequence[float],
    y: Sequence[float],
    *,
    subject: str = "",
    grade: int = -1,
) -> CalibrationModel:
    """Simple least-squares regression of y on x with omnibus F test.

    R-squared equals the squared Pearson correlation; adjusted R-squared
    and the F statistic use the usual (1, n-2) degrees of freedom.
    """
    n = len(x)
    if n != len(y):
        raise ValueError(f"length mismatch: {n} predictors vs {len(y)} outcomes")
    if n < 3:
        raise ValueError(f"need at least 3 observations for regression, got {n}")
    xbar = _mean(x)
    ybar = _mean(y)
    sxx = sum((xi - xbar) ** 2 for xi in x)
    if sxx == 0:
        raise ValueError("predictor has zero variance")
    sxy = sum((xi - xbar) * (yi - ybar) for xi, yi in zip(x, y))
    syy = sum((yi - ybar) ** 2 for yi in y)

    beta1 = sxy / sxx
    beta0 = ybar - beta1 * xbar
    # Constant outcome: no variance to explain, R^2 defined as 0.
    r2 = 0.0 if syy == 0 else (sxy * sxy) / (sxx * syy)
    r2 = min(max(r2, 0.0), 1.0)
    r2_adj = 1.0 - (1.0 - r2) * (n - 1) / (n - 2)
    if 1.0 - r2 < 1e-15:
        f_stat = math.inf
        p_value = 0.0
    else:
        f_stat = r2 * (n - 2) / (1.0 - r2)
        p_value = f_survival(f_stat, 1, n - 2)
    return CalibrationModel(
        subject=subject,
        grade=grade,
        beta0=beta0,
        beta1=beta1,
        n=n,
        r2=r2,
        r2_adj=r2_adj,
        f_stat=f_stat,
        df=(1, n - 2),
        p_value=p_value,
    )


def predict_calibrated(model: CalibrationModel, rescaled: Sequence[float]) -> list[float]:
    return [model.beta0 + model.beta1 * x for x in rescaled]


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta, by modified Lentz's method."""
    tiny = 1e-30
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 10 * _MACHEP:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction failed to converge "
                          f"for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b), absolute error <= 1e-8."""
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if x < 0.0 or x > 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    # Pick the representation whose continued fraction converges fast.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_survival(f: float, d1: int, d2: int) -> float:
    """Upper-tail probability of the F(d1, d2) distribution at f."""
    if d1 < 1 or d2 < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got ({d1}, {d2})")
    if f < 0:
        raise ValueError(f"F statistic must be >= 0, got {f}")
    if f == 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    # P(F > f) = I_{d2/(d2 + d1 f)}(d2/2, d1/2)
    x = d2 / (d2 + d1 * f)
    return regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, x)


def format_p(p: float) -> str:
    """Render a p-value the way the coefficient tables report it."""
    if p < 0.001:
        return "<0.001"
    return f"{p:.4f}"
