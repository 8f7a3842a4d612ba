"""Statistical post-processing: two-component beta-mixture classification of
population data, period extraction from peak locations, theoretical output
distributions of the period-finding circuit, and exponential decay fits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from math import gcd

import numpy as np
from scipy.optimize import curve_fit
from scipy.special import betaln, digamma, polygamma

CLIP = 1e-6  # population values are clipped into [CLIP, 1-CLIP]


class AnalysisError(ValueError):
    pass


class DegenerateFitError(AnalysisError):
    pass


@dataclass(frozen=True)
class BetaComponent:
    alpha: float
    beta: float
    weight: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise AnalysisError("beta shape parameters must be positive")
        if not 0.0 <= self.weight <= 1.0:
            raise AnalysisError("weight must lie in [0, 1]")


# declared starting point: noise piled up near zero, broad signal
DEFAULT_NOISE = BetaComponent(1.5, 15.0, 0.75)
DEFAULT_SIGNAL = BetaComponent(2.0, 2.0, 0.25)


def beta_pdf(h, alpha: float, beta: float):
    """Beta density, evaluated in the log domain; zero outside (0, 1)."""
    h = np.asarray(h, dtype=float)
    inside = (h > 0.0) & (h < 1.0)
    out = np.zeros_like(h)
    hv = np.where(inside, h, 0.5)
    log_pdf = (alpha - 1.0) * np.log(hv) + (beta - 1.0) * np.log1p(-hv) - betaln(alpha, beta)
    out = np.where(inside, np.exp(log_pdf), 0.0)
    return out if out.ndim else float(out)


def _log_beta_pdf(h, alpha, beta):
    return (alpha - 1.0) * np.log(h) + (beta - 1.0) * np.log1p(-h) - betaln(alpha, beta)


def _moment_shapes(h, r, floor=1e-9):
    """Weighted method-of-moments alpha, beta for one component."""
    w = r.sum()
    m = float((r * h).sum() / w)
    v = float((r * (h - m) ** 2).sum() / w)
    m = min(max(m, CLIP), 1.0 - CLIP)
    v = max(v, floor)
    common = m * (1.0 - m) / v - 1.0
    common = min(max(common, 1e-2), 2e6)
    alpha = min(max(m * common, 1e-2), 1e6)
    beta = min(max((1.0 - m) * common, 1e-2), 1e6)
    return alpha, beta


def _newton_refine(h, r, alpha, beta):
    """One damped Newton step on the weighted beta log-likelihood."""
    w = r.sum()
    s1 = float((r * np.log(h)).sum() / w)
    s2 = float((r * np.log1p(-h)).sum() / w)
    grad = np.array(
        [s1 - digamma(alpha) + digamma(alpha + beta), s2 - digamma(beta) + digamma(alpha + beta)]
    )
    tri_ab = polygamma(1, alpha + beta)
    hess = np.array(
        [[tri_ab - polygamma(1, alpha), tri_ab], [tri_ab, tri_ab - polygamma(1, beta)]]
    )
    try:
        step = np.linalg.solve(hess, grad)
    except np.linalg.LinAlgError:
        return alpha, beta
    na, nb = alpha - step[0], beta - step[1]
    if na <= 0 or nb <= 0 or not np.isfinite(na) or not np.isfinite(nb):
        return alpha, beta
    return float(na), float(nb)


@dataclass
class MixtureFit:
    noise: BetaComponent
    signal: BetaComponent
    log_likelihood: list[float] = field(default_factory=list)
    n_iterations: int = 0

    def posterior_zero(self, h):
        """P(noise | h), the probability a population value is a zero."""
        h = np.clip(np.asarray(h, dtype=float), CLIP, 1.0 - CLIP)
        ln = np.log(self.noise.weight + 1e-300) + _log_beta_pdf(h, self.noise.alpha, self.noise.beta)
        ls = np.log(self.signal.weight + 1e-300) + _log_beta_pdf(h, self.signal.alpha, self.signal.beta)
        top = np.maximum(ln, ls)
        return np.exp(ln - top) / (np.exp(ln - top) + np.exp(ls - top))


def em_fit(
    populations,
    noise: BetaComponent = DEFAULT_NOISE,
    signal: BetaComponent = DEFAULT_SIGNAL,
    *,
    max_iter: int = 500,
    tol: float = 1e-8,
    newton_refine: bool = False,
) -> MixtureFit:
    """Fit the two-component beta mixture by expectation-maximization.

    The M-step re-estimates weights exactly and shapes by weighted method of
    moments (optionally one Newton polish). The returned log-likelihood
    trace is non-decreasing by construction: an iteration that would lower
    it is rolled back and the fit stops there.
    """
    h = np.clip(np.asarray(populations, dtype=float), CLIP, 1.0 - CLIP)
    if h.size < 4:
        raise AnalysisError("need at least 4 data points")
    if np.ptp(h) < 1e-12:
        raise DegenerateFitError("all data points identical; mixture is unidentifiable")

    comps = [noise, signal]
    trace: list[float] = []

    def loglike(cs):
        mat = np.stack(
            [np.log(c.weight + 1e-300) + _log_beta_pdf(h, c.alpha, c.beta) for c in cs]
        )
        top = mat.max(axis=0)
        return float(np.sum(top + np.log(np.exp(mat - top).sum(axis=0))))

    ll = loglike(comps)
    trace.append(ll)
    iterations = 0
    for _ in range(max_iter):
        mat = np.stack(
            [np.log(c.weight + 1e-300) + _log_beta_pdf(h, c.alpha, c.beta) for c in comps]
        )
        top = mat.max(axis=0)
        resp = np.exp(mat - top)
        resp /= resp.sum(axis=0)

        new = []
        for k, c in enumerate(comps):
            r = resp[k]
            w = float(r.sum() / h.size)
            if w < 1e-6:
                raise DegenerateFitError(f"component {k} captured no weight")
            a, b = _moment_shapes(h, r)
            if newton_refine:
                a, b = _newton_refine(h, r, a, b)
            new.append(BetaComponent(a, b, w))

        new_ll = loglike(new)
        iterations += 1
        if new_ll < ll - 1e-12:
            iterations -= 1
            break  # moment update overshot; keep the monotone prefix
        comps = new
        trace.append(new_ll)
        if abs(new_ll - ll) < tol:
            ll = new_ll
            break
        ll = new_ll
    return MixtureFit(comps[0], comps[1], trace, iterations)


@dataclass
class PeakClassification:
    populations: np.ndarray
    posterior_zero: np.ndarray
    labels: list[str]  # "zero" or "peak" per state
    peaks: list[int]
    period: int
    fit: MixtureFit


def classify_and_extract_period(
    populations,
    noise: BetaComponent = DEFAULT_NOISE,
    signal: BetaComponent = DEFAULT_SIGNAL,
) -> PeakClassification:
    """Label each state population as zero or peak and infer the period.

    Peaks are states with posterior zero-probability <= 0.5; the period is
    N divided by the greatest common divisor of the peak indices (a lone
    peak at index 0 means period 1).
    """
    h = np.asarray(populations, dtype=float)
    n_states = h.size
    if n_states & (n_states - 1):
        raise AnalysisError("state count must be a power of two")
    fit = em_fit(h, noise, signal)
    post = fit.posterior_zero(h)
    labels = ["peak" if p <= 0.5 else "zero" for p in post]
    peaks = [i for i, l in enumerate(labels) if l == "peak"]
    if not peaks:
        raise AnalysisError("no peaks detected")
    divisor = reduce(gcd, peaks)  # gcd(0, x) = x; lone zero-index peak -> 0
    if divisor == 0:
        period = 1
    else:
        if n_states % divisor:
            raise AnalysisError(
                f"peak spacing {divisor} does not divide the state count {n_states}"
            )
        period = n_states // divisor
    return PeakClassification(h, post, labels, peaks, period, fit)


def exact_function_period(f: np.ndarray) -> int:
    n = len(f)
    for r in range(1, n + 1):
        if n % r == 0 and all(f[x] == f[(x + r) % n] for x in range(n)):
            return r
    return n


def qpf_theoretical_distribution(f) -> np.ndarray:
    """Output distribution of period finding for a binary truth table.

    Evaluates the double coherent sum directly; when the table is exactly
    r-periodic the off-harmonic entries are checked to vanish, which pins
    the peaks to multiples of N/r.
    """
    f = np.asarray(f, dtype=int)
    if not np.all((f == 0) | (f == 1)):
        raise AnalysisError("truth table must be binary")
    n = len(f)
    x = np.arange(n)
    p = np.empty(n)
    for y in range(n):
        phases = np.exp(2j * np.pi * x * y / n)
        p[y] = (
            abs(phases[f == 0].sum()) ** 2 + abs(phases[f == 1].sum()) ** 2
        ) / n**2
    r = exact_function_period(f)
    stride = n // r
    off = [y for y in range(n) if y % stride]
    if off and max(p[off]) > 1e-12:
        raise AnalysisError("periodic table produced weight off the harmonic grid")
    return p


@dataclass(frozen=True)
class ExpFitResult:
    amplitude: float
    base: float
    offset: float
    base_err: float


def exp_fit(x, y, *, p0=None) -> ExpFitResult:
    """Least-squares fit of y = A * p**x + c.

    Seeds A and c from the endpoints and p from a two-point log ratio.
    Constant data has no identifiable base and is rejected.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 4:
        raise AnalysisError("need at least 4 points")
    if np.ptp(y) < 1e-12:
        raise AnalysisError("constant data: decay base is unidentifiable")
    if p0 is None:
        c0 = y[np.argmax(x)]
        a0 = y[np.argmin(x)] - c0
        if abs(a0) < 1e-12:
            a0 = np.ptp(y)
        order = np.argsort(x)
        x0, x1 = x[order[0]], x[order[min(2, x.size - 1)]]
        y0, y1 = y[order[0]], y[order[min(2, x.size - 1)]]
        ratio = (y1 - c0) / (y0 - c0) if abs(y0 - c0) > 1e-12 else 0.9
        p_seed = abs(ratio) ** (1.0 / (x1 - x0)) if ratio > 0 and x1 != x0 else 0.9
        p0 = [a0, min(max(p_seed, 1e-3), 1.2), c0]

    def model(t, a, p, c):
        return a * np.power(p, t) + c

    try:
        popt, pcov = curve_fit(model, x, y, p0=p0, maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise AnalysisError(f"exponential fit did not converge: {exc}") from exc
    err = float(np.sqrt(pcov[1, 1])) if np.all(np.isfinite(pcov)) else float("nan")
    return ExpFitResult(float(popt[0]), float(popt[1]), float(popt[2]), err)
