"""Distance distributions for trigger pairs and their maximum-likelihood fits.

The family is built from the discrete exponential (geometric) law
``p_mu(k) = (1 - e^-mu) e^(-mu k)``; its two-stage convolution (a word
has to clear an exclusion "queue" before the ordinary decay starts); and
a mixture of the two-stage law with a uniform floor over the window.

Fitted models live on the finite support ``{0, ..., N-1}``.  The
two-stage component is renormalized over that support, and the EM
updates account for the truncation by treating draws that would land
beyond the window as extra missing data, which keeps the closed-form
M-step and the monotone likelihood guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

MU_MIN, MU_MAX = 1e-6, 50.0
ALPHA_MIN, ALPHA_MAX = 1e-6, 1 - 1e-6
LIMIT_GAP = 1e-9  # |a - b| below which the equal-rate branch is used


class ParameterError(ValueError):
    pass


class DegenerateHistogram(ValueError):
    pass


@dataclass(frozen=True)
class GeomParam:
    mu: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ParameterError(f"decay rate must be finite and positive, got {self.mu}")


@dataclass(frozen=True)
class TwoStageParams:
    mu1: float
    mu2: float

    def __post_init__(self):
        for mu in (self.mu1, self.mu2):
            if not (math.isfinite(mu) and mu > 0):
                raise ParameterError(f"stage rates must be finite and positive, got {mu}")

    def canonical(self) -> "TwoStageParams":
        return self if self.mu1 >= self.mu2 else TwoStageParams(self.mu2, self.mu1)


@dataclass(frozen=True)
class MixtureParams:
    mu1: float
    mu2: float
    alpha: float
    N: int = 400

    def __post_init__(self):
        TwoStageParams(self.mu1, self.mu2)
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.N < 1:
            raise ParameterError("support size N must be >= 1")

    @property
    def two_stage(self) -> TwoStageParams:
        return TwoStageParams(self.mu1, self.mu2)

    def canonical(self) -> "MixtureParams":
        ts = self.two_stage.canonical()
        return replace(self, mu1=ts.mu1, mu2=ts.mu2)

    def pmf(self) -> np.ndarray:
        return mixture_pmf(self, np.arange(self.N))


@dataclass
class FitReport:
    params: MixtureParams
    trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    @property
    def log_likelihood(self) -> float:
        return self.trace[-1]

    def save(self, path: str | Path, label: str = "", provenance: str | None = None) -> None:
        p = self.params
        lines = [f"# lexdist fit v1 {label}".rstrip()] + ([f"# {provenance}"] if provenance else []) + [
                 f"mu1={float(p.mu1)!r}", f"mu2={float(p.mu2)!r}", f"alpha={float(p.alpha)!r}", f"N={p.N}",
                 f"loglik={float(self.log_likelihood)!r}", f"iterations={self.iterations}",
                 f"converged={str(self.converged).lower()}",
                 "trace=" + ",".join(repr(float(x)) for x in self.trace)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FitReport":
        kv, where = {}, {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            kv[k.strip()] = v.strip()
            where[k.strip()] = lineno
        key = None
        try:
            key = "mu1"
            mu1 = float(kv[key])
            key = "mu2"
            mu2 = float(kv[key])
            key = "alpha"
            alpha = float(kv[key])
            key = "N"
            N = int(kv[key])
            key = "trace" if "trace" in kv else "loglik"
            trace = [float(x) for x in kv[key].split(",") if x]
            key = "iterations"
            iterations = int(kv[key])
            key = "converged"
            if kv[key] not in ("true", "false"):
                raise ValueError
        except KeyError:
            raise ParameterError(f"{path}: missing key {key!r}") from None
        except ValueError:
            raise ParameterError(f"{path}:{where[key]}: bad value for {key!r}") from None
        try:
            params = MixtureParams(mu1, mu2, alpha, N)
        except ParameterError as exc:
            raise ParameterError(f"{path}: {exc}") from None
        return cls(params, trace, iterations, kv["converged"] == "true")


# probability mass functions ------------------------------------------------

def _rate(mu: float) -> float:
    if not (math.isfinite(mu) and mu > 0):
        raise ParameterError(f"decay rate must be finite and positive, got {mu}")
    return float(mu)


def _ks(k) -> np.ndarray:
    k = np.asarray(k)
    if np.any(k < 0):
        raise ParameterError("k must be non-negative")
    return k.astype(float)


def geom_pmf(mu: float, k):
    mu = _rate(mu)
    out = -math.expm1(-mu) * np.exp(-mu * _ks(k))
    return out if out.ndim else float(out)


def two_stage_pmf(params: TwoStageParams, k):
    """Convolution of two geometric laws, evaluated in closed form.

    With ``a = e^-mu1`` and ``b = e^-mu2`` this is
    ``(1-a)(1-b)(a^(k+1) - b^(k+1))/(a - b)``; the ratio is rewritten with
    ``expm1`` so it stays accurate as ``a`` approaches ``b``.
    """
    ts = params.canonical()
    mu1, mu2 = ts.mu1, ts.mu2  # mu1 >= mu2, so x <= 0 below and nothing overflows
    kk = _ks(k)
    c = math.expm1(-mu1) * math.expm1(-mu2)
    a, b = math.exp(-mu1), math.exp(-mu2)
    if abs(a - b) < LIMIT_GAP:
        m = 0.5 * (mu1 + mu2)
        out = c * (kk + 1) * np.exp(-m * kk)
    else:
        x = mu2 - mu1
        with np.errstate(over="ignore"):
            out = c * np.exp(-mu2 * kk) * np.expm1(x * (kk + 1)) / math.expm1(x)
    return out if out.ndim else float(out)


def _two_stage_support(ts: TwoStageParams, N: int) -> np.ndarray:
    p = two_stage_pmf(ts, np.arange(N))
    return p / p.sum()


def mixture_pmf(params: MixtureParams, k):
    """``(1-alpha) * truncated two-stage + alpha / N`` on ``{0..N-1}``."""
    kk = np.asarray(k)
    if np.any(kk < 0) or np.any(kk >= params.N):
        raise ParameterError(f"k must lie in [0, {params.N})")
    full = (1 - params.alpha) * _two_stage_support(params.two_stage, params.N) + params.alpha / params.N
    out = full[kk.astype(int)]
    return out if out.ndim else float(out)


# posterior of the hidden first-stage duration -------------------------------

_SERIES = (1 / 12, -1 / 720, 1 / 30240, -1 / 1209600, 1 / 47900160)


def posterior_mean_j(params: TwoStageParams, k):
    """E[j | k]: expected time spent in the first stage given total ``k``.

    The posterior is ``p(j|k) ~ r^j`` on ``0..k`` with ``r = e^(mu2-mu1)``,
    so its mean is ``1/expm1(d) - (k+1)/expm1((k+1) d)`` with
    ``d = mu1 - mu2``.  Small ``(k+1) d`` uses the Bernoulli series of
    that difference, which avoids the cancellation between its terms.
    """
    swapped = params.mu1 < params.mu2
    ts = params.canonical()
    d = ts.mu1 - ts.mu2
    kk = _ks(k)
    n = kk + 1
    if abs(math.exp(-ts.mu1) - math.exp(-ts.mu2)) < LIMIT_GAP:
        e = kk / 2 - d * (n * n - 1) / 12
    else:
        y = n * d
        small = y < 0.2
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            direct = 1 / math.expm1(d) - n / np.expm1(y)
        series = kk / 2
        for i, c in enumerate(_SERIES, 1):
            series = series + c * d ** (2 * i - 1) * (1 - n ** (2 * i))
        e = np.where(small, series, direct)
    e = np.clip(e, 0, kk)
    if swapped:
        e = kk - e
    return e if np.ndim(e) else float(e)


# likelihood and estimation -------------------------------------------------

def _empirical(hist) -> np.ndarray:
    counts = np.asarray(getattr(hist, "counts", hist), dtype=float)
    if counts.ndim != 1 or counts.size == 0:
        raise DegenerateHistogram("histogram must be a non-empty 1-d array")
    if np.any(counts < 0):
        raise DegenerateHistogram("histogram counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise DegenerateHistogram("histogram has no mass")
    return counts / total


def mean_k(hist) -> float:
    p = _empirical(hist)
    return float(np.dot(np.arange(p.size), p))


def log_likelihood(params: MixtureParams, hist) -> float:
    """Sum over k of p~(k) log p(k), with p~ the normalized histogram."""
    p = _empirical(hist)
    if p.size != params.N:
        raise ParameterError(f"histogram length {p.size} does not match N={params.N}")
    model = params.pmf()
    mask = p > 0
    if np.any(model[mask] <= 0):
        return -math.inf
    return float(np.dot(p[mask], np.log(model[mask])))


def fit_geom(hist) -> GeomParam:
    """Closed-form ML rate of the (untruncated) geometric law: log(1 + 1/<k>)."""
    m = mean_k(hist)
    if m <= 0:
        raise DegenerateHistogram("all mass at k=0: the geometric ML rate is infinite")
    return GeomParam(math.log1p(1 / m))


def _clamp_mu(mu: float) -> float:
    return min(max(mu, MU_MIN), MU_MAX)


def _two_stage_step(ts: TwoStageParams, w: np.ndarray) -> TwoStageParams:
    """One EM update of the truncated two-stage law for weighted bins ``w``."""
    N = w.size
    k = np.arange(N, dtype=float)
    p = two_stage_pmf(ts, k)
    Z = p.sum()
    ej = posterior_mean_j(ts, k)
    ek = k - ej
    W = w.sum()
    # draws that fell past the window, expected per observed draw
    tail_j = max(1 / math.expm1(ts.mu1) - np.dot(p, ej), 0.0)
    tail_k = max(1 / math.expm1(ts.mu2) - np.dot(p, ek), 0.0)
    n_eff = W / Z
    sj = np.dot(w, ej) + W * tail_j / Z
    sk = np.dot(w, ek) + W * tail_k / Z
    mu1 = _clamp_mu(math.log1p(n_eff / sj)) if sj > 0 else MU_MAX
    mu2 = _clamp_mu(math.log1p(n_eff / sk)) if sk > 0 else MU_MAX
    return TwoStageParams(mu1, mu2)


def default_init(hist, alpha: float = 0.1) -> MixtureParams:
    p = _empirical(hist)
    m = max(mean_k(p), 1e-3)
    return MixtureParams(_clamp_mu(2 / m), _clamp_mu(0.5 / m), alpha, p.size)


def _check_fit_input(p: np.ndarray):
    if np.count_nonzero(p) < 2:
        raise DegenerateHistogram("histogram has fewer than two occupied bins")


def fit_two_stage_em(hist, init: TwoStageParams | None = None, tol: float = 1e-9,
                     max_iter: int = 1000) -> FitReport:
    """EM for the two-stage law alone (reported as a mixture with alpha=0)."""
    p = _empirical(hist)
    _check_fit_input(p)
    N = p.size
    if init is None:
        init = default_init(p).two_stage
    ts = TwoStageParams(_clamp_mu(init.mu1), _clamp_mu(init.mu2))
    params = MixtureParams(ts.mu1, ts.mu2, 0.0, N)
    trace = [log_likelihood(params, p)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        ts = _two_stage_step(ts, p)
        params = MixtureParams(ts.mu1, ts.mu2, 0.0, N)
        trace.append(log_likelihood(params, p))
        if trace[-1] - trace[-2] < tol:
            converged = True
            break
    return FitReport(params.canonical(), trace, it, converged)


def fit_mixture_em(hist, init: MixtureParams | None = None, tol: float = 1e-9,
                   max_iter: int = 1000) -> FitReport:
    """EM for the two-stage plus uniform mixture.

    Each iteration computes the uniform component's responsibility per
    bin, sets alpha to its mean, and takes one two-stage update on the
    remaining weight.
    """
    p = _empirical(hist)
    _check_fit_input(p)
    N = p.size
    if init is None:
        init = default_init(p)
    if init.N != N:
        init = replace(init, N=N)
    ts = TwoStageParams(_clamp_mu(init.mu1), _clamp_mu(init.mu2))
    alpha = min(max(init.alpha, ALPHA_MIN), ALPHA_MAX)
    params = MixtureParams(ts.mu1, ts.mu2, alpha, N)
    trace = [log_likelihood(params, p)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        comp = (1 - alpha) * _two_stage_support(ts, N)
        unif = alpha / N
        r_u = unif / (comp + unif)
        alpha = min(max(float(np.dot(p, r_u)), ALPHA_MIN), ALPHA_MAX)
        ts = _two_stage_step(ts, p * (1 - r_u))
        params = MixtureParams(ts.mu1, ts.mu2, alpha, N)
        trace.append(log_likelihood(params, p))
        if trace[-1] - trace[-2] < tol:
            converged = True
            break
    return FitReport(params.canonical(), trace, it, converged)


def sample_histogram(params: MixtureParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Histogram of ``n`` independent draws from the mixture."""
    return rng.multinomial(n, params.pmf())


def curve_table(hist, params: MixtureParams) -> np.ndarray:
    """Columns k, empirical probability, fitted probability."""
    p = _empirical(hist)
    return np.column_stack([np.arange(p.size), p, params.pmf()])
