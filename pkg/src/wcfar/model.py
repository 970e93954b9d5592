"""Hierarchical Bayesian generative model of non-target scores.

Per target, a location m, a precision multiplier lam and a shared score
variance sigma_sq are drawn once; each impostor pairing then draws its own
score mean mu around m, and scores are Gaussian around mu:

    m        ~ Normal(mu0, sigma0_sq)
    lam      ~ Gamma(alpha_lambda, beta_lambda)
    sigma_sq ~ InvGamma(a_sigma, b_sigma)
    mu_j     ~ Normal(m, sigma_sq / lam)        j = 1..N, sharing (m, lam, sigma_sq)
    s_[j,l]  ~ Normal(mu_j, sigma_sq)           l = 1..L

Because all N candidate pairings of a target share one sigma_sq, the
closest-of-N false alarm rate admits two estimators: a sampling one that
scores every candidate set and keeps the highest sample mean, and a
closed-form one that keeps the highest latent mean mu* and accumulates the
exact Gaussian tail 1 - Phi(tau; mu*, sigma_sq).  The two agree up to the
finite-sample selection noise of the former.

Each outer iteration draws from its own child stream in the fixed order
(m, lam, sigma_sq, mu_1..mu_N, scores), so enlarging N keeps a common
prefix of draws and the closed-form estimate is non-decreasing in N
pointwise for a fixed seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import special as sp

from .estimators import EstimateWithCI, EstimatorConfig, confidence_interval
from .streams import RngStream, as_generator

_JSON_FIELDS = ("mu0", "sigma0_sq", "a_sigma", "b_sigma", "alpha_lambda", "beta_lambda")

# default scores per candidate set, matching an 18x18 utterance-pair grid
DEFAULT_SCORES_PER_PAIR = 324


@dataclass(frozen=True)
class Hyperparameters:
    """The six scalars that fully specify the generative model."""

    mu0: float
    sigma0_sq: float
    a_sigma: float
    b_sigma: float
    alpha_lambda: float
    beta_lambda: float

    def __post_init__(self):
        if not math.isfinite(self.mu0):
            raise ValueError(f"mu0 must be finite, got {self.mu0}")
        for name in _JSON_FIELDS[1:]:
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value}")

    def to_json(self) -> dict:
        return {name: getattr(self, name) for name in _JSON_FIELDS}

    @classmethod
    def from_json(cls, obj: "dict | str") -> "Hyperparameters":
        if isinstance(obj, str):
            obj = json.loads(obj)
        missing = [k for k in _JSON_FIELDS if k not in obj]
        if missing:
            raise ValueError(f"hyperparameter JSON missing key(s) {missing}")
        return cls(**{k: float(obj[k]) for k in _JSON_FIELDS})

    def replace(self, **overrides) -> "Hyperparameters":
        unknown = set(overrides) - set(_JSON_FIELDS)
        if unknown:
            raise ValueError(f"unknown hyperparameter(s) {sorted(unknown)}")
        merged = self.to_json()
        merged.update(overrides)
        return Hyperparameters(**merged)


@dataclass(frozen=True)
class TargetDraw:
    """Target-level latents shared by every candidate impostor pairing."""

    m: float
    lam: float
    sigma_sq: float

    def __post_init__(self):
        if not (self.lam > 0 and self.sigma_sq > 0):
            raise ValueError(f"lam and sigma_sq must be positive, got {self.lam}, {self.sigma_sq}")


@dataclass(frozen=True)
class PairDraw:
    """Pair-level latent: the conditional mean of one pairing's scores."""

    mu: float

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")


def sample_target(h: Hyperparameters, rng) -> TargetDraw:
    """Draw (m, lam, sigma_sq) independently from their priors."""
    g = as_generator(rng)
    m = g.normal(h.mu0, math.sqrt(h.sigma0_sq))
    lam = g.gamma(h.alpha_lambda, scale=1.0 / h.beta_lambda)
    sigma_sq = 1.0 / g.gamma(h.a_sigma, scale=1.0 / h.b_sigma)
    return TargetDraw(m=float(m), lam=float(lam), sigma_sq=float(sigma_sq))


def sample_pair(t: TargetDraw, rng) -> PairDraw:
    """Draw one pairing's score mean around the target location."""
    g = as_generator(rng)
    return PairDraw(mu=float(g.normal(t.m, math.sqrt(t.sigma_sq / t.lam))))


def sample_scores(t: TargetDraw, p: PairDraw, count: int, rng) -> np.ndarray:
    """Draw `count` i.i.d. scores for one pairing."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    g = as_generator(rng)
    return g.normal(p.mu, math.sqrt(t.sigma_sq), size=count)


def _pair_means(t: TargetDraw, n: int, g: np.random.Generator) -> np.ndarray:
    return g.normal(t.m, math.sqrt(t.sigma_sq / t.lam), size=n)


def predict_pfa_sampling(
    h: Hyperparameters,
    tau: float,
    cfg: EstimatorConfig,
    scores_per_pair: int = DEFAULT_SCORES_PER_PAIR,
    level: float = 0.99,
    injected_draws: Iterable[tuple[TargetDraw, Sequence[float], np.ndarray | None]] | None = None,
) -> EstimateWithCI:
    """Closest-of-N false alarm rate by explicit score simulation.

    Per outer iteration: one target draw, `cfg.n_impostors` pair means
    sharing it, one score set of `scores_per_pair` per pair; the set with
    the highest sample mean is kept and its fraction of scores above `tau`
    recorded.  `injected_draws` substitutes an explicit sequence of
    (target, pair means, optional score matrix) for the random draws, for
    deterministic micro-examples.
    """
    if math.isnan(tau):
        raise ValueError("tau must not be NaN")
    if scores_per_pair < 1:
        raise ValueError(f"scores_per_pair must be >= 1, got {scores_per_pair}")
    n = cfg.n_impostors
    if injected_draws is not None:
        values = []
        for _target, _mus, score_sets in injected_draws:
            if score_sets is None:
                raise ValueError("sampling predictor needs score sets in injected draws")
            scores = np.asarray(score_sets, dtype=float)
            k = int(np.argmax(scores.mean(axis=1)))
            values.append(float(np.mean(scores[k] > tau)))
        values = np.asarray(values)
        return _predict_estimate(values, len(values), n, tau, level)

    root = RngStream(cfg.seed)
    values = np.empty(cfg.t_outer)
    scores = np.empty((n, scores_per_pair))
    for t in range(cfg.t_outer):
        g = root.child(t).generator()
        target = sample_target(h, g)
        mus = _pair_means(target, n, g)
        g.standard_normal(out=scores)
        scores *= math.sqrt(target.sigma_sq)
        scores += mus[:, None]
        k = int(np.argmax(scores.mean(axis=1)))
        values[t] = np.mean(scores[k] > tau)
    return _predict_estimate(values, cfg.t_outer, n, tau, level)


def predict_pfa_closed_form(
    h: Hyperparameters,
    tau: float,
    cfg: EstimatorConfig,
    scores_per_pair: int = DEFAULT_SCORES_PER_PAIR,
    level: float = 0.99,
    injected_draws: Iterable[tuple[TargetDraw, Sequence[float]]] | None = None,
) -> EstimateWithCI:
    """Closest-of-N false alarm rate without simulating scores.

    Selection is by the largest latent pair mean mu*, and each iteration
    contributes the exact Gaussian tail mass above `tau` for that mean and
    the target's shared variance.  `scores_per_pair` is accepted for
    signature parity with the sampling predictor and does not enter the
    estimate.
    """
    del scores_per_pair
    if math.isnan(tau):
        raise ValueError("tau must not be NaN")
    n = cfg.n_impostors
    if injected_draws is not None:
        values = []
        for target, mus in injected_draws:
            mu_star = float(np.max(np.asarray(mus, dtype=float)))
            values.append(_gaussian_tail(tau, mu_star, target.sigma_sq))
        values = np.asarray(values)
        return _predict_estimate(values, len(values), n, tau, level)

    root = RngStream(cfg.seed)
    values = np.empty(cfg.t_outer)
    for t in range(cfg.t_outer):
        g = root.child(t).generator()
        target = sample_target(h, g)
        mu_star = float(np.max(_pair_means(target, n, g)))
        values[t] = _gaussian_tail(tau, mu_star, target.sigma_sq)
    return _predict_estimate(values, cfg.t_outer, n, tau, level)


def _gaussian_tail(tau: float, mu: float, sigma_sq: float) -> float:
    """P(score > tau) for a Normal(mu, sigma_sq) score; exact at tau = +-inf."""
    if math.isinf(tau):
        return 0.0 if tau > 0 else 1.0
    return float(sp.ndtr((mu - tau) / math.sqrt(sigma_sq)))


def _predict_estimate(values: np.ndarray, n_outer: int, n_impostors: int, tau: float, level: float):
    value = float(values.mean())
    low, high = confidence_interval(values, level) if values.size >= 2 else (value, value)
    return EstimateWithCI(
        value=value,
        ci_low=low,
        ci_high=high,
        n_outer=n_outer,
        n_impostors=n_impostors,
        tau=tau,
    )


def marginal_score_samples(h: Hyperparameters, count: int, rng) -> np.ndarray:
    """Scores from the full hierarchy, one fresh target and pairing each.

    The marginal law is a symmetric variance mixture of Gaussians centred
    at mu0: heavier-tailed than a single Gaussian, but with zero skewness.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    g = as_generator(rng)
    m = g.normal(h.mu0, math.sqrt(h.sigma0_sq), size=count)
    lam = g.gamma(h.alpha_lambda, scale=1.0 / h.beta_lambda, size=count)
    sigma_sq = 1.0 / g.gamma(h.a_sigma, scale=1.0 / h.b_sigma, size=count)
    mu = g.normal(m, np.sqrt(sigma_sq / lam))
    return g.normal(mu, np.sqrt(sigma_sq))
