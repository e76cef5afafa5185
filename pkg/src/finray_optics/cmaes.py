"""Covariance Matrix Adaptation Evolution Strategy (maximisation).

Sampling draws ``x = mean + sigma * sqrt(C) z`` with ``z ~ N(0, I)``; the best
``parents`` candidates drive weighted recombination of the mean, the two
evolution paths, cumulative step-size adaptation and the rank-one / rank-mu
covariance update. ``sqrt(C)`` is the symmetric square root, recomputed by
eigendecomposition every generation.

The state is immutable: :func:`tell` returns a new :class:`CmaesState`.
Random draws for generation ``g`` come from a generator seeded with
``(rng_seed, g)``, so :func:`ask` is a pure function of the state.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

log = logging.getLogger(__name__)


class NonFiniteObjective(ArithmeticError):
    def __init__(self, x: np.ndarray, value):
        self.x = np.array(x, copy=True)
        self.value = value
        super().__init__(f"objective returned {value!r} at candidate {np.array2string(self.x, precision=17)}")


@dataclass(frozen=True)
class CmaesHyperparams:
    population: int
    parents: int
    weights: Tuple[float, ...]
    c_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    c_l: float
    d_sigma: float
    chi_n: float

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not 1 <= self.parents <= self.population:
            raise ValueError("need 1 <= parents <= population")
        if len(self.weights) != self.parents:
            raise ValueError("one weight per parent")
        w = self.weights
        if any(x <= 0 for x in w) or any(b > a for a, b in zip(w, w[1:])):
            raise ValueError("weights must be positive and non-increasing")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        for name in ("c_sigma", "c_c", "c_1", "c_mu", "c_l"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if self.c_1 + self.c_mu > 1:
            raise ValueError("c_1 + c_mu must not exceed 1")
        if not (self.d_sigma > 0 and self.chi_n > 0):
            raise ValueError("d_sigma and chi_n must be positive")

    @property
    def mu_eff(self) -> float:
        """Variance-effective selection mass, 1 / sum(w_i^2)."""
        return 1.0 / math.fsum(w * w for w in self.weights)


def expected_norm(dim: int) -> float:
    """Approximation of E||N(0, I_dim)||."""
    return math.sqrt(dim) * (1.0 - 1.0 / (4.0 * dim) + 1.0 / (21.0 * dim * dim))


def default_hyperparams(dim: int, population: Optional[int] = None,
                        parents: Optional[int] = None) -> CmaesHyperparams:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    lam = population if population is not None else 4 + int(math.floor(3.0 * math.log(dim)))
    if lam < 2:
        raise ValueError("population must be >= 2")
    mu = parents if parents is not None else lam // 2
    raw = [math.log((lam + 1) / 2.0) - math.log(i) for i in range(1, mu + 1)]
    if raw[-1] <= 0:  # only possible when parents was forced above lam / 2
        raw = [math.log(mu + 0.5) - math.log(i) for i in range(1, mu + 1)]
    total = math.fsum(raw)
    weights = tuple(r / total for r in raw)
    mu_eff = 1.0 / math.fsum(w * w for w in weights)
    n = float(dim)

    c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0)
    d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma
    c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n)
    c_1 = 2.0 / ((n + 1.3) ** 2 + mu_eff)
    c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) ** 2 + mu_eff))
    c_mu = max(c_mu, 1e-12)
    return CmaesHyperparams(lam, mu, weights, c_sigma, c_c, c_1, c_mu, 1.0, d_sigma, expected_norm(dim))


@dataclass(frozen=True, eq=False)
class CmaesState:
    mean: np.ndarray
    sigma: float
    cov: np.ndarray
    path_sigma: np.ndarray
    path_c: np.ndarray
    generation: int
    rng_seed: int

    def __post_init__(self):
        for name in ("mean", "cov", "path_sigma", "path_c"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        n = self.mean.shape[0]
        if self.cov.shape != (n, n) or self.path_sigma.shape != (n,) or self.path_c.shape != (n,):
            raise ValueError("state dimensions are inconsistent")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def initial(cls, x0: Sequence[float], sigma0: float, seed: int) -> "CmaesState":
        x0 = np.asarray(x0, dtype=float)
        n = x0.shape[0]
        return cls(x0, float(sigma0), np.eye(n), np.zeros(n), np.zeros(n), 0, int(seed))


@dataclass(frozen=True, eq=False)
class Candidate:
    x: np.ndarray
    z: np.ndarray
    fitness: float = math.nan
    index: int = 0

    def with_fitness(self, f: float) -> "Candidate":
        return replace(self, fitness=float(f))


def sqrt_cov(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root of a positive-definite matrix."""
    vals, vecs = np.linalg.eigh(cov)
    if not np.all(np.isfinite(vals)) or vals.min() <= 0:
        raise np.linalg.LinAlgError(f"covariance is not positive definite (min eigenvalue {vals.min()!r})")
    return (vecs * np.sqrt(vals)) @ vecs.T


def ask(state: CmaesState, hp: CmaesHyperparams) -> List[Candidate]:
    rng = np.random.default_rng([state.rng_seed, state.generation])
    z = rng.standard_normal((hp.population, state.dim))
    y = z @ sqrt_cov(state.cov).T
    x = state.mean + state.sigma * y
    return [Candidate(x[i], z[i], math.nan, i) for i in range(hp.population)]


def rank(candidates: Sequence[Candidate]) -> List[Candidate]:
    """Sort by fitness descending, ties broken by candidate index."""
    return sorted(candidates, key=lambda c: (-c.fitness, c.index))


def step_size_update(sigma: float, path_sigma_norm: float, hp: CmaesHyperparams) -> float:
    return sigma * math.exp((hp.c_sigma / hp.d_sigma) * (path_sigma_norm / hp.chi_n - 1.0))


def _repair(cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    vals = np.linalg.eigvalsh(cov)
    floor = 1e-14 * float(np.trace(cov))
    if vals.min() <= floor:
        cov = cov + (floor - vals.min()) * np.eye(cov.shape[0])
    return cov


def tell(state: CmaesState, ranked: Sequence[Candidate], hp: CmaesHyperparams) -> CmaesState:
    if len(ranked) != hp.population:
        raise ValueError(f"expected {hp.population} candidates, got {len(ranked)}")
    f = [c.fitness for c in ranked]
    if any(math.isnan(v) for v in f):
        raise ValueError("candidates must carry fitness values")
    if any(b > a for a, b in zip(f, f[1:])):
        raise ValueError("candidates must be sorted by fitness, best (largest) first")

    n = state.dim
    w = np.array(hp.weights)
    mu_eff = hp.mu_eff
    root = sqrt_cov(state.cov)
    z = np.array([c.z for c in ranked[:hp.parents]])
    y = z @ root.T
    delta = w @ y
    zw = w @ z  # = C^{-1/2} delta

    cs, cc = hp.c_sigma, hp.c_c
    ps = (1.0 - cs) * state.path_sigma + math.sqrt(cs * (2.0 - cs) * mu_eff) * zw
    ps_norm = float(np.linalg.norm(ps))
    g = state.generation
    h_sigma = 1.0 if ps_norm / math.sqrt(1.0 - (1.0 - cs) ** (2 * (g + 1))) < (1.4 + 2.0 / (n + 1)) * hp.chi_n else 0.0
    pc = (1.0 - cc) * state.path_c + h_sigma * math.sqrt(cc * (2.0 - cc) * mu_eff) * delta

    mean = state.mean + hp.c_l * state.sigma * delta

    C = state.cov
    rank_one = np.outer(pc, pc) - C
    rank_mu = (y.T * w) @ y - C
    loss = hp.c_1 * cc * (2.0 - cc) * (1.0 - h_sigma)
    C = (1.0 + loss) * C + hp.c_1 * rank_one + hp.c_mu * rank_mu
    C = _repair(C)

    sigma = step_size_update(state.sigma, ps_norm, hp)
    return CmaesState(mean, sigma, C, ps, pc, g + 1, state.rng_seed)


@dataclass(frozen=True)
class StopCriteria:
    max_generations: int = 1000
    target: Optional[float] = None
    sigma_tol: float = 1e-12
    max_evaluations: Optional[int] = None


@dataclass
class RunOutcome:
    best_x: np.ndarray
    best_f: float
    history: List[Tuple[int, float, float]]
    state: CmaesState
    evaluations: int
    stop_reason: str = ""


def run(objective: Callable[[np.ndarray], float], x0: Sequence[float], sigma0: float,
        bounds: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
        stop: StopCriteria = StopCriteria(), *, seed: int = 0,
        hp: Optional[CmaesHyperparams] = None,
        callback: Optional[Callable[[CmaesState, float], None]] = None) -> RunOutcome:
    """Maximise ``objective`` starting from ``x0``.

    ``bounds`` (lower, upper) is only used to insist on a feasible start;
    infeasible candidates are passed to the objective, which is expected to
    penalise them. History rows are ``(generation, best_f, sigma)`` where
    ``sigma`` is the step size the generation was sampled with.
    """
    if not sigma0 > 0:
        raise ValueError("sigma0 must be positive")
    x0 = np.asarray(x0, dtype=float)
    if bounds is not None:
        lo, hi = (np.asarray(b, dtype=float) for b in bounds)
        if np.any(x0 < lo) or np.any(x0 > hi):
            raise ValueError("x0 lies outside the bounds")
    hp = hp or default_hyperparams(x0.shape[0])
    state = CmaesState.initial(x0, sigma0, seed)
    best_x, best_f = x0.copy(), -math.inf
    history: List[Tuple[int, float, float]] = []
    evals = 0
    reason = "max_generations"
    for _ in range(stop.max_generations):
        cands = ask(state, hp)
        scored = []
        for c in cands:
            v = objective(c.x)
            if v is None or not math.isfinite(v):
                raise NonFiniteObjective(c.x, v)
            scored.append(c.with_fitness(v))
        evals += len(scored)
        ranked = rank(scored)
        if ranked[0].fitness > best_f:
            best_f = ranked[0].fitness
            best_x = np.array(ranked[0].x, copy=True)
        sampled_sigma = state.sigma
        state = tell(state, ranked, hp)
        history.append((state.generation, best_f, sampled_sigma))
        if callback is not None:
            callback(state, best_f)
        if stop.target is not None and best_f >= stop.target:
            reason = "target"
            break
        if state.sigma < stop.sigma_tol:
            reason = "sigma_tol"
            break
        if stop.max_evaluations is not None and evals >= stop.max_evaluations:
            reason = "max_evaluations"
            break
    log.debug("cma-es stopped after %d generations (%s), best %r", state.generation, reason, best_f)
    return RunOutcome(best_x, best_f, history, state, evals, reason)
