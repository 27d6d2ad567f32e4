"""Synthetic covariate-shift survival cohorts.

Every random column is drawn from its own Philox stream keyed by
``(seed, stream id)``, so adding a column or scenario never perturbs the
draws of another.
"""

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from survcal.data import TARGET, SurvivalDataset

STREAMS = {"covariates": 0, "failure": 1, "censoring": 2, "domain": 3, "split": 4, "forest": 5}

WEIBULL_ETA = 1e-4
WEIBULL_NU = 3.0
FAILURE_COEF = (0.0, 2.0, 1.0, -1.2, 0.8)
CENSOR_ETA = 1e-4
CENSOR_NU = 2.7
CENSOR_COEF = (1.0, 0.5, -0.5, -0.5)
# alpha_c has four entries for a five-column design; applied to these columns
CENSOR_COLUMNS = (0, 2, 3, 4)
OMEGA_1 = (0.0, 0.5, 0.45, -0.9, -0.7)
OMEGA_2 = (0.0, 0.4, 0.9, -0.5, -0.9)


def stream(seed, name):
    """Independent generator for one named column stream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[name],))
    return np.random.Generator(np.random.Philox(ss))


def gen_covariates(n, seed):
    """``(1, X1, X2, X3, X4)``: bivariate normal pair (var 2, corr 1/4), then
    ``X3 ~ Bernoulli(0.4)`` and ``X4 | X3 ~ Bernoulli(0.1 X3 + 0.2)``."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = stream(seed, "covariates")
    chol = np.linalg.cholesky(np.array([[2.0, 0.5], [0.5, 2.0]]))
    z = rng.standard_normal((n, 2)) @ chol.T
    x3 = (rng.random(n) < 0.4).astype(np.float64)
    x4 = (rng.random(n) < 0.1 * x3 + 0.2).astype(np.float64)
    return np.column_stack([np.ones(n), z, x3, x4])


def _linear(X, coef, columns=None):
    coef = np.asarray(coef, dtype=np.float64)
    cols = np.arange(coef.shape[0]) if columns is None else np.asarray(columns)
    if cols.shape[0] != coef.shape[0]:
        raise ValueError("coefficient and column counts differ")
    return X[:, cols] @ coef


def _weibull_inverse(lp, eta, nu, rng):
    if not (eta > 0 and nu > 0):
        raise ValueError("Weibull parameters must be positive")
    u = rng.random(lp.shape[0])
    return (-np.log1p(-u) / (eta * np.exp(lp))) ** (1.0 / nu)


def gen_failure_weibull(X, eta=WEIBULL_ETA, nu=WEIBULL_NU, coef=FAILURE_COEF, seed=0):
    """Inverse transform of ``Lambda(t|x) = eta t^nu exp(x'coef)``."""
    X = np.asarray(X, dtype=np.float64)
    return _weibull_inverse(_linear(X, coef), eta, nu, stream(seed, "failure"))


def gen_failure_aft(X, coef=FAILURE_COEF, seed=0, mu0=3.5, sigma2=0.64):
    """Log-normal AFT: ``log T ~ N(mu0 - x'coef, sigma2)``."""
    X = np.asarray(X, dtype=np.float64)
    z = stream(seed, "failure").standard_normal(X.shape[0])
    return np.exp(mu0 - _linear(X, coef) + np.sqrt(sigma2) * z)


@dataclass(frozen=True)
class HazardSpec:
    kind: str = "weibull_ph"
    eta: float = WEIBULL_ETA
    nu: float = WEIBULL_NU
    coef: tuple = FAILURE_COEF
    mu0: float = 3.5
    sigma2: float = 0.64

    def __post_init__(self):
        if self.kind not in ("weibull_ph", "lognormal_aft"):
            raise ValueError(f"unknown hazard kind {self.kind!r}")
        if self.kind == "weibull_ph" and not (self.eta > 0 and self.nu > 0):
            raise ValueError("Weibull parameters must be positive")


@dataclass(frozen=True)
class CensoringSpec:
    kind: str = "uniform"
    low: float = 0.0
    high: float = 120.0
    eta: float = CENSOR_ETA
    nu: float = CENSOR_NU
    coef: tuple = CENSOR_COEF
    columns: tuple = CENSOR_COLUMNS

    def __post_init__(self):
        if self.kind not in ("uniform", "weibull"):
            raise ValueError(f"unknown censoring kind {self.kind!r}")
        if self.kind == "uniform" and not self.high > self.low:
            raise ValueError("uniform censoring needs high > low")
        if self.kind == "weibull" and not (self.eta > 0 and self.nu > 0):
            raise ValueError("Weibull parameters must be positive")


def gen_censoring(X, spec, seed=0):
    """Censoring times: uniform, or covariate-dependent Weibull via inverse transform."""
    X = np.asarray(X, dtype=np.float64)
    rng = stream(seed, "censoring")
    if spec.kind == "uniform":
        return rng.uniform(spec.low, spec.high, X.shape[0])
    return _weibull_inverse(_linear(X, spec.coef, spec.columns), spec.eta, spec.nu, rng)


def membership_probs(X, omegas, q, mechanism="softmax"):
    """Domain probabilities, columns ``(source_1, ..., source_J, target)``.

    ``"softmax"``: source ``j`` has log-odds ``q * x'omega_j`` against the
    target, the only joint law matching every pairwise odds.
    ``"pairwise"``: each unit falls in one of ``J`` equally likely
    source/target pairs and joins source ``j`` with probability
    ``logistic(q * x'omega_j)``; the targets of all pairs are pooled.
    """
    X = np.asarray(X, dtype=np.float64)
    z = np.column_stack([q * (X @ np.asarray(w, dtype=np.float64)) for w in omegas])
    if mechanism == "softmax":
        logits = np.column_stack([z, np.zeros(X.shape[0])])
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        return p / p.sum(axis=1, keepdims=True)
    if mechanism == "pairwise":
        src = 0.5 * (1.0 + np.tanh(0.5 * z)) / z.shape[1]
        return np.column_stack([src, 1.0 - src.sum(axis=1)])
    raise ValueError(f"unknown assignment mechanism {mechanism!r}")


def source_labels(n_sources):
    return ["source"] if n_sources == 1 else [f"source{j + 1}" for j in range(n_sources)]


def assign_domains(X, omegas, q=1.0, seed=0, mechanism="softmax"):
    """Draw domain labels; returns ``(labels, probs)`` with probs as in :func:`membership_probs`."""
    if len(omegas) < 1:
        raise ValueError("need at least one source omega")
    p = membership_probs(X, omegas, q, mechanism)
    u = stream(seed, "domain").random(p.shape[0])
    idx = (u[:, None] >= np.cumsum(p, axis=1)[:, :-1]).sum(axis=1)
    names = np.asarray(source_labels(len(omegas)) + [TARGET], dtype=object)
    return names[idx], p


@dataclass(frozen=True)
class ScenarioSpec:
    """Data-generating settings for one synthetic scenario."""

    name: str = "ph_indep"
    n_total: int = 1000
    hazard: HazardSpec = field(default_factory=HazardSpec)
    censoring: CensoringSpec = field(default_factory=CensoringSpec)
    omegas: tuple = (OMEGA_1,)
    q: float = 1.0
    assignment: str = "softmax"

    def __post_init__(self):
        if self.n_total < 1:
            raise ValueError("n_total must be positive")
        if len(self.omegas) < 1:
            raise ValueError("need at least one source omega")
        if self.assignment not in ("softmax", "pairwise"):
            raise ValueError(f"unknown assignment mechanism {self.assignment!r}")

    @property
    def nonstandard_q(self):
        return self.q not in (1, 2, 3)

    def to_dict(self):
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        hazard = HazardSpec(**{k: tuple(v) if isinstance(v, list) else v
                               for k, v in d.pop("hazard", {}).items()})
        censoring = CensoringSpec(**{k: tuple(v) if isinstance(v, list) else v
                                     for k, v in d.pop("censoring", {}).items()})
        if "omegas" in d:
            d["omegas"] = tuple(tuple(float(x) for x in w) for w in d["omegas"])
        return cls(hazard=hazard, censoring=censoring, **d)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class CohortTruth:
    """Latent quantities kept away from estimators; for oracle checks only."""

    failure_time: np.ndarray
    censoring_time: np.ndarray
    membership: np.ndarray


@dataclass(frozen=True)
class GeneratedCohort:
    dataset: SurvivalDataset
    truth: CohortTruth


def gen_failure(X, hazard, seed):
    if hazard.kind == "weibull_ph":
        return gen_failure_weibull(X, hazard.eta, hazard.nu, hazard.coef, seed)
    return gen_failure_aft(X, hazard.coef, seed, hazard.mu0, hazard.sigma2)


def true_survival(X, hazard, t):
    """``Pr(T >= t | x)`` under the generating model."""
    X = np.asarray(X, dtype=np.float64)
    lp = _linear(X, hazard.coef)
    if hazard.kind == "weibull_ph":
        return np.exp(-hazard.eta * t ** hazard.nu * np.exp(lp))
    z = (math.log(t) - (hazard.mu0 - lp)) / math.sqrt(hazard.sigma2)
    return 0.5 * (1.0 - np.vectorize(math.erf)(z / math.sqrt(2.0)))


def generate_cohort(spec, seed):
    """Draw one cohort; the observed view carries no latent columns."""
    X = gen_covariates(spec.n_total, seed)
    T = gen_failure(X, spec.hazard, seed)
    C = gen_censoring(X, spec.censoring, seed)
    labels, probs = assign_domains(X, spec.omegas, spec.q, seed, spec.assignment)
    data = SurvivalDataset(X, np.minimum(T, C), T <= C, labels)
    return GeneratedCohort(data, CohortTruth(T, C, probs))


def censoring_strata(X, columns=CENSOR_COLUMNS, n_bins=4):
    """Finite-support stratum labels for stratified censoring estimation.

    Binary columns are used as they are; continuous columns are cut at their
    sample quartiles (``n_bins`` bins). The intercept is ignored.
    """
    X = np.asarray(X, dtype=np.float64)
    parts = []
    for c in columns:
        col = X[:, c]
        vals = np.unique(col)
        if vals.size == 1:
            continue
        if vals.size <= 2:
            parts.append(col.astype(int).astype(str))
        else:
            edges = np.quantile(col, np.linspace(0, 1, n_bins + 1)[1:-1])
            parts.append(np.searchsorted(edges, col, side="right").astype(str))
    if not parts:
        return np.full(X.shape[0], "0", dtype=object)
    out = parts[0].astype(object)
    for p in parts[1:]:
        out = out + "|" + p
    return out
