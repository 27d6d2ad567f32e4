"""Propensity odds and inverse-propensity-weighted (IPSW) estimators."""

from dataclasses import dataclass

import numpy as np

from survcal.learners import fit_logistic

MAX_WEIGHT = 1e12


@dataclass(frozen=True)
class PropensityModel:
    """Membership models ``Pr(D = S_m | x, D in {S_m, T})`` for each source.

    ``columns`` masks the design columns the logistic fits used (covariates
    that are constant in the fitting data, other than the intercept, are
    dropped). ``priors`` are the source sample fractions ``w_m``.
    """

    models: tuple
    columns: np.ndarray
    priors: np.ndarray
    separated: bool = False
    cap_quantile: float | None = None

    def source_prob(self, X, source=0):
        X = np.asarray(X, dtype=np.float64)[:, self.columns]
        return self.models[source].predict_proba(X)

    def odds(self, X, source=0):
        """``sigma_T(x) / sigma_S(x)`` for one source."""
        X = np.asarray(X, dtype=np.float64)[:, self.columns]
        w = np.exp(-self.models[source].decision_function(X))
        if self.cap_quantile is not None:
            w = np.minimum(w, np.quantile(w, self.cap_quantile))
        return w


def _usable_columns(X):
    const = np.all(X == X[:1], axis=0)
    ones = np.all(X == 1.0, axis=0)
    return ~const | ones


def fit_propensity(source_X, target_X, cap_quantile=None):
    """Logistic membership model of one or more sources against the target.

    ``source_X`` is a matrix (single source) or a list of matrices.
    """
    sources = [source_X] if isinstance(source_X, np.ndarray) and source_X.ndim == 2 else list(source_X)
    target_X = np.asarray(target_X, dtype=np.float64)
    if target_X.shape[0] == 0:
        raise ValueError("target set is empty")
    sources = [np.asarray(s, dtype=np.float64) for s in sources]
    if any(s.shape[0] == 0 for s in sources):
        raise ValueError("source set is empty")
    keep = _usable_columns(np.vstack(sources + [target_X]))
    models = []
    separated = False
    for s in sources:
        X = np.vstack([s, target_X])[:, keep]
        labels = np.concatenate([np.ones(s.shape[0], bool), np.zeros(target_X.shape[0], bool)])
        model = fit_logistic(X, labels)
        separated |= model.separated
        models.append(model)
    sizes = np.asarray([s.shape[0] for s in sources], dtype=np.float64)
    return PropensityModel(tuple(models), keep, sizes / sizes.sum(), separated, cap_quantile)


def _weighted_mean(theta, w):
    theta = np.asarray(theta, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if theta.shape != w.shape:
        raise ValueError("pseudo-observations and weights differ in length")
    if theta.size == 0:
        raise ValueError("no source rows")
    if not np.all(np.isfinite(w)) or np.any(w > MAX_WEIGHT):
        raise OverflowError("propensity weight overflow")
    if np.any(w < 0):
        raise ValueError("negative weights")
    total = w.sum()
    if not total > 0:
        raise ValueError("weights sum to zero")
    return float(np.sum(theta * w) / total)


def ipsw_estimate(theta, X=None, model=None, weights=None):
    """Self-normalised IPSW mean ``sum(theta * w) / sum(w)``.

    Pass either a fitted ``model`` with the source covariates ``X`` or the odds
    ``weights`` directly (e.g. oracle odds).
    """
    if weights is None:
        if model is None or X is None:
            raise ValueError("need either weights or (X, model)")
        weights = model.odds(X)
    return _weighted_mean(theta, weights)


def naive_estimate(theta):
    """Unweighted mean of the source pseudo-observations."""
    return _weighted_mean(theta, np.ones(np.asarray(theta).shape[0]))


def ipsw_subgroup(theta, source_X, source_groups, target_X, target_groups, cap_quantile=None):
    """IPSW with a separate propensity model fitted inside each subgroup.

    Returns ``{group: estimate}`` for every group present among the source rows.
    """
    theta = np.asarray(theta, dtype=np.float64)
    source_X = np.asarray(source_X, dtype=np.float64)
    target_X = np.asarray(target_X, dtype=np.float64)
    source_groups = np.asarray(source_groups)
    target_groups = np.asarray(target_groups)
    out = {}
    for g in np.unique(source_groups):
        s_rows = source_groups == g
        t_rows = target_groups == g
        if not t_rows.any():
            raise ValueError(f"empty target subgroup {g!r}")
        model = fit_propensity(source_X[s_rows], target_X[t_rows], cap_quantile)
        out[g.item() if hasattr(g, "item") else g] = ipsw_estimate(
            theta[s_rows], source_X[s_rows], model)
    return out


def multisource_weights(sources_X, model):
    """``w_m * sigma_T / sigma_{S_m}`` for the rows of each source, concatenated."""
    return np.concatenate([
        model.priors[m] * model.odds(X, source=m) for m, X in enumerate(sources_X)
    ])


def ipsw_multisource(thetas, sources_X, target_X, model=None, cap_quantile=None):
    """Combined IPSW over several source domains against one target.

    ``thetas`` and ``sources_X`` are parallel lists, one entry per source.
    """
    if len(sources_X) < 2 or len(thetas) != len(sources_X):
        raise ValueError("need at least two sources with matching pseudo-observations")
    sources_X = [np.asarray(s, dtype=np.float64) for s in sources_X]
    if any(s.shape[0] == 0 for s in sources_X):
        raise ValueError("a source domain has no rows")
    if model is None:
        model = fit_propensity(sources_X, target_X, cap_quantile)
    w = multisource_weights(sources_X, model)
    return _weighted_mean(np.concatenate([np.asarray(t, dtype=np.float64) for t in thetas]), w)
