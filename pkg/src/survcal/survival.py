"""Kaplan-Meier curves and pseudo-observations for right-censored data."""

import enum
from dataclasses import dataclass

import numpy as np

from survcal._backend import kernels
from survcal._pure import event_table
from survcal.data import SurvivalDataset


class FunctionalKind(enum.Enum):
    """Target functional: survival probability ``1{T >= t}`` or restricted mean ``T ^ t``."""

    SP = "sp"
    RM = "rm"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown functional {value!r}; expected 'sp' or 'rm'") from None


class PseudoMethod(enum.Enum):
    JACKKNIFE = "jackknife"
    IPCW = "ipcw"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown pseudo-observation method {value!r}") from None


@dataclass(frozen=True)
class TargetFunctional:
    kind: FunctionalKind
    horizon: float
    bound: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", FunctionalKind.parse(self.kind))
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.bound is not None and self.horizon > self.bound:
            raise ValueError(f"horizon {self.horizon} exceeds the time bound {self.bound}")

    @property
    def upper(self):
        """Upper end of the functional's range: 1 for SP, the horizon for RM."""
        return 1.0 if self.kind is FunctionalKind.SP else float(self.horizon)

    def transform(self, times):
        return nu(times, self.horizon, self.kind)


def nu(times, t, kind):
    """``1{T >= t}`` for SP, ``min(T, t)`` for RM."""
    times = np.asarray(times, dtype=np.float64)
    if FunctionalKind.parse(kind) is FunctionalKind.SP:
        return (times >= t).astype(np.float64)
    return np.minimum(times, t)


@dataclass(frozen=True)
class StepCurve:
    """Right-continuous piecewise-constant function of time.

    ``values[j]`` holds on ``[knots[j], knots[j+1])``; left of the first knot the
    curve equals ``value_at_zero``.
    """

    knots: np.ndarray
    values: np.ndarray
    value_at_zero: float = 1.0

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if knots.shape != values.shape:
            raise ValueError("knots and values must have the same length")
        if knots.size > 1 and not np.all(np.diff(knots) > 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)

    def _lookup(self, t, side):
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.knots, t, side=side) - 1
        padded = np.concatenate(([self.value_at_zero], self.values))
        out = padded[idx + 1]
        return out if out.ndim else float(out)

    def __call__(self, t):
        return self._lookup(t, "right")

    def left_limit(self, t):
        """Value just before ``t``."""
        return self._lookup(t, "left")

    def integral(self, t):
        """Exact ``int_0^t`` of the curve (sum over constant pieces)."""
        t = float(t)
        starts = np.concatenate(([0.0], self.knots))
        ends = np.concatenate((self.knots, [np.inf]))
        heights = np.concatenate(([self.value_at_zero], self.values))
        widths = np.clip(np.minimum(ends, t) - starts, 0.0, None)
        return float(np.sum(heights * widths))


def kaplan_meier(times, events):
    """Product-limit survival curve with tied event times aggregated.

    Knots sit at the distinct event times; the curve stays flat after the last
    event.
    """
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    if times.size == 0:
        raise ValueError("empty dataset")
    if times.shape != events.shape:
        raise ValueError("times and events lengths differ")
    if (times < 0).any():
        raise ValueError("times must be nonnegative")
    u, d, y = event_table(times, events, np.inf)
    return StepCurve(u, np.cumprod(1.0 - d / y), 1.0)


def censoring_survival(dataset):
    """Per-stratum censoring survival curves (KM with the flipped indicator).

    Returns a dict mapping stratum label to :class:`StepCurve`; a dataset without
    strata yields a single entry keyed by ``None``.
    """
    if dataset.strata is None:
        return {None: kaplan_meier(dataset.observed_time, ~dataset.event)}
    curves = {}
    for s in np.unique(dataset.strata):
        rows = dataset.strata == s
        curves[s] = kaplan_meier(dataset.observed_time[rows], ~dataset.event[rows])
    return curves


@dataclass(frozen=True)
class PseudoMatrix:
    """Pseudo-observations ``values[i, m]`` for row ``i`` at horizon ``grid[m]``."""

    values: np.ndarray
    grid: np.ndarray
    kind: FunctionalKind
    method: PseudoMethod

    def column(self, horizon):
        hits = np.flatnonzero(np.isclose(self.grid, horizon, rtol=0, atol=1e-12))
        if hits.size == 0:
            raise KeyError(f"horizon {horizon} not in grid {self.grid.tolist()}")
        return self.values[:, hits[0]]

    def rows(self, idx):
        return PseudoMatrix(self.values[idx], self.grid, self.kind, self.method)


def _as_grid(grid):
    g = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    if g.size == 0 or not np.all(g > 0):
        raise ValueError("grid must contain positive horizons")
    return g


def _unpack(data):
    if isinstance(data, SurvivalDataset):
        return data.observed_time, data.event
    times, events = data
    return np.asarray(times, dtype=np.float64), np.asarray(events, dtype=bool)


def km_functional(times, events, grid, kind):
    """Plug-in KM estimate of SP (left limit at t) or RM at every horizon."""
    grid = _as_grid(grid)
    curve = kaplan_meier(times, events)
    if FunctionalKind.parse(kind) is FunctionalKind.SP:
        return np.asarray([curve.left_limit(t) for t in grid])
    return np.asarray([curve.integral(t) for t in grid])


def pseudo_jackknife(data, kind, grid):
    """Jackknife pseudo-observations ``N*theta - (N-1)*theta_{-i}`` over a grid.

    ``data`` is a :class:`SurvivalDataset` or a ``(times, events)`` pair. SP uses
    the KM left limit ``S(t-)`` so that without censoring the pseudo-observation
    is exactly ``1{T >= t}``; RM integrates the KM curve exactly.
    """
    times, events = _unpack(data)
    kind = FunctionalKind.parse(kind)
    grid = _as_grid(grid)
    n = times.shape[0]
    if n < 2:
        raise ValueError("jackknife undefined for fewer than 2 observations")
    full, loo = kernels.jackknife_loo(times, events, grid, kind is FunctionalKind.RM)
    values = n * full[None, :] - (n - 1) * loo
    return PseudoMatrix(values, grid, kind, PseudoMethod.JACKKNIFE)


def pseudo_ipcw(dataset, kind, grid):
    """Censoring-weighted pseudo-observations.

    ``nu(T~; t) * 1{Delta = 1 or T~ >= t} / G((T~ ^ t)- | stratum)`` with ``G``
    the stratified censoring KM evaluated as a left limit.
    """
    kind = FunctionalKind.parse(kind)
    grid = _as_grid(grid)
    curves = censoring_survival(dataset)
    times, events = dataset.observed_time, dataset.event
    n = times.shape[0]
    weights = np.empty((n, grid.shape[0]))
    if dataset.strata is None:
        groups = {None: np.arange(n)}
    else:
        groups = {s: np.flatnonzero(dataset.strata == s) for s in curves}
    for s, rows in groups.items():
        curve = curves[s]
        for m, t in enumerate(grid):
            weights[rows, m] = curve.left_limit(np.minimum(times[rows], t))
    values = np.empty((n, grid.shape[0]))
    for m, t in enumerate(grid):
        observed = events | (times >= t)
        g = weights[:, m]
        if np.any(observed & (g <= 0)):
            raise ValueError("censoring weight diverges")
        num = nu(times, t, kind) * observed
        values[:, m] = np.where(observed, num / np.where(observed, g, 1.0), 0.0)
    return PseudoMatrix(values, grid, kind, PseudoMethod.IPCW)


def compute_pseudo(dataset, kind, grid, method="jackknife"):
    method = PseudoMethod.parse(method)
    if method is PseudoMethod.JACKKNIFE:
        return pseudo_jackknife(dataset, kind, grid)
    return pseudo_ipcw(dataset, kind, grid)
