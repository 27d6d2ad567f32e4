"""Right-censored survival datasets and their CSV representation."""

import csv
import io
from dataclasses import dataclass

import numpy as np

TARGET = "target"
MAX_STRATA = 64


class SchemaError(ValueError):
    """A dataset CSV does not match the expected layout."""


@dataclass(frozen=True)
class SurvivalDataset:
    """Observed survival data ``(X, T~, Delta, D)`` plus optional censoring strata.

    Parameters
    ----------
    covariates : (N, d) array
        Design matrix; column 0 is usually an all-ones intercept.
    observed_time : (N,) array
        ``min(T, C)`` for every row.
    event : (N,) bool array
        ``True`` when the failure was observed.
    domain : (N,) array of str
        Domain labels; ``"target"`` marks the target domain.
    strata : (N,) array, optional
        Small-cardinality labels used for covariate-dependent censoring.
    """

    covariates: np.ndarray
    observed_time: np.ndarray
    event: np.ndarray
    domain: np.ndarray
    strata: np.ndarray | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.covariates, dtype=np.float64))
        t = np.asarray(self.observed_time, dtype=np.float64)
        e = np.asarray(self.event, dtype=bool)
        n = t.shape[0]
        dom = self.domain
        dom = np.full(n, "source", dtype=object) if dom is None else np.asarray(dom, dtype=object)
        if X.shape[0] != n or e.shape[0] != n or dom.shape[0] != n:
            raise ValueError("covariates, observed_time, event and domain lengths differ")
        if np.isnan(X).any() or np.isnan(t).any():
            raise ValueError("NaN in dataset")
        if (t < 0).any():
            raise ValueError("observed_time must be nonnegative")
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "observed_time", t)
        object.__setattr__(self, "event", e)
        object.__setattr__(self, "domain", dom)
        if self.strata is not None:
            s = np.asarray(self.strata)
            if s.shape[0] != n:
                raise ValueError("strata length differs from dataset")
            if np.unique(s).shape[0] > MAX_STRATA:
                raise ValueError(f"strata has more than {MAX_STRATA} distinct values")
            object.__setattr__(self, "strata", s)

    def __len__(self):
        return self.observed_time.shape[0]

    @property
    def n_features(self):
        return self.covariates.shape[1]

    def subset(self, rows):
        """Row subset (boolean mask or index array)."""
        return SurvivalDataset(
            self.covariates[rows],
            self.observed_time[rows],
            self.event[rows],
            self.domain[rows],
            None if self.strata is None else self.strata[rows],
        )

    def is_target(self):
        return self.domain == TARGET

    def source(self):
        return self.subset(~self.is_target())

    def target(self):
        return self.subset(self.is_target())


def _fmt(x):
    return repr(float(x))


def to_csv(dataset, path=None):
    """Write ``dataset`` in the ``x0..x{d-1},time,event,domain[,stratum]`` layout.

    Returns the CSV text when ``path`` is None.
    """
    d = dataset.n_features
    header = [f"x{j}" for j in range(d)] + ["time", "event", "domain"]
    if dataset.strata is not None:
        header.append("stratum")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i in range(len(dataset)):
        row = [_fmt(v) for v in dataset.covariates[i]]
        row += [_fmt(dataset.observed_time[i]), int(dataset.event[i]), dataset.domain[i]]
        if dataset.strata is not None:
            row.append(dataset.strata[i])
        w.writerow(row)
    text = buf.getvalue()
    if path is None:
        return text
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return None


def _parse_float(text, row, col):
    # float() is locale-independent; reject decimal commas explicitly
    try:
        return float(text)
    except ValueError:
        raise SchemaError(f"row {row}, column {col!r}: not a number: {text!r}") from None


def read_csv(path_or_text):
    """Parse a dataset CSV, reporting schema violations with row/column coordinates.

    Row numbers are 1-based and count the header as row 1.
    """
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        lines = io.StringIO(path_or_text)
    else:
        lines = open(path_or_text, encoding="utf-8", newline="")
    with lines:
        reader = csv.reader(lines)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("row 1: missing header") from None
        x_cols = [h for h in header if h.startswith("x") and h[1:].isdigit()]
        expected = [f"x{j}" for j in range(len(x_cols))]
        if not x_cols or header[: len(x_cols)] != expected:
            raise SchemaError("row 1: header must start with x0..x{d-1}")
        rest = header[len(x_cols):]
        if rest not in (["time", "event", "domain"], ["time", "event", "domain", "stratum"]):
            raise SchemaError(
                f"row 1: expected columns time,event,domain[,stratum] after covariates, got {rest}"
            )
        has_strata = len(rest) == 4
        X, t, e, dom, strata = [], [], [], [], []
        for r, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise SchemaError(f"row {r}: expected {len(header)} fields, got {len(rec)}")
            d = len(x_cols)
            X.append([_parse_float(rec[j], r, header[j]) for j in range(d)])
            tv = _parse_float(rec[d], r, "time")
            if not np.isfinite(tv) or tv < 0:
                raise SchemaError(f"row {r}, column 'time': must be a finite nonnegative number")
            t.append(tv)
            ev = rec[d + 1].strip()
            if ev not in ("0", "1"):
                raise SchemaError(f"row {r}, column 'event': must be 0 or 1, got {ev!r}")
            e.append(ev == "1")
            label = rec[d + 2].strip()
            if not label:
                raise SchemaError(f"row {r}, column 'domain': empty label")
            dom.append(label)
            if has_strata:
                strata.append(rec[d + 3].strip())
    if not t:
        raise SchemaError("empty dataset")
    X = np.asarray(X, dtype=np.float64)
    if np.isnan(X).any():
        raise SchemaError("NaN in covariates")
    try:
        return SurvivalDataset(
            X, np.asarray(t), np.asarray(e, dtype=bool), np.asarray(dom, dtype=object),
            np.asarray(strata, dtype=object) if has_strata else None,
        )
    except ValueError as exc:
        raise SchemaError(str(exc)) from None
