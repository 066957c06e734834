"""Dynamic-panel data model: ingestion, observation windows, conditioning sets,
orthogonal forward differencing, and identification rank checks.

Outcomes live on a time grid 0..T+1: period 0 is the initial condition,
periods 1..T are the estimation sample, and period T+1 (when present) is the
held-out forecast target.  Covariates are indexed by the period they are
*dated* at: the regressors entering the period-t outcome equation are
``x[:, t-1]`` and ``w[:, t-1]``.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "PanelSchema",
    "PanelData",
    "ConditioningSet",
    "DifferencedPanel",
    "RankReport",
    "PanelError",
    "load_panel",
    "panel_from_arrays",
    "build_conditioning_set",
    "forward_difference",
    "validate_identification",
]

RANK_RTOL = 1e-8


class PanelError(ValueError):
    """Raised on malformed panel input."""


@dataclass(frozen=True)
class PanelSchema:
    """Column-role map for CSV ingestion.

    ``x_exog``/``x_pred`` name the strictly exogenous and predetermined
    homogeneous-effect covariates; the lagged outcome is appended as the last
    predetermined column when ``lag_outcome`` is set.  ``w_agg``/``w_ind``
    name aggregate and individual heterogeneous-effect covariates; a leading
    intercept column is always added to w.
    """

    id_col: str = "id"
    time_col: str = "time"
    y_col: str = "y"
    x_exog: tuple[str, ...] = ()
    x_pred: tuple[str, ...] = ()
    lag_outcome: bool = True
    w_agg: tuple[str, ...] = ()
    w_ind: tuple[str, ...] = ()
    missing: str = ""
    layout: str = "long"  # "long" or "wide"

    @property
    def d_x(self) -> int:
        return len(self.x_exog) + len(self.x_pred) + (1 if self.lag_outcome else 0)

    @property
    def d_w(self) -> int:
        return 1 + len(self.w_agg) + len(self.w_ind)

    @property
    def lag_col_index(self) -> int | None:
        """Index of the lagged-outcome column within x, or None."""
        return self.d_x - 1 if self.lag_outcome else None


@dataclass(frozen=True)
class PanelData:
    """Balanced/unbalanced dynamic panel with per-unit observation windows.

    y has shape (N, T+2) over periods 0..T+1 with NaN marking missing
    entries.  x and w have shape (N, T+1, d) over periods 0..T; x[:, t] and
    w[:, t] enter the period t+1 outcome equation.  lag_col marks the
    lagged-outcome column of x (or -1).  (t0[i], t1[i]) is the longest
    contiguous run of complete transitions, ties broken toward the later run;
    t1[i] < t0[i] means no usable transition.
    """

    y: np.ndarray
    x: np.ndarray
    w: np.ndarray
    t0: np.ndarray
    t1: np.ndarray
    lag_col: int = -1
    unit_ids: tuple = ()
    schema: PanelSchema | None = None

    def __post_init__(self):
        for name in ("y", "x", "w", "t0", "t1"):
            object.__setattr__(self, name, np.asarray(getattr(self, name)))
        if self.y.ndim != 2:
            raise PanelError("y must be (N, T+2)")
        if self.x.shape[:2] != (self.N, self.T + 1) or self.x.ndim != 3:
            raise PanelError("x must be (N, T+1, d_x)")
        if self.w.shape[:2] != (self.N, self.T + 1) or self.w.ndim != 3:
            raise PanelError("w must be (N, T+1, d_w)")
        if self.d_w < 1:
            raise PanelError("w must include at least the intercept column")
        for arr in (self.y, self.x, self.w):
            arr.setflags(write=False)

    @property
    def N(self) -> int:
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[1] - 2

    @property
    def d_x(self) -> int:
        return self.x.shape[2]

    @property
    def d_w(self) -> int:
        return self.w.shape[2]

    @property
    def n_trans(self) -> np.ndarray:
        """Number of usable transitions per unit."""
        return np.maximum(self.t1 - self.t0 + 1, 0)

    def has_holdout(self) -> np.ndarray:
        """Units whose y_{T+1} and forecast-origin covariates are observed."""
        ok = np.isfinite(self.y[:, self.T + 1])
        ok &= np.all(np.isfinite(self.x[:, self.T]), axis=1)
        ok &= np.all(np.isfinite(self.w[:, self.T]), axis=1)
        return ok

    def estimation_view(self):
        """(y, x, w) restricted to periods visible to estimation.

        The holdout column y_{T+1} is replaced by NaN so no fit operation can
        read it; covariates at period T stay visible (forecast origin).
        """
        y = self.y.copy()
        y[:, self.T + 1] = np.nan
        return y, self.x, self.w


@dataclass(frozen=True)
class ConditioningSet:
    """Per-unit conditioning vectors c_{i0} with standardization parameters."""

    values: np.ndarray  # (N, d_c0), standardized if `standardized`
    mean: np.ndarray
    scale: np.ndarray
    standardized: bool
    labels: tuple[str, ...] = ()

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def raw(self) -> np.ndarray:
        if not self.standardized:
            return self.values
        return self.values * self.scale + self.mean

    def transform(self, raw: np.ndarray) -> np.ndarray:
        """Apply the stored standardization to new raw coordinates."""
        raw = np.atleast_2d(np.asarray(raw, dtype=float))
        if not self.standardized:
            return raw
        return (raw - self.mean) / self.scale


@dataclass(frozen=True)
class DifferencedPanel:
    """Orthogonal forward differences, t in [t0_i, t1_i - d_w] per unit."""

    rows_y: list  # per unit: (n_i,) arrays
    rows_x: list  # per unit: (n_i, d_x) arrays
    t_index: list  # per unit: (n_i,) int arrays of transition periods t
    dropped: tuple = ()  # (unit, t) pairs dropped on singular Gram

    def stacked(self):
        ys = [r for r in self.rows_y if len(r)]
        xs = [r for r in self.rows_x if len(r)]
        y = np.concatenate(ys) if ys else np.empty(0)
        x = np.concatenate(xs) if xs else np.empty((0, 0))
        return y, x


@dataclass(frozen=True)
class RankReport:
    """Per-unit and global identification rank diagnostics."""

    unit_rank: np.ndarray
    unit_pass: np.ndarray
    global_rank: int
    global_pass: bool
    d_w: int
    d_x: int
    failing_units: tuple

    @property
    def ok(self) -> bool:
        return bool(self.global_pass and self.unit_pass.all())


def _parse_cell(token: str, missing: str) -> float:
    token = token.strip()
    if token == missing or token == "":
        return np.nan
    return float(token)


def _read_long_rows(reader, schema, colnames):
    name_to_idx = {c: i for i, c in enumerate(colnames)}
    needed = [schema.id_col, schema.time_col, schema.y_col]
    needed += list(schema.x_exog) + list(schema.x_pred)
    needed += list(schema.w_agg) + list(schema.w_ind)
    for c in needed:
        if c not in name_to_idx:
            raise PanelError(f"missing column {c!r} in CSV header")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or (len(rec) == 1 and not rec[0].strip()):
            continue
        uid = rec[name_to_idx[schema.id_col]].strip()
        t = int(rec[name_to_idx[schema.time_col]])
        vals = {}
        for c in needed[2:]:
            vals[c] = _parse_cell(rec[name_to_idx[c]], schema.missing)
        rows.append((uid, t, vals, lineno))
    return rows


def _widen_wide_rows(reader, schema, colnames):
    """Wide layout: one row per unit, columns '<col>_<t>'."""
    rows = []
    data_cols = [schema.y_col] + list(schema.x_exog) + list(schema.x_pred)
    data_cols += list(schema.w_agg) + list(schema.w_ind)
    per_t: dict[int, list[tuple[str, str]]] = {}
    for c in colnames:
        if c == schema.id_col:
            continue
        base, _, suffix = c.rpartition("_")
        if base in data_cols and suffix.lstrip("-").isdigit():
            per_t.setdefault(int(suffix), []).append((base, c))
    if not per_t:
        raise PanelError("wide layout: no '<col>_<t>' columns found")
    name_to_idx = {c: i for i, c in enumerate(colnames)}
    if schema.id_col not in name_to_idx:
        raise PanelError(f"missing column {schema.id_col!r} in CSV header")
    for lineno, rec in enumerate(reader, start=2):
        if not rec or (len(rec) == 1 and not rec[0].strip()):
            continue
        uid = rec[name_to_idx[schema.id_col]].strip()
        for t, cols in per_t.items():
            vals = {base: _parse_cell(rec[name_to_idx[full]], schema.missing) for base, full in cols}
            for base in data_cols:
                vals.setdefault(base, np.nan)
            rows.append((uid, t, vals, lineno))
    return rows


def _longest_complete_run(complete: np.ndarray) -> tuple[int, int]:
    """Longest contiguous True run over t=1..T; ties go to the later run.

    `complete[t]` indexes transitions t=1..T (entry 0 unused).  Returns
    (t0, t1) with t1 < t0 when no transition is complete.
    """
    best_len, best = 0, (1, 0)
    run_start = None
    T = len(complete) - 1
    for t in range(1, T + 2):
        if t <= T and complete[t]:
            if run_start is None:
                run_start = t
        else:
            if run_start is not None:
                length = t - run_start
                if length >= best_len:  # >= : later run wins ties
                    best_len, best = length, (run_start, t - 1)
                run_start = None
    return best


def load_panel(stream, schema: PanelSchema, T: int | None = None) -> PanelData:
    """Read a CSV character stream into a PanelData.

    Units are indexed 0..N-1 in order of first appearance.  Windows are the
    longest contiguous run of complete transitions; rows outside the window
    are retained but unused.  Duplicate (id, time) pairs are rejected with the
    offending row number.
    """
    if isinstance(stream, (str, bytes)):
        stream = io.StringIO(stream if isinstance(stream, str) else stream.decode())
    reader = csv.reader(line for line in stream if not line.startswith("#"))
    try:
        header = next(reader)
    except StopIteration:
        raise PanelError("no rows") from None
    header = [c.strip() for c in header]
    if schema.layout == "wide":
        rows = _widen_wide_rows(reader, schema, header)
    else:
        rows = _read_long_rows(reader, schema, header)
    if not rows:
        raise PanelError("no rows")

    unit_ids: list = []
    unit_index: dict = {}
    seen: set = set()
    tmax = 0
    for uid, t, _, lineno in rows:
        if (uid, t) in seen:
            raise PanelError(f"duplicate (id, time) pair ({uid!r}, {t}) at row {lineno}")
        seen.add((uid, t))
        if uid not in unit_index:
            unit_index[uid] = len(unit_ids)
            unit_ids.append(uid)
        tmax = max(tmax, t)
    if T is None:
        T = max(tmax - 1, 1)
    N = len(unit_ids)

    y = np.full((N, T + 2), np.nan)
    x_cols = list(schema.x_exog) + list(schema.x_pred)
    d_x = schema.d_x
    d_w = schema.d_w
    x = np.full((N, T + 1, d_x), np.nan)
    w = np.full((N, T + 1, d_w), np.nan)
    w[:, :, 0] = 1.0  # intercept
    w_cols = list(schema.w_agg) + list(schema.w_ind)

    for uid, t, vals, _ in rows:
        i = unit_index[uid]
        if 0 <= t <= T + 1:
            y[i, t] = vals[schema.y_col]
        if 0 <= t <= T:
            for j, c in enumerate(x_cols):
                x[i, t, j] = vals[c]
            for j, c in enumerate(w_cols):
                w[i, t, 1 + j] = vals[c]
    if schema.lag_outcome:
        x[:, :, d_x - 1] = y[:, : T + 1]

    t0, t1 = _compute_windows(y, x, w, T)
    return PanelData(
        y=y,
        x=x,
        w=w,
        t0=t0,
        t1=t1,
        lag_col=schema.lag_col_index if schema.lag_outcome else -1,
        unit_ids=tuple(unit_ids),
        schema=schema,
    )


def _compute_windows(y, x, w, T):
    N = y.shape[0]
    t0 = np.zeros(N, dtype=np.int64)
    t1 = np.zeros(N, dtype=np.int64)
    for i in range(N):
        complete = np.zeros(T + 1, dtype=bool)
        for t in range(1, T + 1):
            complete[t] = (
                np.isfinite(y[i, t])
                and np.all(np.isfinite(x[i, t - 1]))
                and np.all(np.isfinite(w[i, t - 1]))
            )
        t0[i], t1[i] = _longest_complete_run(complete)
    return t0, t1


def panel_from_arrays(y, x=None, w=None, lag_col=None) -> PanelData:
    """Assemble a PanelData from dense arrays.

    y: (N, T+2).  x defaults to the lagged outcome alone; w defaults to the
    intercept alone.  Windows are recomputed from missingness.
    """
    y = np.asarray(y, dtype=float)
    N, Tp2 = y.shape
    T = Tp2 - 2
    if x is None:
        x = y[:, : T + 1][:, :, None].copy()
        lag_col = 0
    else:
        x = np.asarray(x, dtype=float)
        if lag_col is None:
            lag_col = -1
    if w is None:
        w = np.ones((N, T + 1, 1))
    else:
        w = np.asarray(w, dtype=float)
    t0, t1 = _compute_windows(y, x, w, T)
    return PanelData(y=y, x=x, w=w, t0=t0, t1=t1, lag_col=lag_col)


_SELECTOR_Y0 = "y0"


def build_conditioning_set(
    data: PanelData, selector: tuple[str, ...], standardize: bool = True
) -> ConditioningSet:
    """Assemble per-unit conditioning vectors c_{i0}.

    Selector tokens: ``y0`` (initial outcome), ``x:<j>`` (initial value of
    x column j), ``w:<j>`` (initial value of w column j).  Sequence-type
    selectors are intentionally not offered: widths must agree across units,
    which unit-specific observation windows cannot guarantee.
    """
    if not selector:
        raise PanelError("empty conditioning selector")
    cols = []
    labels = []
    for tok in selector:
        if tok == _SELECTOR_Y0:
            cols.append(data.y[:, 0])
            labels.append("y0")
        elif tok.startswith("x:"):
            j = int(tok[2:])
            cols.append(data.x[:, 0, j])
            labels.append(tok)
        elif tok.startswith("w:"):
            j = int(tok[2:])
            cols.append(data.w[:, 0, j])
            labels.append(tok)
        else:
            raise PanelError(f"unknown conditioning selector token {tok!r}")
    values = np.column_stack(cols).astype(float)
    if not np.all(np.isfinite(values)):
        bad = np.where(~np.isfinite(values).all(axis=1))[0]
        raise PanelError(f"conditioning coordinates missing for units {bad[:5].tolist()}")
    if standardize:
        mean = values.mean(axis=0)
        scale = values.std(axis=0)  # population (divide-by-N) convention
        if np.any(scale == 0.0):
            j = int(np.argmin(scale))
            raise PanelError(f"zero variance coordinate {labels[j]!r} in conditioning set")
        values = (values - mean) / scale
    else:
        mean = np.zeros(values.shape[1])
        scale = np.ones(values.shape[1])
    return ConditioningSet(
        values=values, mean=mean, scale=scale, standardized=standardize, labels=tuple(labels)
    )


def forward_difference(data: PanelData, which: str = "outcome") -> DifferencedPanel:
    """Orthogonal forward differencing of the outcome or covariate columns.

    For each unit and t in [t0_i, t1_i - d_w]:
        y~_it = y_it - w'_{i,t-1} (sum_{s>t} w w')^{-1} sum_{s>t} w y_is
    and analogously for every x column.  Units/periods with a singular
    future-w Gram matrix are dropped with a warning.
    """
    if which not in ("outcome", "covariate"):
        raise PanelError("which must be 'outcome' or 'covariate'")
    d_w = data.d_w
    rows_y: list = []
    rows_x: list = []
    t_index: list = []
    dropped = []
    for i in range(data.N):
        t0, t1 = int(data.t0[i]), int(data.t1[i])
        ys, xs, ts = [], [], []
        for t in range(t0, t1 - d_w + 1):
            W = data.w[i, t : t1]  # w_{i,s-1} for s = t+1..t1
            G = W.T @ W
            try:
                sol_y = np.linalg.solve(G, W.T @ data.y[i, t + 1 : t1 + 1])
                sol_x = np.linalg.solve(G, W.T @ data.x[i, t : t1])
            except np.linalg.LinAlgError:
                dropped.append((i, t))
                continue
            wt = data.w[i, t - 1]
            ys.append(data.y[i, t] - wt @ sol_y)
            xs.append(data.x[i, t - 1] - wt @ sol_x)
            ts.append(t)
        rows_y.append(np.asarray(ys))
        rows_x.append(np.asarray(xs).reshape(len(ts), data.d_x))
        t_index.append(np.asarray(ts, dtype=np.int64))
    if dropped:
        warnings.warn(f"forward differencing dropped {len(dropped)} unit-periods (singular Gram)")
    return DifferencedPanel(rows_y=rows_y, rows_x=rows_x, t_index=t_index, dropped=tuple(dropped))


def _matrix_rank(mat: np.ndarray) -> int:
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


def validate_identification(data: PanelData) -> RankReport:
    """Identification diagnostics for the observed windows.

    Per unit: rank of w over the window must be d_w and the window must hold
    strictly more than d_w transitions (otherwise no differenced rows exist).
    Globally: rank of the accumulated differenced-x Gram must be d_x.
    """
    d_w, d_x = data.d_w, data.d_x
    unit_rank = np.zeros(data.N, dtype=np.int64)
    unit_pass = np.zeros(data.N, dtype=bool)
    for i in range(data.N):
        t0, t1 = int(data.t0[i]), int(data.t1[i])
        if t1 < t0:
            continue
        W = data.w[i, t0 - 1 : t1]  # columns w_{i,t-1}, t = t0..t1
        unit_rank[i] = _matrix_rank(W)
        unit_pass[i] = unit_rank[i] == d_w and (t1 - t0 + 1) > d_w
    fd = forward_difference(data)
    _, xs = fd.stacked()
    if xs.size:
        gram = xs.T @ xs
        global_rank = _matrix_rank(gram)
    else:
        global_rank = 0
    failing = tuple(np.where(~unit_pass)[0].tolist())
    return RankReport(
        unit_rank=unit_rank,
        unit_pass=unit_pass,
        global_rank=global_rank,
        global_pass=global_rank == d_x,
        d_w=d_w,
        d_x=d_x,
        failing_units=failing,
    )
