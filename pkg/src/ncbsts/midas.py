"""Mixed-frequency data handling: transformations, U-MIDAS skip-sampling,
standardisation, publication calendars and ragged-edge masking.

Skip-sampled column order: for every series the three months of a quarter are
contiguous and in reverse chronological order, i.e. offsets ``0`` (last month
of the quarter), ``1``, ``2`` (first month).  A column is named
``f"{series}{offset}"``.
"""
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

TRANSFORM_CODES = {1: "monthly change", 2: "monthly growth rate", 3: "no change", 4: "pre-deseasonalised"}
PUB_LAGS = {"m": 0, "m-1": 1, "m-2": 2}


class DataError(ValueError):
    pass


class TransformDivisionError(DataError, ZeroDivisionError):
    pass


class CalendarError(ValueError):
    pass


@dataclass(frozen=True)
class MonthlySeries:
    name: str
    values: np.ndarray
    transform_code: int = 3
    pub_lag: str = "m"
    # number of leading months dropped by transformations
    offset: int = 0

    def __post_init__(self):
        if self.transform_code not in TRANSFORM_CODES:
            raise DataError(f"{self.name}: unknown transformation code {self.transform_code}")
        if self.pub_lag not in PUB_LAGS:
            raise DataError(f"{self.name}: unknown publication lag {self.pub_lag!r}")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


def apply_transform(s):
    """Apply the series' transformation code; codes 1 and 2 drop one observation."""
    x = s.values
    if s.transform_code in (3, 4):
        return s
    if len(x) < 2:
        raise DataError(f"{s.name}: transformation {s.transform_code} needs at least 2 observations")
    if s.transform_code == 1:
        out = np.diff(x)
    else:
        zero = np.flatnonzero(x[:-1] == 0)
        if zero.size:
            raise TransformDivisionError(f"{s.name}: growth rate undefined, zero value at index {zero[0]}")
        out = 100.0 * (x[1:] / x[:-1] - 1.0)
    return replace(s, values=out, offset=s.offset + 1)


@dataclass
class QuarterlyPanel:
    y: np.ndarray
    X: np.ndarray
    column_meta: list
    col_means: np.ndarray = None
    col_sds: np.ndarray = None
    quarters: list = field(default=None)

    @property
    def T(self):
        return self.X.shape[0]

    @property
    def column_names(self):
        return [f"{name}{off}" for name, off in self.column_meta]

    @property
    def series_names(self):
        return list(dict.fromkeys(name for name, _ in self.column_meta))

    @property
    def is_standardised(self):
        return self.col_sds is not None

    def rows(self, stop):
        """Panel restricted to the first ``stop`` quarters (constants are kept)."""
        y = None if self.y is None else self.y[:stop]
        q = None if self.quarters is None else self.quarters[:stop]
        return replace(self, y=y, X=self.X[:stop], quarters=q)

    def to_frame(self):
        df = pd.DataFrame(self.X, columns=self.column_names)
        if self.y is not None:
            df.insert(0, "y", self.y)
        if self.quarters is not None:
            df.insert(0, "quarter", [str(q) for q in self.quarters])
        return df

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.10g")


def skip_sample(series, quarters):
    """Realign monthly series into ``quarters`` rows of three columns per series.

    The last ``3 * quarters`` months of each series are used; row ``t`` holds
    the third, second and first month of quarter ``t``.
    """
    cols, meta = [], []
    for s in series:
        v = s.values
        if len(v) < 3 * quarters:
            raise DataError(f"{s.name}: needs {3 * quarters} months for {quarters} quarters, has {len(v)}")
        block = v[len(v) - 3 * quarters :].reshape(quarters, 3)[:, ::-1]
        cols.append(block)
        meta.extend((s.name, off) for off in range(3))
    X = np.hstack(cols) if cols else np.zeros((quarters, 0))
    return QuarterlyPanel(None, X, meta)


def standardise(panel, n_train=None):
    """Centre and scale every column by its mean and sample SD over the first
    ``n_train`` rows (all rows by default); the constants are stored."""
    n_train = panel.T if n_train is None else n_train
    if n_train < 2:
        raise DataError("standardisation needs at least 2 rows")
    train = panel.X[:n_train]
    means = np.nanmean(train, axis=0)
    sds = np.nanstd(train, axis=0, ddof=1)
    bad = np.flatnonzero(~(sds > 0))
    if bad.size:
        raise DataError(f"column {panel.column_names[bad[0]]!r} has zero variance")
    return replace(panel, X=(panel.X - means) / sds, col_means=means, col_sds=sds)


def destandardise(panel):
    if not panel.is_standardised:
        return panel
    return replace(panel, X=panel.X * panel.col_sds + panel.col_means, col_means=None, col_sds=None)


# --- calendars ---------------------------------------------------------------


@dataclass(frozen=True)
class CalendarEntry:
    vintage_id: int
    month_in_quarter: int
    released: frozenset
    timing: str = ""
    label: str = ""


@dataclass(frozen=True)
class VintageCalendar:
    """Release schedule within one nowcast cycle.

    ``entries[v].released`` holds the ``(series, offset)`` cells of the target
    quarter that become observable at vintage ``v``; availability is cumulative.
    """

    entries: tuple

    def __post_init__(self):
        ids = [e.vintage_id for e in self.entries]
        if ids != list(range(len(ids))):
            raise CalendarError("vintage ids must run consecutively from 0")

    def __len__(self):
        return len(self.entries)

    @property
    def series(self):
        return sorted({name for e in self.entries for name, _ in e.released})

    def released_through(self, vintage_id):
        if not 0 <= vintage_id < len(self.entries):
            raise CalendarError(f"vintage {vintage_id} out of range 0..{len(self.entries) - 1}")
        out = set()
        for e in self.entries[: vintage_id + 1]:
            out |= e.released
        return frozenset(out)

    @classmethod
    def from_config(cls, cfg, groups=None):
        """Build from a mapping with ``entries`` (and optional ``groups``).

        Each entry has ``vintage``, ``month`` (1-5, counted from the start of the
        target quarter), ``variables`` and ``pub_lag``.  A release in month ``m``
        with lag ``m-k`` covers data month ``m - k``; only months 1-3 belong to
        the target quarter.  ``cells: [[series, offset], ...]`` overrides the
        derived cells.  Variables written ``@name`` expand to ``groups[name]``.
        """
        all_groups = dict(cfg.get("groups") or {})
        all_groups.update(groups or {})
        entries = []
        for i, raw in enumerate(cfg.get("entries") or []):
            vid = int(raw.get("vintage", i))
            month = int(raw.get("month", 1))
            if raw.get("cells") is not None:
                cells = frozenset((str(n), int(o)) for n, o in raw["cells"])
            else:
                names = []
                for v in raw.get("variables") or []:
                    if str(v).startswith("@"):
                        g = str(v)[1:]
                        if g not in all_groups:
                            raise CalendarError(f"vintage {vid}: undefined variable group {g!r}")
                        names.extend(all_groups[g])
                    else:
                        names.append(str(v))
                lag = raw.get("pub_lag", "m")
                if names and lag not in PUB_LAGS:
                    raise CalendarError(f"vintage {vid}: unknown publication lag {lag!r}")
                data_month = month - PUB_LAGS.get(lag, 0)
                cells = frozenset((n, 3 - data_month) for n in names) if 1 <= data_month <= 3 else frozenset()
            entries.append(CalendarEntry(vid, month, cells, str(raw.get("timing", "")), str(raw.get("release", ""))))
        return cls(tuple(entries))


def load_calendar(path, groups=None):
    with open(path) as fh:
        return VintageCalendar.from_config(yaml.safe_load(fh), groups)


def builtin_calendar_config():
    """The built-in 31-vintage pseudo real-time calendar as a config mapping."""
    text = resources.files("ncbsts").joinpath("data/standard_calendar.yaml").read_text()
    return yaml.safe_load(text)


def builtin_calendar(google_trends=("gt",)):
    return VintageCalendar.from_config(builtin_calendar_config(), {"google_trends": list(google_trends)})


def builtin_series():
    """Macro series of the built-in calendar with their transformation codes."""
    cfg = builtin_calendar_config()
    return dict(cfg["transforms"])


def mask_unpublished(panel, calendar, vintage_id, target_row=-1):
    """Zero the cells of ``target_row`` that are not yet released at ``vintage_id``.

    The panel must be standardised, so a zero means "at the training mean".
    Other rows are left untouched.
    """
    if not panel.is_standardised:
        raise DataError("mask after standardisation so that zero encodes the mean")
    known = set(panel.series_names)
    unknown = sorted(set(calendar.series) - known)
    if unknown:
        raise CalendarError(f"calendar refers to unknown series {unknown}")
    released = calendar.released_through(vintage_id)
    keep = np.array([cell in released for cell in panel.column_meta], dtype=bool)
    X = panel.X.copy()
    X[target_row, ~keep] = 0.0
    return replace(panel, X=X)


def masked_cells(panel, calendar, vintage_id):
    """Set of ``(series, offset)`` cells zeroed at ``vintage_id``."""
    released = calendar.released_through(vintage_id)
    return frozenset(c for c in panel.column_meta if c not in released)


# --- CSV input ---------------------------------------------------------------


def read_monthly_csv(path):
    """Long-format monthly data (``date, series, value``) to a wide frame indexed by month."""
    df = pd.read_csv(path)
    missing = {"date", "series", "value"} - set(df.columns)
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    df["date"] = pd.PeriodIndex(pd.to_datetime(df["date"]), freq="M")
    if df.duplicated(["date", "series"]).any():
        raise DataError(f"{path}: duplicated (date, series) rows")
    return df.pivot(index="date", columns="series", values="value").sort_index()


def read_quarterly_csv(path):
    df = pd.read_csv(path)
    if not {"date", "value"} <= set(df.columns):
        raise DataError(f"{path}: expected columns date, value")
    idx = pd.PeriodIndex(pd.to_datetime(df["date"]), freq="Q")
    return pd.Series(df["value"].to_numpy(float), index=idx).sort_index()


def build_panel(monthly, quarterly, transforms=None, series=None):
    """Quarterly panel from a wide monthly frame and a quarterly target series.

    Each series is transformed on the monthly grid and then skip-sampled onto
    the quarters of ``quarterly`` (whose values may be NaN for the quarter being
    nowcast).  Missing monthly cells stay NaN.
    """
    transforms = transforms or {}
    series = list(monthly.columns) if series is None else list(series)
    quarters = quarterly.index
    if len(quarters) == 0:
        raise DataError("no target quarters")
    months = pd.period_range(quarters[0].asfreq("M", "s"), quarters[-1].asfreq("M", "e"), freq="M")
    cols, meta = [], []
    for name in series:
        if name not in monthly.columns:
            raise DataError(f"series {name!r} not found in monthly data")
        raw = monthly[name]
        code = int(transforms.get(name, 3))
        s = raw.sort_index()
        if code == 1:
            s = s.diff()
        elif code == 2:
            prev = s.shift(1)
            if (prev == 0).any():
                bad = prev.index[prev == 0][0]
                raise TransformDivisionError(f"{name}: growth rate undefined, zero value before {bad}")
            s = 100.0 * (s / prev - 1.0)
        vals = s.reindex(months).to_numpy(float).reshape(len(quarters), 3)[:, ::-1]
        cols.append(vals)
        meta.extend((name, off) for off in range(3))
    return QuarterlyPanel(quarterly.to_numpy(float), np.hstack(cols), meta, quarters=list(quarters))


def data_path(name):
    return Path(str(resources.files("ncbsts").joinpath("data", name)))
