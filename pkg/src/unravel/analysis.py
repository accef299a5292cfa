"""Entropies, tripartite mutual information, bootstrap errors and scaling collapse."""

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

log = logging.getLogger(__name__)

RENYI_INDICES = (0.5, 1.0, 2.0, math.inf)


class InsufficientData(ValueError):
    pass


class DegenerateCollapse(RuntimeError):
    pass


def parse_index(n) -> float:
    if isinstance(n, str):
        s = n.strip().lower()
        if s in ("inf", "infinity", "oo"):
            return math.inf
        if s in ("vn", "von_neumann"):
            return 1.0
        if "/" in s:
            a, b = s.split("/")
            return float(a) / float(b)
        return float(s)
    return float(n)


def index_label(n) -> str:
    n = parse_index(n)
    if math.isinf(n):
        return "inf"
    if n == 0.5:
        return "1/2"
    return f"{n:g}"


def renyi_entropy(eigenvalues, n=1.0) -> float:
    """Renyi-n entropy (natural log) of a probability spectrum.

    Small negative entries are clipped and the spectrum renormalized.
    """
    lam = np.clip(np.asarray(eigenvalues, dtype=float).ravel(), 0.0, None)
    s = lam.sum()
    if s <= 0:
        raise ValueError("spectrum has no positive weight")
    lam = lam / s
    n = parse_index(n)
    if n == 1.0:
        nz = lam[lam > 0]
        return float(max(-np.sum(nz * np.log(nz)), 0.0))
    if math.isinf(n):
        return float(-np.log(lam.max()))
    if n == 0.5:
        return float(2.0 * np.log(np.sum(np.sqrt(lam))))
    return float(np.log(np.sum(lam**n)) / (1.0 - n))


def quarter_blocks(L: int):
    if L % 4:
        raise ValueError(f"I_3 needs L divisible by 4, got L={L}")
    q = L // 4
    return tuple(tuple(range(k * q, (k + 1) * q)) for k in range(4))


def tripartite_i3(entropies: dict) -> float:
    """S_A + S_B + S_C - S_AB - S_AC - S_BC + S_ABC from a dict keyed by region name.

    For a pure state pass ``S_D`` (the complement of ABC) in place of ``S_ABC``.
    """
    s_abc = entropies["ABC"] if "ABC" in entropies else entropies["D"]
    # pairing A with C and AB with BC makes the A <-> C reflection bitwise exact
    singles = (entropies["A"] + entropies["C"]) + entropies["B"]
    pairs = (entropies["AB"] + entropies["BC"]) + entropies["AC"]
    return singles - pairs + s_abc


def bootstrap(samples, statistic=np.mean, n_resamples: int = 1000, seed: int = 0):
    """Nonparametric bootstrap: (statistic of the data, bootstrap standard error)."""
    x = np.asarray(samples)
    if len(x) < 2:
        raise InsufficientData("bootstrap needs at least 2 samples")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(x), size=(n_resamples, len(x)))
    stats = np.array([statistic(x[i]) for i in idx])
    return float(statistic(x)), float(np.std(stats, ddof=1))


# -- data tables ----------------------------------------------------------------


@dataclass
class DataTable:
    """Rows of (L, rate, Renyi index, mean I_3, standard error, n_trajectories).

    ``samples`` optionally keeps the per-trajectory values keyed by (L, rate, index)
    so that the collapse bootstrap can resample trajectories.
    """

    L: np.ndarray
    rate: np.ndarray
    index: np.ndarray
    mean: np.ndarray
    std_error: np.ndarray
    n: np.ndarray
    samples: dict = field(default_factory=dict)

    def __post_init__(self):
        self.L = np.asarray(self.L, dtype=int)
        self.rate = np.asarray(self.rate, dtype=float)
        self.index = np.asarray([parse_index(v) for v in np.atleast_1d(self.index)], dtype=float)
        self.mean = np.asarray(self.mean, dtype=float)
        self.std_error = np.asarray(self.std_error, dtype=float)
        self.n = np.asarray(self.n, dtype=int)
        if np.any(self.n < 2):
            raise ValueError("every row needs at least 2 trajectories")
        if np.any(self.std_error < 0):
            raise ValueError("negative standard error")

    def __len__(self):
        return len(self.L)

    @classmethod
    def from_samples(cls, samples: dict):
        """Build from {(L, rate, index): array of per-trajectory values}."""
        keys = sorted(samples, key=lambda k: (k[0], k[1], parse_index(k[2])))
        rows = []
        for key in keys:
            x = np.asarray(samples[key], dtype=float)
            rows.append((key[0], key[1], parse_index(key[2]), x.mean(), x.std(ddof=1) / np.sqrt(len(x)), len(x)))
        cols = list(zip(*rows))
        return cls(*cols, samples={(k[0], k[1], parse_index(k[2])): np.asarray(v, dtype=float) for k, v in samples.items()})

    def select(self, index):
        m = self.index == parse_index(index)
        sub = {k: v for k, v in self.samples.items() if k[2] == parse_index(index)}
        return DataTable(self.L[m], self.rate[m], self.index[m], self.mean[m], self.std_error[m], self.n[m], sub)

    def indices(self):
        return sorted(set(self.index.tolist()))


def read_table_csv(path) -> DataTable:
    """Read a summary CSV with columns L, rate (or p / gamma), index, mean, std_error, n."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty file")
        rate_col = next((c for c in ("rate", "p", "gamma") if c in reader.fieldnames), None)
        need = {"L", "index", "mean", "std_error", "n"}
        missing = need - set(reader.fieldnames)
        if rate_col is None or missing:
            raise ValueError(f"{path}: missing columns {sorted(missing | ({'rate'} if rate_col is None else set()))}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append(
                    (int(row["L"]), float(row[rate_col]), parse_index(row["index"]),
                     float(row["mean"]), float(row["std_error"]), int(row["n"]))
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: malformed row at line {lineno}: {row}") from exc
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return DataTable(*zip(*rows))


# -- finite-size scaling ------------------------------------------------------------


@dataclass
class CollapseResult:
    p_c: float
    nu: float
    quality: float
    p_c_err: float = float("nan")
    nu_err: float = float("nan")
    n_boot: int = 0
    p_c_ci: tuple = (float("nan"), float("nan"))
    nu_ci: tuple = (float("nan"), float("nan"))

    def to_dict(self):
        return {
            "p_c": self.p_c,
            "nu": self.nu,
            "quality": self.quality,
            "p_c_err": self.p_c_err,
            "nu_err": self.nu_err,
            "n_boot": self.n_boot,
        }


def _collapse_cost(pc, nu, L, rate, y, dy, groups):
    """Leave-one-size-out master-curve residual, vectorized over (pc, nu) arrays.

    Every point is compared with the straight line through its two bracketing
    neighbors (in scaled x) from each *other* system size; the squared deviation
    is normalized by the combined variance. Points without bracketing neighbors
    in any other size do not contribute.
    """
    pc = np.asarray(pc, dtype=float)[..., None]
    nu = np.asarray(nu, dtype=float)[..., None]
    x = (rate - pc) * L ** (1.0 / nu)  # (..., n)
    total = np.zeros(pc.shape[:-1])
    count = np.zeros(pc.shape[:-1])
    for g in groups:
        xg = x[..., g]  # sorted by rate within a size -> sorted in x
        yg, dyg = y[g], dy[g]
        others = np.setdiff1d(np.arange(len(L)), g)
        xo = x[..., others]
        # batched searchsorted (left): number of size-g points below each other point
        j = np.sum(xg[..., None, :] < xo[..., :, None], axis=-1)
        inside = (j > 0) & (j < len(g))
        jl = np.clip(j - 1, 0, len(g) - 1)
        jr = np.clip(j, 0, len(g) - 1)
        x0 = np.take_along_axis(xg, jl, -1)
        x1 = np.take_along_axis(xg, jr, -1)
        w = np.where(x1 > x0, (xo - x0) / np.where(x1 > x0, x1 - x0, 1.0), 0.0)
        yl, yr = yg[jl], yg[jr]
        dyl, dyr = dyg[jl], dyg[jr]
        ybar = yl + w * (yr - yl)
        var = dy[others] ** 2 + ((1 - w) * dyl) ** 2 + (w * dyr) ** 2
        dev = (y[others] - ybar) ** 2 / var
        total = total + np.sum(np.where(inside, dev, 0.0), axis=-1)
        count = count + np.sum(inside, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cost = np.where(count > 0, total / count, np.inf)
    return cost


def _prepare(table: DataTable):
    sizes = np.unique(table.L)
    if len(sizes) < 3:
        raise InsufficientData(f"collapse needs at least 3 system sizes, got {len(sizes)}")
    order = np.lexsort((table.rate, table.L))
    L = table.L[order].astype(float)
    rate = table.rate[order]
    y = table.mean[order]
    dy = np.maximum(table.std_error[order], 1e-12)
    groups = [np.nonzero(L == s)[0] for s in sizes]
    if any(len(g) < 5 for g in groups):
        raise InsufficientData("collapse needs at least 5 rate points per size")
    if len(np.unique(table.index)) > 1:
        raise ValueError("collapse one Renyi index at a time")
    return L, rate, y, dy, groups


def _fit(L, rate, y, dy, groups, pc_range, nu_range, grid, x0=None):
    if x0 is None:
        pcs = np.linspace(*pc_range, grid)
        nus = np.linspace(*nu_range, grid)
        pp, nn = np.meshgrid(pcs, nus, indexing="ij")
        cost = _collapse_cost(pp, nn, L, rate, y, dy, groups)
        if not np.any(np.isfinite(cost)):
            raise DegenerateCollapse("no overlapping data at any grid point")
        finite = cost[np.isfinite(cost)]
        if finite.max() - finite.min() < 1e-12 * max(1.0, abs(finite.min())):
            raise DegenerateCollapse("collapse residual is flat over the grid")
        k = np.nanargmin(np.where(np.isfinite(cost), cost, np.nan))
        x0 = (pp.flat[k], nn.flat[k])

    def f(v):
        if v[1] <= nu_range[0] * 0.5:
            return np.inf
        return float(_collapse_cost(v[0], v[1], L, rate, y, dy, groups))

    res = minimize(f, np.asarray(x0, dtype=float), method="Nelder-Mead", options={"xatol": 1e-6, "fatol": 1e-9})
    pc, nu = res.x
    lo, hi = rate.min(), rate.max()
    if not (lo <= pc <= hi) or nu <= 0:
        pc, nu = x0
        return float(pc), float(nu), f(x0)
    return float(pc), float(nu), float(res.fun)


def fss_collapse(
    table: DataTable,
    nu_range=(0.3, 4.0),
    grid: int = 200,
    n_boot: int = 200,
    seed: int = 0,
    ci: float = 0.95,
) -> CollapseResult:
    """Fit I_3 = F((p - p_c) L^(1/nu)) by minimizing the master-curve residual.

    A (p_c, nu) grid spanning the data seeds a Nelder-Mead refinement. Errors come
    from a bootstrap: per-trajectory samples are resampled when the table carries
    them, otherwise each mean is redrawn from N(mean, std_error). ``p_c_err`` and
    ``nu_err`` are half-widths of the central ``ci`` percentile interval.
    """
    L, rate, y, dy, groups = _prepare(table)
    pc_range = (rate.min(), rate.max())
    pc, nu, q = _fit(L, rate, y, dy, groups, pc_range, nu_range, grid)
    result = CollapseResult(pc, nu, q)
    if n_boot <= 0:
        return result

    rng = np.random.default_rng(seed)
    order = np.lexsort((table.rate, table.L))
    keys = [(int(table.L[i]), float(table.rate[i]), float(table.index[i])) for i in order]
    have_samples = all(k in table.samples for k in keys)
    boots = []
    for _ in range(n_boot):
        if have_samples:
            yb, dyb = np.empty_like(y), np.empty_like(dy)
            for r, k in enumerate(keys):
                s = table.samples[k]
                draw = s[rng.integers(0, len(s), len(s))]
                yb[r] = draw.mean()
                dyb[r] = max(draw.std(ddof=1) / np.sqrt(len(s)), 1e-12)
        else:
            yb = y + dy * rng.standard_normal(len(y))
            dyb = dy
        try:
            boots.append(_fit(L, rate, yb, dyb, groups, pc_range, nu_range, grid, x0=(pc, nu))[:2])
        except DegenerateCollapse:
            continue
    if len(boots) < 2:
        log.warning("bootstrap produced fewer than 2 usable fits")
        return result
    b = np.array(boots)
    a = (1 - ci) / 2
    pc_lo, pc_hi = np.quantile(b[:, 0], [a, 1 - a])
    nu_lo, nu_hi = np.quantile(b[:, 1], [a, 1 - a])
    result.p_c_err = float((pc_hi - pc_lo) / 2)
    result.nu_err = float((nu_hi - nu_lo) / 2)
    result.p_c_ci = (float(pc_lo), float(pc_hi))
    result.nu_ci = (float(nu_lo), float(nu_hi))
    result.n_boot = len(boots)
    return result


def synthetic_table(
    rng,
    p_c: float = 0.15,
    nu: float = 1.3,
    noise: float = 0.02,
    sizes=(8, 12, 16, 20),
    rates=None,
    n: int = 100,
    scaling=np.tanh,
) -> DataTable:
    """Scaling-form data y = F((p - p_c) L^(1/nu)) plus Gaussian noise of width ``noise``."""
    rates = np.linspace(p_c - 0.06, p_c + 0.06, 7) if rates is None else np.asarray(rates)
    rows = []
    for L in sizes:
        for p in rates:
            y = scaling((p - p_c) * L ** (1.0 / nu))
            rows.append((L, p, 1.0, y + noise * rng.standard_normal(), noise, n))
    return DataTable(*zip(*rows))


def curve_crossings(table: DataTable, index=1.0):
    """Rates where the linearly interpolated mean curves of consecutive sizes cross.

    Returns a list of (L_small, L_large, crossing rate or nan).
    """
    sub = table.select(index)
    sizes = np.unique(sub.L)
    out = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        ma, mb = sub.L == a, sub.L == b
        ra, rb = sub.rate[ma], sub.rate[mb]
        common = np.intersect1d(ra, rb)
        ya = np.interp(common, np.sort(ra), sub.mean[ma][np.argsort(ra)])
        yb = np.interp(common, np.sort(rb), sub.mean[mb][np.argsort(rb)])
        d = yb - ya
        cross = np.nan
        for k in range(len(common) - 1):
            if d[k] == 0:
                cross = common[k]
                break
            if d[k] * d[k + 1] < 0:
                cross = common[k] + (common[k + 1] - common[k]) * d[k] / (d[k] - d[k + 1])
                break
        out.append((int(a), int(b), float(cross)))
    return out
