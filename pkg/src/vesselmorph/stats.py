"""Group statistics: descriptive summaries, one-way ANOVA and pairwise mean differences.

The t and F distribution functions are evaluated through the regularized
incomplete beta function, computed with the modified Lentz algorithm on its
continued fraction (switching to the symmetric form when ``x`` is past the
mean of the beta distribution, where the fraction converges fastest).
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .ingest import GROUP_ORDER, RefractionGroup


class InsufficientData(ValueError):
    pass


# ------------------------------------------------------------ distributions

_TINY = 1e-300
_EPS = 1e-16


def _beta_cf(a, b, x):
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, 100000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a, b, x):
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    lbt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
           + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lbt) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(lbt) * _beta_cf(b, a, 1.0 - x) / b


def t_sf(t, df):
    """Upper tail P(T > t) of Student's t."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    half = 0.5 * betainc(0.5 * df, 0.5, df / (df + t * t))
    return half if t >= 0 else 1.0 - half


def t_cdf(t, df):
    return 1.0 - t_sf(t, df) if t >= 0 else t_sf(-t, df)


def t_two_sided(t, df):
    """Two-sided p-value for a t statistic."""
    if math.isinf(t):
        return 0.0
    return betainc(0.5 * df, 0.5, df / (df + t * t))


def t_ppf(q, df):
    """Quantile of Student's t (bisection on the CDF, then Newton polish)."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    if q == 0.5:
        return 0.0
    if q < 0.5:
        return -t_ppf(1.0 - q, df)
    lo, hi = 0.0, 1.0
    while t_cdf(hi, df) < q:
        lo, hi = hi, hi * 2.0
        if hi > 1e12:
            return math.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, df) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    x = 0.5 * (lo + hi)
    for _ in range(3):
        dens = t_pdf(x, df)
        if dens <= 0:
            break
        step = (t_cdf(x, df) - q) / dens
        if not lo - 1e-9 <= x - step <= hi + 1e-9:
            break
        x -= step
    return x


def t_pdf(t, df):
    lc = math.lgamma(0.5 * (df + 1)) - math.lgamma(0.5 * df) - 0.5 * math.log(df * math.pi)
    return math.exp(lc - 0.5 * (df + 1) * math.log1p(t * t / df))


def f_sf(f, d1, d2):
    """Upper tail P(F > f) of the F distribution with (d1, d2) degrees of freedom."""
    if d1 <= 0 or d2 <= 0:
        raise ValueError("degrees of freedom must be positive")
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f))


def f_cdf(f, d1, d2):
    return 1.0 - f_sf(f, d1, d2)


# ------------------------------------------------------------ samples / tests

@dataclass(frozen=True)
class GroupSample:
    group: str
    values: tuple

    def __init__(self, group, values):
        object.__setattr__(self, "group", RefractionGroup(group).value if isinstance(group, RefractionGroup) else str(group))
        object.__setattr__(self, "values", tuple(float(v) for v in values))

    @property
    def n(self):
        return len(self.values)

    @property
    def mean(self):
        return math.fsum(self.values) / self.n


def _ss(values, mean):
    return math.fsum((v - mean) ** 2 for v in values)


@dataclass(frozen=True)
class Description:
    n: int
    mean: float
    sd: float
    ci95_low: float
    ci95_high: float


def describe(sample, level=0.95):
    vals = sample.values if isinstance(sample, GroupSample) else tuple(float(v) for v in sample)
    n = len(vals)
    if n < 2:
        raise InsufficientData(f"need at least 2 values, got {n}")
    mean = math.fsum(vals) / n
    sd = math.sqrt(_ss(vals, mean) / (n - 1))
    half = t_ppf(0.5 + level / 2, n - 1) * sd / math.sqrt(n)
    return Description(n, mean, sd, mean - half, mean + half)


@dataclass(frozen=True)
class AnovaResult:
    f_stat: float
    df_between: int
    df_within: int
    p_value: float
    mse_within: float
    ss_between: float
    ss_within: float


def one_way_anova(samples):
    samples = list(samples)
    if len(samples) < 2:
        raise InsufficientData("ANOVA needs at least two groups")
    for s in samples:
        if s.n < 2:
            raise InsufficientData(f"group {s.group} has {s.n} value(s)")
    allv = [v for s in samples for v in s.values]
    grand = math.fsum(allv) / len(allv)
    ssb = math.fsum(s.n * (s.mean - grand) ** 2 for s in samples)
    ssw = math.fsum(_ss(s.values, s.mean) for s in samples)
    dfb, dfw = len(samples) - 1, len(allv) - len(samples)
    msw = ssw / dfw
    # relative guard so that shifted copies of identical groups still give F = 0
    scale = math.fsum(abs(v) for v in allv) / len(allv)
    if ssb <= 1e-24 * max(1.0, scale * scale) * len(allv):
        return AnovaResult(0.0, dfb, dfw, 1.0, msw, 0.0, ssw)
    if ssw == 0:
        return AnovaResult(math.inf, dfb, dfw, 0.0, 0.0, ssb, 0.0)
    f = (ssb / dfb) / msw
    return AnovaResult(f, dfb, dfw, f_sf(f, dfb, dfw), msw, ssb, ssw)


@dataclass(frozen=True)
class PairwiseComparison:
    group_a: str
    group_b: str
    md: float
    ci_low: float
    ci_high: float
    p_value: float
    se: float


def pairwise_md(samples, a, b, anova, level=0.95, n_comparisons=1):
    """Fisher LSD comparison of groups ``a`` and ``b`` using the pooled MSE.

    ``n_comparisons`` > 1 applies a Bonferroni correction to both the p-value
    and the interval, so the two stay consistent.
    """
    by = {s.group: s for s in samples}
    a = a.value if isinstance(a, RefractionGroup) else a
    b = b.value if isinstance(b, RefractionGroup) else b
    if a == b:
        raise ValueError("cannot compare a group with itself")
    sa, sb = by[a], by[b]
    md = sa.mean - sb.mean
    se = math.sqrt(anova.mse_within * (1.0 / sa.n + 1.0 / sb.n))
    alpha = (1.0 - level) / n_comparisons
    tcrit = t_ppf(1.0 - alpha / 2, anova.df_within)
    if se == 0:
        p = 1.0 if md == 0 else 0.0
    else:
        p = min(1.0, t_two_sided(md / se, anova.df_within) * n_comparisons)
    return PairwiseComparison(a, b, md, md - tcrit * se, md + tcrit * se, p, se)


# ------------------------------------------------------------ cohort tables

PARAMETERS = ("ma_deg", "ba_deg_mean", "bc_mean", "bea_deg_mean", "bec_mean")
PARAMETER_LABELS = {
    "ma_deg": "MA", "ba_deg_mean": "BA", "bc_mean": "BC", "bea_deg_mean": "BEA", "bec_mean": "BEC",
}
SYSTEMS = ("Artery", "Vein")

TABLE1_COLUMNS = ["parameter", "system", "group", "n", "mean", "sd", "ci_low", "ci_high", "p_value"]
PAIR_COLUMNS = ["parameter", "system", "comparison", "group_a", "group_b", "md", "ci_low", "ci_high", "p_value"]


@dataclass
class CohortTable:
    table1: list
    table2: list
    table3: list
    posthoc: str = "lsd"

    def to_json(self):
        return {"posthoc": self.posthoc, "table1": self.table1, "table2": self.table2, "table3": self.table3}

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {}
        for name, rows, cols in (("table1", self.table1, TABLE1_COLUMNS), ("table2", self.table2, PAIR_COLUMNS),
                                 ("table3", self.table3, PAIR_COLUMNS)):
            paths[name] = out / f"{name}.csv"
            paths[name].write_text(rows_to_csv(rows, cols), encoding="utf-8")
        paths["json"] = out / "tables.json"
        paths["json"].write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
        return paths


def _fmt(v):
    if v is None:
        return "missing"
    if isinstance(v, float):
        return f"{v:.6g}" if (v != 0 and (abs(v) < 1e-4 or abs(v) >= 1e6)) else f"{v:.6f}"
    return str(v)


def rows_to_csv(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _to_float(v):
    if v is None or v == "" or v == "None":
        return None
    f = float(v)
    return f if math.isfinite(f) else None


def collect_samples(rows, groups, parameter, system, subjects=None):
    """Per-group values of one parameter; with ``subjects``, values are averaged per subject."""
    buckets = {g.value: {} for g in GROUP_ORDER}
    for r in rows:
        if r.get("system") != system or r.get("status", "ok") != "ok":
            continue
        g = groups.get(r["id"])
        if g is None:
            continue
        g = g.value if isinstance(g, RefractionGroup) else RefractionGroup(g).value
        v = _to_float(r.get(parameter))
        if v is None:
            continue
        unit = (subjects or {}).get(r["id"]) or r["id"]
        buckets[g].setdefault(unit, []).append(v)
    out = {}
    for g, units in buckets.items():
        out[g] = GroupSample(g, [math.fsum(units[u]) / len(units[u]) for u in sorted(units)])
    return out


def cohort_tables(rows, groups, parameters=PARAMETERS, systems=SYSTEMS, posthoc="lsd", subjects=None):
    """Build the three summary tables from flattened metric rows.

    ``groups`` maps image id to refraction group. Cells that cannot be computed
    (a group with fewer than two images, or an empty parameter) are None.
    """
    if posthoc not in ("lsd", "bonferroni"):
        raise ValueError("posthoc must be 'lsd' or 'bonferroni'")
    present = {RefractionGroup(g).value if not isinstance(g, RefractionGroup) else g.value for g in groups.values()}
    if len(present) < 2:
        raise InsufficientData("need at least two refraction groups")
    names = [g.value for g in GROUP_ORDER]
    pairs2 = [(names[0], g) for g in names[1:]]
    pairs3 = list(itertools.combinations(names[1:], 2))
    m = len(pairs2) + len(pairs3) if posthoc == "bonferroni" else 1
    t1, t2, t3 = [], [], []
    for param in parameters:
        for system in systems:
            samples = collect_samples(rows, groups, param, system, subjects)
            usable = [samples[g] for g in names if samples[g].n >= 2]
            anova = one_way_anova(usable) if len(usable) >= 2 else None
            p_omni = anova.p_value if anova else None
            for g in names:
                s = samples[g]
                row = {"parameter": PARAMETER_LABELS.get(param, param), "system": system, "group": g, "n": s.n,
                       "mean": s.mean if s.n else None, "sd": None, "ci_low": None, "ci_high": None,
                       "p_value": p_omni}
                if s.n >= 2:
                    d = describe(s)
                    row.update(sd=d.sd, ci_low=d.ci95_low, ci_high=d.ci95_high)
                t1.append(row)
            ok = {s.group for s in usable}
            for target, pairs in ((t2, pairs2), (t3, pairs3)):
                for a, b in pairs:
                    row = {"parameter": PARAMETER_LABELS.get(param, param), "system": system,
                           "comparison": f"{a} vs {b}", "group_a": a, "group_b": b,
                           "md": None, "ci_low": None, "ci_high": None, "p_value": None}
                    if anova and a in ok and b in ok:
                        c = pairwise_md(usable, a, b, anova, n_comparisons=m)
                        row.update(md=c.md, ci_low=c.ci_low, ci_high=c.ci_high, p_value=c.p_value)
                    target.append(row)
    return CohortTable(t1, t2, t3, posthoc)


def read_tables_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


__all__ = [
    "AnovaResult", "CohortTable", "Description", "GroupSample", "InsufficientData", "PairwiseComparison",
    "betainc", "cohort_tables", "collect_samples", "describe", "f_cdf", "f_sf", "one_way_anova",
    "pairwise_md", "t_cdf", "t_ppf", "t_sf", "t_two_sided",
]
