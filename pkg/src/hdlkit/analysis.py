"""Corpus-level analyses: category composition, coping conditionals, and
interrupted time-series regression on monthly label proportions."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .schema import DistributionalLabel, LabelSchema, PostLabelSet, default_schema, normalize_drop_na

__all__ = [
    "CompositionRow",
    "CompositionTable",
    "ItsSeries",
    "ItsFit",
    "composition_table",
    "coping_conditionals",
    "monthly_proportions",
    "its_fit",
    "write_composition_csv",
    "write_coping_csv",
    "write_its_csv",
    "write_its_series_csv",
]

logger = logging.getLogger(__name__)

# March 2020 in months-since-January-2018.
DEFAULT_INTERVENTION_MONTH = 26


class AnalysisError(ValueError):
    pass


def _is_lonely(labels: PostLabelSet) -> bool:
    v = labels.lonely.values
    return v[1] > v[0]


@dataclass(frozen=True)
class CompositionRow:
    group: str
    category: str
    labels: tuple[str, ...]
    percentages: tuple[float, ...]


@dataclass(frozen=True)
class CompositionTable:
    rows: tuple[CompositionRow, ...]

    def row(self, group: str, category: str) -> CompositionRow:
        for r in self.rows:
            if r.group == group and r.category == category:
                return r
        raise KeyError((group, category))


def composition_table(
    labels: Sequence[PostLabelSet],
    groups: Sequence[str],
    schema: Optional[LabelSchema] = None,
) -> CompositionTable:
    """Per (group, fine-grained category): average the distributional labels of the
    group's lonely posts, remove NA mass, and report percentages (rows sum to 100)."""
    schema = schema or default_schema()
    if len(labels) != len(groups):
        raise AnalysisError("labels and groups must be parallel")
    by_group: dict[str, list[PostLabelSet]] = {}
    for ls, g in zip(labels, groups):
        if _is_lonely(ls):
            by_group.setdefault(str(g), []).append(ls)
    if not by_group:
        raise AnalysisError("no lonely-labeled posts to tabulate")

    rows: list[CompositionRow] = []
    for group in sorted(by_group):
        posts = by_group[group]
        for block in schema.fine_grained_blocks:
            mean = np.mean([ls.by_name(block.name).values for ls in posts], axis=0)
            d = DistributionalLabel(block, tuple(float(v) for v in mean))
            if block.has_na:
                try:
                    d = normalize_drop_na(d)
                except Exception as exc:
                    raise AnalysisError(
                        f"group {group!r}, category {block.name!r}: {exc}"
                    ) from exc
            rows.append(
                CompositionRow(
                    group=group,
                    category=block.name,
                    labels=d.block.labels,
                    percentages=tuple(100.0 * v for v in d.values),
                )
            )
    return CompositionTable(rows=tuple(rows))


def coping_conditionals(
    labels: Sequence[PostLabelSet],
    condition_category: str,
    condition_label: str,
    mode: str = "soft",
    schema: Optional[LabelSchema] = None,
) -> dict[str, float]:
    """Distribution over interaction labels conditional on a loneliness-form label.

    Soft mode weights each lonely post by its (NA-dropped) mass on the
    condition label: P(interaction=j | cond=i) =
    sum_posts d_i * a_j / sum_posts d_i. Argmax mode assigns each post its
    argmax condition and interaction labels and counts. Posts with all their
    condition mass on NA are skipped in both modes.
    """
    schema = schema or default_schema()
    if condition_category not in ("duration", "context", "interpersonal"):
        raise AnalysisError(
            f"condition category must be duration/context/interpersonal, got {condition_category!r}"
        )
    if mode not in ("soft", "argmax"):
        raise AnalysisError(f"mode must be 'soft' or 'argmax', got {mode!r}")
    block = schema.block(condition_category)
    interaction = schema.block("interaction")
    cond_idx = block.without_na().index_of(condition_label)

    weights = np.zeros(interaction.size, dtype=np.float64)
    denom = 0.0
    n_assigned = 0
    for ls in labels:
        if not _is_lonely(ls):
            continue
        raw = ls.by_name(condition_category)
        na = block.na_index
        non_na = sum(v for i, v in enumerate(raw.values) if i != na)
        if non_na <= 0.0:
            continue
        d = normalize_drop_na(raw)
        a = np.asarray(ls.by_name("interaction").values, dtype=np.float64)
        if mode == "soft":
            weights += d.values[cond_idx] * a
            denom += d.values[cond_idx]
        else:
            if int(np.argmax(d.values)) == cond_idx:
                weights[int(np.argmax(a))] += 1.0
                denom += 1.0
                n_assigned += 1
    if denom <= 0.0:
        raise AnalysisError(
            f"no mass on {condition_category}={condition_label!r}; conditional undefined"
        )
    probs = weights / denom
    return {label: float(p) for label, p in zip(interaction.labels, probs)}


@dataclass(frozen=True)
class ItsSeries:
    """Monthly proportion series: months are strictly increasing indices since Jan 2018."""

    months: tuple[int, ...]
    proportions: tuple[float, ...]
    intervention_month: int = DEFAULT_INTERVENTION_MONTH

    def __post_init__(self) -> None:
        if len(self.months) != len(self.proportions):
            raise AnalysisError("months and proportions must be parallel")
        if any(b <= a for a, b in zip(self.months, self.months[1:])):
            raise AnalysisError("months must be strictly increasing")
        if not all(np.isfinite(self.proportions)):
            raise AnalysisError("non-finite proportion values")


def monthly_proportions(
    labels: Sequence[PostLabelSet],
    month_indices: Sequence[int],
    category: str,
    label: str,
    intervention_month: int = DEFAULT_INTERVENTION_MONTH,
    schema: Optional[LabelSchema] = None,
) -> ItsSeries:
    """Mean monthly mass on one label; NA-bearing categories are renormalized first.

    For the binary 'lonely' category every post contributes; for fine-grained
    categories only lonely posts do, and posts whose mass is entirely NA are
    skipped. Months with no contributing posts are dropped with a warning.
    """
    schema = schema or default_schema()
    if len(labels) != len(month_indices):
        raise AnalysisError("labels and month_indices must be parallel")
    if not labels:
        raise AnalysisError("empty group")
    block = schema.block(category)
    is_binary = category == schema.lonely_block.name
    label_idx = block.index_of(label) if is_binary or not block.has_na else block.without_na().index_of(label)

    masses: dict[int, list[float]] = {}
    for ls, month in zip(labels, month_indices):
        if is_binary:
            masses.setdefault(int(month), []).append(ls.lonely.values[label_idx])
            continue
        if not _is_lonely(ls):
            continue
        d = ls.by_name(category)
        if block.has_na:
            na = block.na_index
            if sum(v for i, v in enumerate(d.values) if i != na) <= 0.0:
                continue
            d = normalize_drop_na(d)
        masses.setdefault(int(month), []).append(d.values[label_idx])

    all_months = sorted(set(int(m) for m in month_indices))
    kept_months = []
    props = []
    for m in all_months:
        vals = masses.get(m)
        if not vals:
            logger.warning("month %d has no contributing posts for %s=%s; excluded", m, category, label)
            continue
        kept_months.append(m)
        props.append(float(np.mean(vals)))
    if not kept_months:
        raise AnalysisError(f"no month has contributing posts for {category}={label!r}")
    return ItsSeries(
        months=tuple(kept_months), proportions=tuple(props), intervention_month=intervention_month
    )


@dataclass(frozen=True)
class ItsFit:
    """Segmented-regression estimates for Y = b0 + b1*T + b2*D + b3*M + e.

    D indicates the intervention (T >= intervention month, inclusive); M counts
    months since the intervention (0 at the intervention month itself). b2 is
    the immediate level change, b3 the slope change.
    """

    coef: tuple[float, float, float, float]
    stderr: tuple[float, float, float, float]
    t_stats: tuple[float, float, float, float]
    p_values: tuple[float, float, float, float]
    ci95: tuple[tuple[float, float], ...]
    ci90: tuple[tuple[float, float], ...]
    residuals: tuple[float, ...]
    fitted: tuple[float, ...]
    r_squared: float
    n_obs: int
    df_resid: int
    intervention_month: int

    TERMS = ("intercept", "trend", "level_change", "slope_change")


def its_design(months: Sequence[int], intervention_month: int) -> np.ndarray:
    t = np.asarray(months, dtype=np.float64)
    d = (t >= intervention_month).astype(np.float64)
    m = np.maximum(0.0, t - intervention_month)
    return np.column_stack([np.ones_like(t), t, d, m])


def its_fit(series: ItsSeries) -> ItsFit:
    """OLS with classical standard errors, Student-t inference on n-4 df."""
    n = len(series.months)
    if n < 6:
        raise AnalysisError(f"need at least 6 observations, got {n}")
    t = np.asarray(series.months, dtype=np.float64)
    pre = t < series.intervention_month
    if not pre.any() or pre.all():
        raise AnalysisError("series must span both sides of the intervention month")

    x = its_design(series.months, series.intervention_month)
    y = np.asarray(series.proportions, dtype=np.float64)
    coef, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    if rank < x.shape[1]:
        raise AnalysisError("rank-deficient design; not enough variation around the intervention")

    fitted = x @ coef
    resid = y - fitted
    df = n - x.shape[1]
    rss = float(resid @ resid)
    sigma2 = rss / df
    xtx_inv = np.linalg.inv(x.T @ x)
    se = np.sqrt(sigma2 * np.diag(xtx_inv))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stats = np.where(se > 0, coef / se, np.inf * np.sign(coef))
    p_values = 2.0 * stats.t.sf(np.abs(t_stats), df)
    crit95 = stats.t.ppf(0.975, df)
    crit90 = stats.t.ppf(0.95, df)
    ci95 = tuple((float(b - crit95 * s), float(b + crit95 * s)) for b, s in zip(coef, se))
    ci90 = tuple((float(b - crit90 * s), float(b + crit90 * s)) for b, s in zip(coef, se))
    tss = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if tss == 0.0 else 1.0 - rss / tss

    return ItsFit(
        coef=tuple(float(b) for b in coef),
        stderr=tuple(float(s) for s in se),
        t_stats=tuple(float(v) for v in t_stats),
        p_values=tuple(float(v) for v in p_values),
        ci95=ci95,
        ci90=ci90,
        residuals=tuple(float(r) for r in resid),
        fitted=tuple(float(f) for f in fitted),
        r_squared=float(r_squared),
        n_obs=n,
        df_resid=df,
        intervention_month=series.intervention_month,
    )


# --- CSV emission (fixed column orders) --------------------------------------

def write_composition_csv(path: str, table: CompositionTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "category", "label", "percent"])
        for row in table.rows:
            for label, pct in zip(row.labels, row.percentages):
                writer.writerow([row.group, row.category, label, repr(pct)])


def write_coping_csv(
    path: str, conditionals: dict[str, dict[str, float]], condition_category: str
) -> None:
    """One row per (condition label, interaction label) probability."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition_category", "condition_label", "interaction_label", "probability"])
        for cond_label in conditionals:
            for int_label, p in conditionals[cond_label].items():
                writer.writerow([condition_category, cond_label, int_label, repr(p)])


def write_its_csv(path: str, fit: ItsFit) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["term", "coef", "stderr", "t", "p_value", "ci95_low", "ci95_high", "ci90_low", "ci90_high"]
        )
        for i, term in enumerate(ItsFit.TERMS):
            writer.writerow(
                [
                    term,
                    repr(fit.coef[i]),
                    repr(fit.stderr[i]),
                    repr(fit.t_stats[i]),
                    repr(fit.p_values[i]),
                    repr(fit.ci95[i][0]),
                    repr(fit.ci95[i][1]),
                    repr(fit.ci90[i][0]),
                    repr(fit.ci90[i][1]),
                ]
            )
        writer.writerow(["r_squared", repr(fit.r_squared), "", "", "", "", "", "", ""])
        writer.writerow(["n_obs", fit.n_obs, "", "", "", "", "", "", ""])


def write_its_series_csv(path: str, series: ItsSeries, fit: Optional[ItsFit] = None) -> None:
    """Plot-ready series: month, observed Y, fitted Y, and pre/post segment id."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["month_index", "proportion", "fitted", "segment"])
        fitted = fit.fitted if fit is not None else [None] * len(series.months)
        for m, y, f in zip(series.months, series.proportions, fitted):
            seg = "post" if m >= series.intervention_month else "pre"
            writer.writerow([m, repr(y), "" if f is None else repr(f), seg])
