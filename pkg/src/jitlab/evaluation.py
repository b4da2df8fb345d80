"""Model evaluation over period grids.

Two training schemes: ``short`` trains on a single period, ``long`` on
everything up to and including it; each trained model is scored on every
later period with AUC (rank-based, ties count half) and the Brier score.
Per-family explanatory power is the Wald chi-square of the family's
coefficient block, normalized across testable families, and its
train-vs-future drift is the FISDiff.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from .metrics import ChangeMetrics
from .model import FittedModel, fit_from_rows, predict_rows
from .stats import midranks

log = logging.getLogger(__name__)

SCHEMES = ("short", "long")


class EvaluationError(ValueError):
    pass


def auc(scores, labels) -> float:
    """Probability a positive outscores a negative; ties count half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("auc needs both classes present")
    ranks = midranks(scores)
    rank_sum = float(ranks[labels].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def brier(probs, labels) -> float:
    """Mean squared distance between predicted probability and outcome."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if np.any((probs < 0) | (probs > 1)):
        raise EvaluationError("probabilities must lie in [0, 1]")
    return float(np.mean((probs - labels) ** 2))


@dataclass(frozen=True)
class PeriodEval:
    train_period: int
    test_period: int
    scheme: str
    auc: float
    brier: float
    n_train: int
    n_test: int

    def to_dict(self) -> dict:
        return {
            "train_period": self.train_period,
            "test_period": self.test_period,
            "scheme": self.scheme,
            "auc": self.auc,
            "brier": self.brier,
            "n_train": self.n_train,
            "n_test": self.n_test,
        }


@dataclass
class SchemeResult:
    scheme: str
    evals: list[PeriodEval] = field(default_factory=list)
    models: dict[int, FittedModel] = field(default_factory=dict)
    self_scores: dict[int, tuple[float, float]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def training_rows(
    rows_by_period: dict[int, list[ChangeMetrics]], period: int, scheme: str
) -> list[ChangeMetrics]:
    if scheme == "short":
        return list(rows_by_period.get(period, []))
    if scheme == "long":
        out: list[ChangeMetrics] = []
        for p in sorted(rows_by_period):
            if p <= period:
                out.extend(rows_by_period[p])
        return out
    raise EvaluationError(f"unknown scheme {scheme!r}")


def split_periods(rows: list[ChangeMetrics]) -> dict[int, list[ChangeMetrics]]:
    rows_by_period: dict[int, list[ChangeMetrics]] = {}
    for row in rows:
        if row.period is None:
            raise EvaluationError(f"row {row.change_id} has no period assignment")
        rows_by_period.setdefault(row.period, []).append(row)
    return rows_by_period


def fit_period_models(
    rows_by_period: dict[int, list[ChangeMetrics]],
    scheme: str,
    properties: list[str],
    df: int = 3,
) -> SchemeResult:
    """One model per training period (the last period is test-only).

    ``properties`` must already be pruned (pruning happens once on the
    full corpus so family composition stays comparable over time).
    Single-class training sets are skipped with a recorded warning.
    """
    if scheme not in SCHEMES:
        raise EvaluationError(f"unknown scheme {scheme!r}")
    periods = sorted(rows_by_period)
    if len(periods) < 2:
        raise EvaluationError("need at least 2 periods to train and test")
    result = SchemeResult(scheme=scheme)
    for train_period in periods[:-1]:
        train = training_rows(rows_by_period, train_period, scheme)
        if len({r.is_bic for r in train}) < 2:
            result.warnings.append(
                f"train period {train_period} ({scheme}) is single-class; skipped"
            )
            continue
        model = fit_from_rows(train, properties, df=df, prune=False)
        result.models[train_period] = model
        train_scores = predict_rows(model, train)
        train_labels = [r.is_bic for r in train]
        result.self_scores[train_period] = (
            auc(train_scores, train_labels),
            brier(train_scores, train_labels),
        )
    return result


def score_grid(
    rows_by_period: dict[int, list[ChangeMetrics]],
    result: SchemeResult,
) -> SchemeResult:
    """Score every trained model on every later period."""
    periods = sorted(rows_by_period)
    for train_period in sorted(result.models):
        model = result.models[train_period]
        n_train = model.n_train
        for test_period in periods:
            if test_period <= train_period:
                continue
            test = rows_by_period[test_period]
            if len({r.is_bic for r in test}) < 2:
                result.warnings.append(
                    f"test period {test_period} is single-class; cell "
                    f"({train_period}, {test_period}) skipped"
                )
                continue
            scores = predict_rows(model, test)
            labels = [r.is_bic for r in test]
            result.evals.append(
                PeriodEval(
                    train_period=train_period,
                    test_period=test_period,
                    scheme=result.scheme,
                    auc=auc(scores, labels),
                    brier=brier(scores, labels),
                    n_train=n_train,
                    n_test=len(test),
                )
            )
    return result


def run_scheme(
    rows: list[ChangeMetrics],
    scheme: str,
    properties: list[str],
    df: int = 3,
) -> SchemeResult:
    """Fit per-period models and score them on all later periods."""
    rows_by_period = split_periods(rows)
    result = fit_period_models(rows_by_period, scheme, properties, df)
    return score_grid(rows_by_period, result)


# ---------------------------------------------------------------------------
# family importance


@dataclass(frozen=True)
class FamilyScore:
    wald_chi2: float
    df: int
    p_value: float
    normalized: float | None  # None when the covariance block is singular

    def to_dict(self) -> dict:
        return {
            "wald_chi2": self.wald_chi2,
            "df": self.df,
            "p_value": self.p_value,
            "normalized": self.normalized,
        }


@dataclass
class FamilyImportance:
    period: int
    scheme: str
    families: dict[str, FamilyScore]

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "scheme": self.scheme,
            "families": {k: v.to_dict() for k, v in sorted(self.families.items())},
        }


def _wald_block(model: FittedModel, idx: list[int]) -> float | None:
    """beta' V^-1 beta over the given coefficient indices, None if singular."""
    beta = model.coefficients[idx]
    block = model.covariance[np.ix_(idx, idx)]
    try:
        solved = np.linalg.solve(block, beta)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(solved)):
        return None
    wald = float(beta @ solved)
    return wald if wald >= 0 else None  # negative means a broken block


def family_importance(
    model: FittedModel,
    period: int = 0,
    scheme: str = "short",
    denominator: str = "family_sum",
) -> FamilyImportance:
    """Wald chi-square of each family's coefficient block, normalized.

    W_f = beta_f' V_f^-1 beta_f with V_f the covariance block of the
    family's terms (intercept excluded); p is the chi-square upper tail
    at df = number of terms. ``denominator`` picks the normalization:
    ``family_sum`` divides by the sum over testable families (default;
    these normalized scores add to 1), ``joint`` divides by the single
    joint statistic over every model term (cross-family covariance makes
    the two differ).
    """
    if denominator not in ("family_sum", "joint"):
        raise EvaluationError(f"unknown normalization {denominator!r}")
    raw: dict[str, tuple[float, int] | None] = {}
    for family, props in model.family_map.items():
        idx = [i + 1 for p in props for i in model.term_map[p]]
        wald = _wald_block(model, idx)
        raw[family] = None if wald is None else (wald, len(idx))
    if denominator == "family_sum":
        total = sum(v[0] for v in raw.values() if v is not None)
    else:
        all_idx = [
            i + 1
            for family, props in model.family_map.items()
            if raw[family] is not None
            for p in props
            for i in model.term_map[p]
        ]
        total = _wald_block(model, all_idx) or 0.0
    families = {}
    for family, entry in raw.items():
        if entry is None:
            families[family] = FamilyScore(float("nan"), 0, float("nan"), None)
            continue
        wald, dof = entry
        families[family] = FamilyScore(
            wald_chi2=wald,
            df=dof,
            p_value=float(chi2.sf(wald, dof)),
            normalized=(wald / total) if total > 0 else 0.0,
        )
    return FamilyImportance(period=period, scheme=scheme, families=families)


def fis_diff(imp_train: FamilyImportance, imp_future: FamilyImportance) -> dict[str, float]:
    """FISDiff per family: positive means the earlier model overestimates.

    Families untestable in either model are left out.
    """
    if set(imp_train.families) != set(imp_future.families):
        raise EvaluationError("family sets differ between importance reports")
    out = {}
    for family in sorted(imp_train.families):
        a = imp_train.families[family].normalized
        b = imp_future.families[family].normalized
        if a is None or b is None:
            continue
        out[family] = a - b
    return out


def stability_table(
    importances: dict[int, FamilyImportance],
) -> list[tuple[str, int, int, float]]:
    """(family, train period i, future period j, FISDiff) for all i < j."""
    rows = []
    periods = sorted(importances)
    for i in periods:
        for j in periods:
            if j <= i:
                continue
            for family, diff in fis_diff(importances[i], importances[j]).items():
                rows.append((family, i, j, diff))
    return rows


# ---------------------------------------------------------------------------
# grid exports


def grid_matrix(
    evals: list[PeriodEval], metric: str, delta_base: dict[int, float] | None = None
) -> tuple[list[int], list[int], list[list[float | None]]]:
    """Dense train-by-test matrix of a metric; None marks missing cells.

    With ``delta_base`` the cell value becomes metric minus the training
    period's self-score (the drift relative to how the model looked at
    training time).
    """
    train_periods = sorted({e.train_period for e in evals})
    test_periods = sorted({e.test_period for e in evals})
    grid: list[list[float | None]] = [
        [None] * len(test_periods) for _ in train_periods
    ]
    for e in evals:
        value = getattr(e, metric)
        if delta_base is not None:
            value -= delta_base[e.train_period]
        grid[train_periods.index(e.train_period)][test_periods.index(e.test_period)] = value
    return train_periods, test_periods, grid
