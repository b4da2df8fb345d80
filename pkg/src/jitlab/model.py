"""Spline logistic model over change properties.

Model construction: prune highly rank-correlated properties, prune
properties explainable from the rest (rank-based R^2), expand each
survivor into a restricted-cubic-spline basis (linear term plus
truncated-cubic terms constrained to linearity beyond the boundary
knots), and fit a maximum-likelihood logistic regression by iteratively
reweighted least squares with a tiny ridge guarding separation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .metrics import FAMILY_OF
from .stats import DegenerateInputError, midranks, spearman

log = logging.getLogger(__name__)

RCS_QUANTILES = (0.05, 0.35, 0.65, 0.95)
RHO_THRESHOLD = 0.7
R2_THRESHOLD = 0.9
RIDGE = 1e-8
MAX_ITER = 25
COEF_TOL = 1e-8
SEPARATION_COEF = 15.0


class ModelError(ValueError):
    pass


class RankDeficientError(ModelError):
    pass


PropertyTable = dict[str, np.ndarray]


def property_table(rows, properties) -> PropertyTable:
    return {p: np.array([row.value(p) for row in rows], dtype=float) for p in properties}


# ---------------------------------------------------------------------------
# property pruning


def collinearity_filter(
    table: PropertyTable,
    properties: list[str],
    threshold: float = RHO_THRESHOLD,
) -> list[str]:
    """Greedy scan in taxonomy order: keep a property unless it rank-
    correlates above the threshold with an already-kept one. Constant
    columns have no defined correlation and are dropped with a warning."""
    retained: list[str] = []
    for prop in properties:
        values = table[prop]
        if np.all(values == values[0]):
            log.warning("property %s is constant; dropped before correlation scan", prop)
            continue
        collides = False
        for kept in retained:
            if abs(spearman(values, table[kept])) > threshold:
                collides = True
                break
        if not collides:
            retained.append(prop)
    return retained


def _rank_r2(target: np.ndarray, predictors: np.ndarray) -> float:
    """R^2 of an OLS fit with intercept."""
    design = np.column_stack([np.ones(len(target)), predictors])
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    residual = target - design @ coef
    centered = target - target.mean()
    ss_tot = float(centered @ centered)
    if ss_tot == 0:
        return 1.0
    return 1.0 - float(residual @ residual) / ss_tot


def redundancy_filter(
    table: PropertyTable,
    properties: list[str],
    r2_threshold: float = R2_THRESHOLD,
) -> list[str]:
    """Iteratively drop the property most explainable from the others.

    Each property's mid-ranks are regressed on all remaining others'
    mid-ranks; while some R^2 clears the threshold, the property with the
    largest one goes (ties keep the earlier-listed property).
    """
    retained = list(properties)
    n_obs = len(next(iter(table.values()))) if table else 0
    if n_obs <= len(retained):
        raise ModelError(
            f"redundancy check needs more observations ({n_obs}) than properties ({len(retained)})"
        )
    ranks = {p: midranks(table[p]) for p in retained}
    while len(retained) > 1:
        worst_prop = None
        worst_r2 = -np.inf
        for prop in retained:
            others = [q for q in retained if q != prop]
            r2 = _rank_r2(ranks[prop], np.column_stack([ranks[q] for q in others]))
            if r2 > worst_r2 + 1e-12:  # strict improvement keeps earlier props on ties
                worst_prop, worst_r2 = prop, r2
        if worst_r2 >= r2_threshold:
            retained.remove(worst_prop)
        else:
            break
    return retained


# ---------------------------------------------------------------------------
# restricted cubic splines


def rcs_knots(values: np.ndarray, df: int = 3) -> np.ndarray | None:
    """Knots at fixed quantiles, or None when the data cannot support them."""
    k = df + 1
    distinct = np.unique(values)
    if len(distinct) < k:
        return None
    quantiles = np.linspace(RCS_QUANTILES[0], RCS_QUANTILES[-1], k) if k != 4 else np.array(
        RCS_QUANTILES
    )
    knots = np.quantile(values, quantiles)
    if np.any(np.diff(knots) <= 0):
        return None  # collapsed quantiles: fall back to a linear term
    return knots


def rcs_basis(
    values: np.ndarray, df: int = 3, knots: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray | None]:
    """Spline columns for one property: [linear, nonlinear_1..nonlinear_{df-1}].

    Nonlinear term j (knots t_1..t_k, j = 1..k-2):

        [ (x-t_j)+^3
          - (x-t_{k-1})+^3 * (t_k - t_j)/(t_k - t_{k-1})
          + (x-t_k)+^3   * (t_{k-1} - t_j)/(t_k - t_{k-1}) ] / (t_k - t_1)^2

    which is C2-continuous and linear outside the boundary knots. With
    too few distinct values (or collapsed quantiles) the property
    degrades to its linear column alone.
    """
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        raise ModelError("rcs_basis needs a nonempty vector")
    if knots is None:
        knots = rcs_knots(values, df)
    if knots is None:
        return values[:, None], None
    k = len(knots)
    tau2 = (knots[-1] - knots[0]) ** 2
    columns = [values]

    def cube(t):
        return np.maximum(values - t, 0.0) ** 3

    for j in range(k - 2):
        term = (
            cube(knots[j])
            - cube(knots[k - 2]) * (knots[k - 1] - knots[j]) / (knots[k - 1] - knots[k - 2])
            + cube(knots[k - 1]) * (knots[k - 2] - knots[j]) / (knots[k - 1] - knots[k - 2])
        ) / tau2
        columns.append(term)
    return np.column_stack(columns), knots


# ---------------------------------------------------------------------------
# design matrices


@dataclass
class DesignMatrix:
    matrix: np.ndarray  # observations x terms, intercept not included
    columns: list[str]
    term_map: dict[str, list[int]]
    family_map: dict[str, list[str]]

    @property
    def n_obs(self) -> int:
        return self.matrix.shape[0]


def build_design(
    table: PropertyTable,
    properties: list[str],
    df: int = 3,
    knots: dict[str, list[float] | None] | None = None,
    family_of: dict[str, str] | None = None,
) -> tuple[DesignMatrix, dict[str, list[float] | None]]:
    """Expand properties into spline columns.

    When ``knots`` is given (prediction on a trained model) the stored
    knots are reused verbatim; otherwise knots come from the data and
    properties constant in the data are skipped with a warning.
    """
    family_of = family_of or FAMILY_OF
    blocks = []
    columns: list[str] = []
    term_map: dict[str, list[int]] = {}
    out_knots: dict[str, list[float] | None] = {}
    for prop in properties:
        values = np.asarray(table[prop], dtype=float)
        if knots is None:
            if np.all(values == values[0]):
                log.warning("property %s constant in training data; no model term", prop)
                continue
            block, prop_knots = rcs_basis(values, df)
        else:
            if prop not in knots:
                continue
            stored = knots[prop]
            if stored is None:
                block, prop_knots = values[:, None], None
            else:
                block, prop_knots = rcs_basis(values, df, np.asarray(stored))
        start = len(columns)
        names = [prop] + [prop + "'" * (i + 1) for i in range(block.shape[1] - 1)]
        columns.extend(names)
        term_map[prop] = list(range(start, start + block.shape[1]))
        out_knots[prop] = list(map(float, prop_knots)) if prop_knots is not None else None
        blocks.append(block)
    if not blocks:
        matrix = np.zeros((len(next(iter(table.values()), [])), 0))
    else:
        matrix = np.column_stack(blocks)
    family_map: dict[str, list[str]] = {}
    for prop in term_map:
        family_map.setdefault(family_of.get(prop, "Other"), []).append(prop)
    return DesignMatrix(matrix, columns, term_map, family_map), out_knots


# ---------------------------------------------------------------------------
# logistic fit


@dataclass
class FittedModel:
    coefficients: np.ndarray  # intercept first, then design columns
    covariance: np.ndarray
    converged: bool
    deviance: float
    knots: dict[str, list[float] | None]
    columns: list[str]
    term_map: dict[str, list[int]]
    family_map: dict[str, list[str]]
    separation: bool = False
    n_train: int = 0
    skipped: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "coefficients": [float(c) for c in self.coefficients],
            "covariance": [[float(v) for v in row] for row in self.covariance],
            "converged": self.converged,
            "deviance": self.deviance,
            "knots": self.knots,
            "columns": list(self.columns),
            "term_map": {k: list(v) for k, v in self.term_map.items()},
            "family_map": {k: list(v) for k, v in self.family_map.items()},
            "separation": self.separation,
            "n_train": self.n_train,
            "skipped": list(self.skipped),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        return cls(
            coefficients=np.array(d["coefficients"], dtype=float),
            covariance=np.array(d["covariance"], dtype=float),
            converged=d["converged"],
            deviance=d["deviance"],
            knots={k: (list(v) if v is not None else None) for k, v in d["knots"].items()},
            columns=list(d["columns"]),
            term_map={k: list(v) for k, v in d["term_map"].items()},
            family_map={k: list(v) for k, v in d["family_map"].items()},
            separation=d.get("separation", False),
            n_train=d.get("n_train", 0),
            skipped=d.get("skipped", []),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FittedModel":
        return cls.from_dict(json.loads(text))


def _expit(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ez = np.exp(eta[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def fit_logistic(design: DesignMatrix, outcome: np.ndarray) -> FittedModel:
    """Maximum-likelihood logistic regression via IRLS.

    Stops when the largest coefficient step falls below 1e-8 or after 25
    iterations. The information matrix carries a 1e-8 ridge; any
    coefficient beyond +-15 flags (quasi-)separation and the model is
    reported unconverged.
    """
    y = np.asarray(outcome, dtype=float)
    if design.n_obs != len(y):
        raise ModelError("design and outcome lengths differ")
    if y.min() == y.max():
        raise ModelError("outcome is single-class; no logistic fit possible")
    x = np.column_stack([np.ones(len(y)), design.matrix])
    if np.linalg.matrix_rank(x) < x.shape[1]:
        raise RankDeficientError("design is rank deficient after pruning")

    beta = np.zeros(x.shape[1])
    converged = False
    info = np.eye(x.shape[1])
    for _ in range(MAX_ITER):
        eta = x @ beta
        p = np.clip(_expit(eta), 1e-12, 1.0 - 1e-12)
        w = p * (1.0 - p)
        info = x.T @ (x * w[:, None]) + RIDGE * np.eye(x.shape[1])
        score = x.T @ (y - p) - RIDGE * beta
        step = np.linalg.solve(info, score)
        beta = beta + step
        if np.max(np.abs(step)) < COEF_TOL:
            converged = True
            break

    eta = x @ beta
    p = np.clip(_expit(eta), 1e-12, 1.0 - 1e-12)
    w = p * (1.0 - p)
    info = x.T @ (x * w[:, None]) + RIDGE * np.eye(x.shape[1])
    covariance = np.linalg.inv(info)
    deviance = -2.0 * float(np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
    separation = bool(np.max(np.abs(beta)) > SEPARATION_COEF)
    if separation:
        log.warning("separation suspected: max |coefficient| exceeds %.0f", SEPARATION_COEF)
        converged = False
    return FittedModel(
        coefficients=beta,
        covariance=covariance,
        converged=converged,
        deviance=deviance,
        knots={},
        columns=list(design.columns),
        term_map={k: list(v) for k, v in design.term_map.items()},
        family_map={k: list(v) for k, v in design.family_map.items()},
        separation=separation,
        n_train=len(y),
    )


def predict(model: FittedModel, design: DesignMatrix) -> np.ndarray:
    """Inverse-logit of the linear predictor; strictly inside (0, 1)."""
    if design.columns != model.columns:
        raise ModelError(
            f"design columns {design.columns} do not match model terms {model.columns}"
        )
    x = np.column_stack([np.ones(design.n_obs), design.matrix])
    return _expit(x @ model.coefficients)


def log_likelihood_gradient(
    model: FittedModel, design: DesignMatrix, outcome: np.ndarray
) -> np.ndarray:
    """Score vector at the fitted coefficients (ridge term excluded)."""
    x = np.column_stack([np.ones(design.n_obs), design.matrix])
    p = _expit(x @ model.coefficients)
    return x.T @ (np.asarray(outcome, dtype=float) - p)


def fit_from_rows(
    rows,
    properties: list[str],
    df: int = 3,
    rho_threshold: float = RHO_THRESHOLD,
    r2_threshold: float = R2_THRESHOLD,
    prune: bool = True,
) -> FittedModel:
    """Prune, expand, and fit in one step from ChangeMetrics rows."""
    table = property_table(rows, properties)
    retained = list(properties)
    if prune:
        retained = collinearity_filter(table, retained, rho_threshold)
        retained = redundancy_filter(table, retained, r2_threshold)
    design, knots = build_design(table, retained, df)
    outcome = np.array([1.0 if r.is_bic else 0.0 for r in rows])
    model = fit_logistic(design, outcome)
    model.knots = knots
    model.skipped = [p for p in retained if p not in design.term_map]
    return model


def model_properties(model: FittedModel) -> list[str]:
    """Properties in design order (term_map key order is not stable
    across JSON round-trips; the column indices are)."""
    return sorted(model.term_map, key=lambda p: model.term_map[p][0])


def predict_rows(model: FittedModel, rows) -> np.ndarray:
    properties = model_properties(model)
    table = property_table(rows, properties)
    design, _ = build_design(table, properties, knots=model.knots)
    return predict(model, design)
