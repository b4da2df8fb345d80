"""Staged pipeline: mine -> link -> szz -> metrics -> filter -> stratify
-> train -> evaluate -> importance -> stability -> stats.

Every stage reads its inputs from disk, writes its artifacts to the run
directory, and records a fingerprint of everything it depended on
(config keys, upstream artifact checksums, external file checksums).
Reruns skip stages whose fingerprints are unchanged, so toggling a
late-stage knob only recomputes from that stage onward. Artifacts are
byte-deterministic for identical inputs; only the manifest carries
wall-clock timestamps.
"""

from __future__ import annotations

import json
import logging
import os
import subprocess
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, storage
from .curation import LabelStore, apply_filters, default_catalog
from .evaluation import (
    SchemeResult,
    family_importance,
    fit_period_models,
    grid_matrix,
    score_grid,
    split_periods,
    stability_table,
)
from .metrics import FAMILIES, PROPERTIES, build_change_metrics
from .mining import CommitRecord, GitMiner
from .model import FittedModel, collinearity_filter, property_table, redundancy_filter
from .stats import (
    DegenerateInputError,
    kernel_density,
    kruskal_wallis,
    midranks,
    skewness,
    wilcoxon_rank_sum,
)
from .szz import BugLinkage, IssueRecord, link_issues, run_szz

log = logging.getLogger(__name__)

STAGES = (
    "mine",
    "link",
    "szz",
    "metrics",
    "filter",
    "stratify",
    "train",
    "evaluate",
    "importance",
    "stability",
    "stats",
)

DEFAULT_PATTERNS = [r"[Cc]loses-[Bb]ug:\s*#?(\d+)", r"[Ff]ixes issue #(\d+)"]


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    repo_path: str
    issue_file: str
    out_dir: str
    branch: str = "HEAD"
    patterns: list[str] = field(default_factory=lambda: list(DEFAULT_PATTERNS))
    review_file: str | None = None
    labels_file: str | None = None
    suspicious_file: str | None = None
    cosmetic_filter: bool = True
    date_filter: bool = True
    date_field: str = "author_time"
    churn_threshold: int = 10_000
    file_threshold: int = 100
    rho_threshold: float = 0.7
    r2_threshold: float = 0.9
    spline_df: int = 3
    months: int = 3
    scheme: str = "both"
    drop_mislabeled: bool = False

    def validate(self) -> None:
        if self.months not in (3, 6):
            raise PipelineError("months must be 3 or 6")
        if self.scheme not in ("short", "long", "both"):
            raise PipelineError("scheme must be short, long, or both")
        for name in ("churn_threshold", "file_threshold", "rho_threshold",
                     "r2_threshold", "spline_df"):
            if getattr(self, name) <= 0:
                raise PipelineError(f"{name} must be positive")

    def schemes(self) -> list[str]:
        return ["short", "long"] if self.scheme == "both" else [self.scheme]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise PipelineError(f"unknown config keys: {sorted(unknown)}")
        config = cls(**raw)
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: str, overrides: dict | None = None) -> "PipelineConfig":
        raw = storage.load_config_file(path)
        raw.update(overrides or {})
        return cls.from_dict(raw)


@dataclass
class RunManifest:
    run_id: str
    config: dict
    stage_checksums: dict[str, dict[str, str]]
    tool_version: str
    started: float
    finished: float

    def to_dict(self) -> dict:
        return asdict(self)


class Pipeline:
    def __init__(self, config: PipelineConfig):
        config.validate()
        self.config = config
        self.out_dir = storage.ensure_dir(config.out_dir)
        self.state_path = os.path.join(self.out_dir, "stage_state.json")
        self.state: dict[str, dict] = (
            storage.read_json(self.state_path) if os.path.exists(self.state_path) else {}
        )

    # -- paths ---------------------------------------------------------

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    STAGE_OUTPUTS = {
        "mine": ["commits.ndjson"],
        "link": ["linkage.ndjson"],
        "szz": ["linkage_szz.ndjson"],
        "metrics": ["changes.csv"],
        "filter": ["dataset.csv", "filter_ledger.csv"],
        "stratify": ["periods.csv"],
    }

    def stage_outputs(self, stage: str) -> list[str]:
        if stage in self.STAGE_OUTPUTS:
            return list(self.STAGE_OUTPUTS[stage])
        per_scheme = {
            "train": ["models_{s}.json"],
            "evaluate": [
                "eval_{s}.csv",
                "heatmap_auc_{s}.csv",
                "heatmap_brier_{s}.csv",
                "heatmap_delta_auc_{s}.csv",
                "heatmap_delta_brier_{s}.csv",
            ],
            "importance": ["importance_{s}.csv"],
            "stability": ["stability_{s}.csv"],
        }
        if stage in per_scheme:
            return [
                pattern.format(s=s)
                for s in self.config.schemes()
                for pattern in per_scheme[stage]
            ]
        if stage == "stats":
            return [
                "stats_kruskal_bic.csv",
                "stats_kruskal_bfc.csv",
                "stats_wilcoxon_bic.csv",
                "stats_wilcoxon_bfc.csv",
                "violin_bic.csv",
                "violin_bfc.csv",
                "bic_counts_per_issue.csv",
                "skewness.csv",
            ]
        raise PipelineError(f"unknown stage {stage!r}")

    # -- fingerprints ----------------------------------------------------

    def _external_checksum(self, path: str | None) -> str:
        if not path:
            return ""
        if not os.path.exists(path):
            return f"missing:{path}"
        return storage.sha256_file(path)

    def _repo_tip(self) -> str:
        proc = subprocess.run(
            ["git", "-c", "safe.directory=*", "-C", self.config.repo_path,
             "rev-parse", "--verify", "--quiet", f"{self.config.branch}^{{commit}}"],
            capture_output=True, text=True,
        )
        return proc.stdout.strip() or "empty"

    def _artifact_checksums(self, stage: str) -> dict[str, str]:
        return {name: storage.sha256_file(self.path(name)) for name in self.stage_outputs(stage)}

    def stage_fingerprint(self, stage: str) -> str:
        c = self.config
        deps: dict[str, object] = {"stage": stage, "version": __version__}
        if stage == "mine":
            deps.update(tip=self._repo_tip(), branch=c.branch)
        elif stage == "link":
            deps.update(
                upstream=self.state["mine"]["outputs"],
                issues=self._external_checksum(c.issue_file),
                patterns=c.patterns,
            )
        elif stage == "szz":
            deps.update(
                upstream=self.state["link"]["outputs"],
                commits=self.state["mine"]["outputs"],
                issues=self._external_checksum(c.issue_file),
                cosmetic=c.cosmetic_filter,
                date=c.date_filter,
                date_field=c.date_field,
                suspicious=self._external_checksum(c.suspicious_file),
            )
        elif stage == "metrics":
            deps.update(
                commits=self.state["mine"]["outputs"],
                szz=self.state["szz"]["outputs"],
                reviews=self._external_checksum(c.review_file),
            )
        elif stage == "filter":
            deps.update(
                metrics=self.state["metrics"]["outputs"],
                szz=self.state["szz"]["outputs"],
                labels=self._external_checksum(c.labels_file),
                drop_mislabeled=c.drop_mislabeled,
                churn=c.churn_threshold,
                files=c.file_threshold,
                months=c.months,
            )
        elif stage == "stratify":
            deps.update(upstream=self.state["filter"]["outputs"])
        elif stage == "train":
            deps.update(
                upstream=self.state["filter"]["outputs"],
                rho=c.rho_threshold,
                r2=c.r2_threshold,
                df=c.spline_df,
                schemes=self.config.schemes(),
            )
        elif stage == "evaluate":
            deps.update(
                models=self.state["train"]["outputs"],
                dataset=self.state["filter"]["outputs"],
            )
        elif stage == "importance":
            deps.update(models=self.state["train"]["outputs"])
        elif stage == "stability":
            deps.update(models=self.state["train"]["outputs"])
        elif stage == "stats":
            deps.update(
                metrics=self.state["metrics"]["outputs"],
                szz=self.state["szz"]["outputs"],
                labels=self._external_checksum(c.labels_file),
            )
        return storage.sha256_text(json.dumps(deps, sort_keys=True))

    # -- shared loaders ----------------------------------------------------

    def load_commits(self) -> list[CommitRecord]:
        return [CommitRecord.from_dict(d) for d in storage.read_ndjson(self.path("commits.ndjson"))]

    def load_linkages(self, name: str) -> list[BugLinkage]:
        return [BugLinkage.from_dict(d) for d in storage.read_ndjson(self.path(name))]

    def load_issues(self) -> dict[str, IssueRecord]:
        return storage.load_issues(self.config.issue_file)

    def load_verdicts(self) -> dict[str, str]:
        if not self.config.labels_file:
            log.warning("no labels file configured; every issue is assumed intrinsic")
            return {}
        issues = set(self.load_issues())
        store = LabelStore.load(self.config.labels_file, issues, default_catalog())
        return store.resolved_verdicts()

    # -- stages ------------------------------------------------------------

    def stage_mine(self) -> None:
        miner = GitMiner(self.config.repo_path)
        records = miner.scan_history(self.config.branch)
        storage.write_ndjson(self.path("commits.ndjson"), [r.to_dict() for r in records])

    def stage_link(self) -> None:
        commits = self.load_commits()
        linkages = link_issues(commits, self.load_issues(), self.config.patterns)
        storage.write_ndjson(self.path("linkage.ndjson"), [l.to_dict() for l in linkages])

    def stage_szz(self) -> None:
        commits = self.load_commits()
        linkages = self.load_linkages("linkage.ndjson")
        suspicious: set[str] = set()
        if self.config.suspicious_file:
            suspicious = {
                str(d["commit_id"]) for d in storage.read_ndjson(self.config.suspicious_file)
            }
        run_szz(
            linkages,
            GitMiner(self.config.repo_path),
            commits,
            self.load_issues(),
            cosmetic_filter=self.config.cosmetic_filter,
            date_filter=self.config.date_filter,
            date_field=self.config.date_field,
            suspicious_ids=suspicious,
        )
        storage.write_ndjson(self.path("linkage_szz.ndjson"), [l.to_dict() for l in linkages])

    def stage_metrics(self) -> None:
        commits = self.load_commits()
        reviews = (
            storage.load_reviews(self.config.review_file) if self.config.review_file else {}
        )
        linkages = self.load_linkages("linkage_szz.ndjson")
        bic_ids = {cid for l in linkages for cid in l.candidate_ids()}
        rows = build_change_metrics(commits, reviews=reviews, bic_ids=bic_ids)
        storage.write_changes_csv(self.path("changes.csv"), rows)

    def stage_filter(self) -> None:
        rows = storage.read_changes_csv(self.path("changes.csv"))
        linkages = self.load_linkages("linkage_szz.ndjson")
        result = apply_filters(
            rows,
            linkages,
            self.load_verdicts(),
            drop_mislabeled=self.config.drop_mislabeled,
            months=self.config.months,
            churn_threshold=self.config.churn_threshold,
            file_threshold=self.config.file_threshold,
        )
        storage.write_changes_csv(self.path("dataset.csv"), result.rows)
        storage.write_csv(
            self.path("filter_ledger.csv"),
            ["#", "Filter", "Issues", "BICs"],
            [list(row) for row in result.ledger_rows()],
        )

    def stage_stratify(self) -> None:
        rows = storage.read_changes_csv(self.path("dataset.csv"))
        counts: dict[int, list[int]] = {}
        for row in rows:
            entry = counts.setdefault(row.period, [0, 0])
            entry[0] += 1
            entry[1] += int(row.is_bic)
        storage.write_csv(
            self.path("periods.csv"),
            ["period", "n_rows", "n_bics"],
            [[p, counts[p][0], counts[p][1]] for p in sorted(counts)],
        )

    def pruned_properties(self, rows) -> list[str]:
        table = property_table(rows, list(PROPERTIES))
        retained = collinearity_filter(table, list(PROPERTIES), self.config.rho_threshold)
        return redundancy_filter(table, retained, self.config.r2_threshold)

    def stage_train(self) -> None:
        rows = storage.read_changes_csv(self.path("dataset.csv"))
        properties = self.pruned_properties(rows)
        rows_by_period = split_periods(rows)
        for scheme in self.config.schemes():
            result = fit_period_models(rows_by_period, scheme, properties, self.config.spline_df)
            payload = {
                "scheme": scheme,
                "properties": properties,
                "models": {str(p): m.to_dict() for p, m in result.models.items()},
                "self_scores": {
                    str(p): {"auc": a, "brier": b}
                    for p, (a, b) in result.self_scores.items()
                },
                "warnings": result.warnings,
            }
            storage.write_json(self.path(f"models_{scheme}.json"), payload)

    def _load_models(self, scheme: str):
        payload = storage.read_json(self.path(f"models_{scheme}.json"))
        models = {int(p): FittedModel.from_dict(d) for p, d in payload["models"].items()}
        self_scores = {
            int(p): (d["auc"], d["brier"]) for p, d in payload["self_scores"].items()
        }
        return payload, models, self_scores

    def stage_evaluate(self) -> None:
        rows = storage.read_changes_csv(self.path("dataset.csv"))
        rows_by_period = split_periods(rows)
        for scheme in self.config.schemes():
            _, models, self_scores = self._load_models(scheme)
            result = SchemeResult(scheme=scheme, models=models, self_scores=self_scores)
            score_grid(rows_by_period, result)
            storage.write_csv(
                self.path(f"eval_{scheme}.csv"),
                ["train_period", "test_period", "scheme", "auc", "brier", "n_train", "n_test"],
                [
                    [e.train_period, e.test_period, e.scheme, e.auc, e.brier, e.n_train, e.n_test]
                    for e in result.evals
                ],
            )
            deltas = {
                "auc": {p: a for p, (a, _) in self_scores.items()},
                "brier": {p: b for p, (_, b) in self_scores.items()},
            }
            for metric in ("auc", "brier"):
                for delta in (False, True):
                    trains, tests, grid = grid_matrix(
                        result.evals, metric, deltas[metric] if delta else None
                    )
                    name = f"heatmap_{'delta_' if delta else ''}{metric}_{scheme}.csv"
                    storage.write_csv(
                        self.path(name),
                        ["train_period"] + [f"test_{t}" for t in tests],
                        [[trains[i]] + list(grid[i]) for i in range(len(trains))],
                    )

    def stage_importance(self) -> None:
        for scheme in self.config.schemes():
            _, models, _ = self._load_models(scheme)
            rows = []
            for period in sorted(models):
                imp = family_importance(models[period], period=period, scheme=scheme)
                for family in sorted(imp.families):
                    s = imp.families[family]
                    rows.append(
                        [period, scheme, family, s.wald_chi2, s.df, s.p_value, s.normalized]
                    )
            storage.write_csv(
                self.path(f"importance_{scheme}.csv"),
                ["period", "scheme", "family", "wald_chi2", "df", "p_value", "normalized"],
                rows,
            )

    def stage_stability(self) -> None:
        for scheme in self.config.schemes():
            _, models, _ = self._load_models(scheme)
            importances = {
                period: family_importance(models[period], period=period, scheme=scheme)
                for period in sorted(models)
            }
            rows = [
                [family, i, j, diff]
                for family, i, j, diff in stability_table(importances)
            ]
            storage.write_csv(
                self.path(f"stability_{scheme}.csv"),
                ["family", "train_period", "future_period", "fisdiff"],
                rows,
            )

    def stage_stats(self) -> None:
        rows = storage.read_changes_csv(self.path("changes.csv"))
        by_id = {r.change_id: r for r in rows}
        linkages = self.load_linkages("linkage_szz.ndjson")
        verdicts = self.load_verdicts()

        groups_bic: dict[str, list] = {}
        groups_bfc: dict[str, list] = {}
        bic_counts = []
        for linkage in linkages:
            verdict = verdicts.get(linkage.issue_id, "intrinsic")
            bic_counts.append([linkage.issue_id, verdict, len(linkage.bic_candidates)])
            for cid in linkage.candidate_ids():
                if cid in by_id:
                    groups_bic.setdefault(verdict, []).append(by_id[cid])
            for cid in linkage.bfc_ids:
                if cid in by_id:
                    groups_bfc.setdefault(verdict, []).append(by_id[cid])
        storage.write_csv(
            self.path("bic_counts_per_issue.csv"),
            ["issue_id", "verdict", "n_bics"],
            sorted(bic_counts),
        )
        self._family_stats("bic", groups_bic)
        self._family_stats("bfc", groups_bfc)

        dataset = storage.read_changes_csv(self.path("dataset.csv"))
        skew_rows = []
        for prop in PROPERTIES:
            values = [r.value(prop) for r in dataset]
            try:
                skew_rows.append([prop, skewness(values)])
            except (DegenerateInputError, ValueError):
                skew_rows.append([prop, None])
        storage.write_csv(self.path("skewness.csv"), ["property", "skewness"], skew_rows)

    def _family_stats(self, kind: str, groups: dict[str, list]) -> None:
        """Kruskal-Wallis, pairwise rank-sum, and density exports per family.

        A change's family score is its mean rank fraction over the
        family's properties, ranked across the union of groups, which
        keeps the comparison monotone-transform invariant.
        """
        names = sorted(groups)
        pooled = [r for name in names for r in groups[name]]
        kruskal_rows, wilcoxon_rows, violin_rows = [], [], []
        for family, props in FAMILIES.items():
            if not pooled:
                continue
            score_matrix = np.zeros(len(pooled))
            for prop in props:
                values = [r.value(prop) for r in pooled]
                score_matrix += midranks(values) / len(pooled)
            scores = score_matrix / len(props)
            offsets: dict[str, list[float]] = {}
            cursor = 0
            for name in names:
                size = len(groups[name])
                offsets[name] = list(scores[cursor : cursor + size])
                cursor += size
            if len(names) >= 3 and all(offsets[n] for n in names):
                h, p = kruskal_wallis([offsets[n] for n in names])
                kruskal_rows.append([family, h, p])
            for i, a in enumerate(names):
                for b in names[i + 1 :]:
                    if offsets[a] and offsets[b]:
                        u, p = wilcoxon_rank_sum(offsets[a], offsets[b])
                        wilcoxon_rows.append([family, f"{a}-{b}", u, p])
            lo = float(min(scores))
            hi = float(max(scores))
            grid = np.linspace(lo, hi, 64) if hi > lo else np.array([lo])
            for name in names:
                values = offsets[name]
                if len(values) < 2:
                    continue
                try:
                    dens = kernel_density(values, grid)
                except DegenerateInputError:
                    continue
                violin_rows.extend(
                    [family, name, float(g), float(d)] for g, d in zip(grid, dens)
                )
        storage.write_csv(
            self.path(f"stats_kruskal_{kind}.csv"), ["family", "H", "p"], kruskal_rows
        )
        storage.write_csv(
            self.path(f"stats_wilcoxon_{kind}.csv"), ["family", "pair", "U", "p"], wilcoxon_rows
        )
        storage.write_csv(
            self.path(f"violin_{kind}.csv"),
            ["family", "group", "grid_point", "density"],
            violin_rows,
        )

    # -- driver ------------------------------------------------------------

    def run(self, force: bool = False, stages: tuple[str, ...] = STAGES) -> RunManifest:
        started = time.time()
        stage_impl = {
            "mine": self.stage_mine,
            "link": self.stage_link,
            "szz": self.stage_szz,
            "metrics": self.stage_metrics,
            "filter": self.stage_filter,
            "stratify": self.stage_stratify,
            "train": self.stage_train,
            "evaluate": self.stage_evaluate,
            "importance": self.stage_importance,
            "stability": self.stage_stability,
            "stats": self.stage_stats,
        }
        for stage in stages:
            fingerprint = self.stage_fingerprint(stage)
            cached = self.state.get(stage)
            outputs_exist = all(
                os.path.exists(self.path(name)) for name in self.stage_outputs(stage)
            )
            if not force and cached and cached["fingerprint"] == fingerprint and outputs_exist:
                log.info("stage %s unchanged; skipping", stage)
                continue
            log.info("running stage %s", stage)
            try:
                stage_impl[stage]()
            except Exception as exc:
                raise PipelineError(
                    f"stage {stage} failed (input fingerprint {fingerprint[:12]}): {exc}"
                ) from exc
            self.state[stage] = {
                "fingerprint": fingerprint,
                "outputs": self._artifact_checksums(stage),
            }
            storage.write_json(self.state_path, self.state)

        stage_checksums = {stage: dict(self.state[stage]["outputs"]) for stage in stages}
        run_id = storage.sha256_text(
            json.dumps({"config": self.config.to_dict(), "stages": stage_checksums},
                       sort_keys=True)
        )[:16]
        manifest = RunManifest(
            run_id=run_id,
            config=self.config.to_dict(),
            stage_checksums=stage_checksums,
            tool_version=__version__,
            started=started,
            finished=time.time(),
        )
        if tuple(stages) == STAGES:  # partial runs must not clobber the run record
            storage.write_json(self.path("manifest.json"), manifest.to_dict())
        return manifest


def run_pipeline(config: PipelineConfig, force: bool = False) -> RunManifest:
    return Pipeline(config).run(force=force)
