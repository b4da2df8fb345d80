"""Human label curation and corpus filtering.

Raters classify each linked issue as intrinsic, extrinsic, or mislabeled
against a two-stage rule catalog (is it a bug at all; if so, is the cause
external). The store keeps one current record per (issue, rater) plus an
append-only audit trail, computes chance-corrected agreement on both
dichotomies, and applies the staged corpus filters:

  F0 linked corpus
  F1 unlink bug-introducing candidates of non-intrinsic issues
  F2 drop oversized changes (churn)
  F3 drop changes touching too many files
  F4 drop changes adding no lines
  F5 drop changes outside complete calendar periods

Issue counts freeze after F1; the later stages only remove changes.
"""

from __future__ import annotations

import calendar
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .metrics import ChangeMetrics
from .stats import DegenerateInputError, krippendorff_alpha
from .szz import BugLinkage

VERDICTS = ("intrinsic", "extrinsic", "mislabeled")

SECTION_MISLABELED = "mislabeled"
SECTION_BUG = "bug"
SECTION_EXTRINSIC = "extrinsic"
SECTION_INTRINSIC = "intrinsic"

# Stage-1 sections decide bug vs not; stage-2 sections decide the cause.
# A final verdict must cite a rule from its own section; the bug section
# exists for the stage-1 screen and never justifies a final verdict alone.
SECTION_FOR_VERDICT = {
    "mislabeled": SECTION_MISLABELED,
    "extrinsic": SECTION_EXTRINSIC,
    "intrinsic": SECTION_INTRINSIC,
}

CHURN_THRESHOLD = 10_000
FILE_THRESHOLD = 100


class CurationError(ValueError):
    pass


class UnknownIssueError(CurationError):
    pass


class RuleMismatchError(CurationError):
    pass


class ConflictError(CurationError):
    """Overwrite attempted without presenting the current audit token."""


class UnresolvedDisagreementError(CurationError):
    pass


@dataclass(frozen=True)
class Rule:
    rule_id: str
    section: str
    text: str

    def to_dict(self) -> dict:
        return {"rule_id": self.rule_id, "section": self.section, "text": self.text}


@dataclass
class RuleCatalog:
    rules: list[Rule]

    def __post_init__(self):
        self._by_id = {r.rule_id: r for r in self.rules}
        if len(self._by_id) != len(self.rules):
            raise CurationError("duplicate rule ids in catalog")

    def section_of(self, rule_id: str) -> str:
        if rule_id not in self._by_id:
            raise CurationError(f"unknown rule id {rule_id!r}")
        return self._by_id[rule_id].section

    def check(self, verdict: str, rule_id: str) -> None:
        if verdict not in VERDICTS:
            raise CurationError(f"unknown verdict {verdict!r}")
        section = self.section_of(rule_id)
        if section != SECTION_FOR_VERDICT[verdict]:
            raise RuleMismatchError(
                f"rule {rule_id} sits in section {section!r}, "
                f"which cannot justify verdict {verdict!r}"
            )

    def to_dict(self) -> dict:
        return {"rules": [r.to_dict() for r in self.rules]}

    @classmethod
    def from_dict(cls, d: dict) -> "RuleCatalog":
        return cls(rules=[Rule(r["rule_id"], r["section"], r["text"]) for r in d["rules"]])


def default_catalog() -> RuleCatalog:
    """Built-in two-stage catalog; projects may load their own instead."""
    rules = [
        ("M1", SECTION_MISLABELED, "Defect is confined to test files."),
        ("M2", SECTION_MISLABELED, "Source cleanup with no behavioral effect."),
        ("M3", SECTION_MISLABELED, "Typo confined to inline comments."),
        ("M4", SECTION_MISLABELED, "Preventive change guarding against future defects."),
        ("M5", SECTION_MISLABELED, "Developers dispute in the report whether this is a defect."),
        ("M6", SECTION_MISLABELED, "No fixing change exists for the report."),
        ("B1", SECTION_BUG, "Typo in executable source code."),
        ("B2", SECTION_BUG, "A previous change to the source caused the failure."),
        ("B3", SECTION_BUG, "Faulty behavior that was knowable when the code was written."),
        ("B4", SECTION_BUG, "Omission that should have been handled when the code was written."),
        ("E1", SECTION_EXTRINSIC, "Failure caused by a change in the runtime environment."),
        ("E2", SECTION_EXTRINSIC, "Failure caused by changed requirements."),
        ("E3", SECTION_EXTRINSIC, "Failure caused by a change outside the version control system."),
        ("E4", SECTION_EXTRINSIC, "Failure caused by an external library."),
        ("I1", SECTION_INTRINSIC, "No evidence of an external cause."),
    ]
    return RuleCatalog(rules=[Rule(*r) for r in rules])


@dataclass
class LabelRecord:
    issue_id: str
    rater: str
    verdict: str
    rule_id: str
    rationale: str = ""
    labeled_time: int = 0
    token: str = ""

    def to_dict(self) -> dict:
        return {
            "issue_id": self.issue_id,
            "rater": self.rater,
            "verdict": self.verdict,
            "rule_id": self.rule_id,
            "rationale": self.rationale,
            "labeled_time": self.labeled_time,
            "token": self.token,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabelRecord":
        return cls(
            issue_id=str(d["issue_id"]),
            rater=d["rater"],
            verdict=d["verdict"],
            rule_id=d["rule_id"],
            rationale=d.get("rationale", ""),
            labeled_time=d.get("labeled_time", 0),
            token=d.get("token", ""),
        )


@dataclass
class AgreementReport:
    alpha_bug_vs_not: float | None
    alpha_intrinsic_vs_extrinsic: float | None
    disagreements: list[str]
    coverage: float
    n_double_rated: int

    def to_dict(self) -> dict:
        return {
            "alpha_bug_vs_not": self.alpha_bug_vs_not,
            "alpha_intrinsic_vs_extrinsic": self.alpha_intrinsic_vs_extrinsic,
            "disagreements": list(self.disagreements),
            "coverage": self.coverage,
            "n_double_rated": self.n_double_rated,
        }


class LabelStore:
    """Current label per (issue, rater) plus an append-only audit trail.

    Overwriting an existing record requires the record's current token,
    which serializes concurrent writers per (issue, rater).
    """

    def __init__(self, issues: set[str], catalog: RuleCatalog | None = None,
                 audit_path: str | None = None):
        self.issues = set(issues)
        self.catalog = catalog or default_catalog()
        self.audit_path = audit_path
        self.records: dict[tuple[str, str], LabelRecord] = {}
        self.audit: list[dict] = []
        self._revisions: dict[tuple[str, str], int] = {}

    # -- persistence ----------------------------------------------------

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key in sorted(self.records):
                fh.write(json.dumps(self.records[key].to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str, issues: set[str], catalog: RuleCatalog | None = None,
             audit_path: str | None = None) -> "LabelStore":
        store = cls(issues, catalog, audit_path)
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = LabelRecord.from_dict(json.loads(line))
                store.import_record(record)
        return store

    def import_record(self, record: LabelRecord) -> None:
        """Trusted bulk load: bypasses token checks, keeps validation."""
        if record.issue_id not in self.issues:
            raise UnknownIssueError(f"unknown issue {record.issue_id!r}")
        self.catalog.check(record.verdict, record.rule_id)
        key = (record.issue_id, record.rater)
        self._revisions[key] = self._revisions.get(key, 0) + 1
        if not record.token:
            record.token = f"{record.issue_id}:{record.rater}:{self._revisions[key]}"
        self.records[key] = record

    # -- writes ----------------------------------------------------------

    def record_label(
        self,
        issue_id: str,
        rater: str,
        verdict: str,
        rule_id: str,
        rationale: str = "",
        labeled_time: int | None = None,
        expected_token: str | None = None,
    ) -> LabelRecord:
        if issue_id not in self.issues:
            raise UnknownIssueError(f"unknown issue {issue_id!r}")
        self.catalog.check(verdict, rule_id)
        key = (issue_id, rater)
        existing = self.records.get(key)
        if existing is not None and expected_token != existing.token:
            raise ConflictError(
                f"label for issue {issue_id} by {rater} exists; "
                "pass its current token to overwrite"
            )
        if labeled_time is None:
            labeled_time = int(datetime.now(tz=timezone.utc).timestamp())
        self._revisions[key] = self._revisions.get(key, 0) + 1
        record = LabelRecord(
            issue_id=issue_id,
            rater=rater,
            verdict=verdict,
            rule_id=rule_id,
            rationale=rationale,
            labeled_time=labeled_time,
            token=f"{issue_id}:{rater}:{self._revisions[key]}",
        )
        self.records[key] = record
        event = {
            "event": "overwrite" if existing else "create",
            "record": record.to_dict(),
            "previous": existing.to_dict() if existing else None,
        }
        self.audit.append(event)
        if self.audit_path:
            with open(self.audit_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")
        return record

    # -- queries ----------------------------------------------------------

    def labels(self) -> list[LabelRecord]:
        return [self.records[k] for k in sorted(self.records)]

    def raters(self) -> list[str]:
        return sorted({rater for _, rater in self.records})

    def labels_for_issue(self, issue_id: str) -> list[LabelRecord]:
        return [r for r in self.labels() if r.issue_id == issue_id]

    def disagreements(self) -> list[str]:
        out = []
        for issue_id in sorted(self.issues):
            verdicts = {r.verdict for r in self.labels_for_issue(issue_id)}
            if len(verdicts) > 1:
                out.append(issue_id)
        return out

    def progress(self) -> dict:
        per_rater = {rater: 0 for rater in self.raters()}
        for record in self.records.values():
            per_rater[record.rater] += 1
        labeled = {issue for issue, _ in self.records}
        return {
            "issues_total": len(self.issues),
            "issues_labeled": len(labeled),
            "per_rater": per_rater,
            "disagreements": len(self.disagreements()),
        }

    def resolved_verdicts(self) -> dict[str, str]:
        """Verdict per labeled issue; raters must agree on every issue."""
        conflicts = self.disagreements()
        if conflicts:
            raise UnresolvedDisagreementError(
                "unresolved rater disagreement on issues: " + ", ".join(conflicts)
            )
        return {record.issue_id: record.verdict for record in self.records.values()}

    def agreement_report(self) -> AgreementReport:
        items = sorted(self.issues)
        raters = self.raters()
        matrix = [
            [
                self.records[(issue, rater)].verdict
                if (issue, rater) in self.records
                else None
                for issue in items
            ]
            for rater in raters
        ]
        double_rated = [
            i
            for i in range(len(items))
            if sum(1 for row in matrix if row[i] is not None) >= 2
        ]
        if not double_rated:
            raise CurationError("agreement needs at least one issue rated by two raters")

        bug_matrix = [
            [None if v is None else ("bug" if v in ("intrinsic", "extrinsic") else "not")
             for v in row]
            for row in matrix
        ]
        alpha_bug = _try_alpha([[row[i] for i in double_rated] for row in bug_matrix])

        bug_items = [
            i
            for i in double_rated
            if all(
                matrix[r][i] in ("intrinsic", "extrinsic")
                for r in range(len(raters))
                if matrix[r][i] is not None
            )
        ]
        alpha_kind = _try_alpha(
            [[row[i] for i in bug_items] for row in matrix] if bug_items else None
        )
        coverage = len(double_rated) / len(self.issues) if self.issues else 0.0
        return AgreementReport(
            alpha_bug_vs_not=alpha_bug,
            alpha_intrinsic_vs_extrinsic=alpha_kind,
            disagreements=self.disagreements(),
            coverage=coverage,
            n_double_rated=len(double_rated),
        )


def _try_alpha(matrix) -> float | None:
    if matrix is None:
        return None
    try:
        return krippendorff_alpha(matrix)
    except DegenerateInputError:
        return None


# ---------------------------------------------------------------------------
# period stratification


def _add_months(dt: datetime, months: int) -> datetime:
    month_index = dt.year * 12 + (dt.month - 1) + months
    year, month0 = divmod(month_index, 12)
    day = min(dt.day, calendar.monthrange(year, month0 + 1)[1])
    return dt.replace(year=year, month=month0 + 1, day=day)


def stratify_periods(rows: list[ChangeMetrics], months: int) -> dict[str, int]:
    """Assign each row to a 1-based fixed-width calendar window.

    Windows start at the earliest row's UTC date. A window only counts
    when it closes on or before the newest row's timestamp; rows in the
    trailing partial window get no assignment (they are what the period
    filter drops).
    """
    if months not in (3, 6):
        raise CurationError("period width must be 3 or 6 months")
    if not rows:
        return {}
    t_min = min(r.author_time for r in rows)
    t_max = max(r.author_time for r in rows)
    start = datetime.fromtimestamp(t_min, tz=timezone.utc).replace(
        hour=0, minute=0, second=0, microsecond=0
    )
    boundaries = [start]
    while boundaries[-1].timestamp() <= t_max:
        boundaries.append(_add_months(boundaries[-1], months))
    # boundaries[i] .. boundaries[i+1] is window i+1; complete iff it closes by t_max
    complete = [
        i for i in range(len(boundaries) - 1) if boundaries[i + 1].timestamp() <= t_max
    ]
    assignment: dict[str, int] = {}
    for row in rows:
        for i in complete:
            if boundaries[i].timestamp() <= row.author_time < boundaries[i + 1].timestamp():
                assignment[row.change_id] = i + 1
                break
    return assignment


# ---------------------------------------------------------------------------
# corpus filters


@dataclass
class FilteredDataset:
    stage_counts: list[tuple[str, int, int]]
    rows: list[ChangeMetrics]
    periods: dict[str, int]
    months: int
    retained_issues: set[str] = field(default_factory=set)

    def ledger_rows(self) -> list[tuple[str, str, int, int]]:
        names = {
            "F0": "issue-vcs dataset",
            "F1": "extrinsic bugs",
            "F2": "too much churn",
            "F3": "too many files",
            "F4": "no lines added",
            "F5": "period",
        }
        return [(stage, names[stage], issues, bics) for stage, issues, bics in self.stage_counts]


def apply_filters(
    rows: list[ChangeMetrics],
    linkages: list[BugLinkage],
    verdicts: dict[str, str],
    drop_mislabeled: bool = False,
    months: int = 3,
    churn_threshold: int = CHURN_THRESHOLD,
    file_threshold: int = FILE_THRESHOLD,
) -> FilteredDataset:
    """Stage the corpus filters and record a (stage, issues, bics) ledger.

    Issues missing from ``verdicts`` are assumed intrinsic. F1 clears the
    outcome label of candidates traced from non-intrinsic issues; it never
    removes their rows, since a fixing change is still a real change.
    """
    candidate_ids: dict[str, set[str]] = {
        l.issue_id: set(l.candidate_ids()) for l in linkages
    }
    all_issues = sorted(candidate_ids)
    allowed = {"intrinsic"} | (set() if drop_mislabeled else {"mislabeled"})
    retained_issues = {
        iid for iid in all_issues if verdicts.get(iid, "intrinsic") in allowed
    }

    def bic_set(issue_subset: set[str]) -> set[str]:
        out: set[str] = set()
        for iid in issue_subset:
            out |= candidate_ids[iid]
        return out

    stage_counts = [("F0", len(all_issues), len(bic_set(set(all_issues))))]
    bics = bic_set(retained_issues)
    stage_counts.append(("F1", len(retained_issues), len(bics)))

    surviving = list(rows)

    def recount(stage: str):
        alive = {r.change_id for r in surviving}
        stage_counts.append((stage, len(retained_issues), len(bics & alive)))

    surviving = [r for r in surviving if r.la + r.ld < churn_threshold]
    recount("F2")
    surviving = [r for r in surviving if r.nf < file_threshold]
    recount("F3")
    surviving = [r for r in surviving if r.la > 0]
    recount("F4")
    periods = stratify_periods(surviving, months)
    surviving = [r for r in surviving if r.change_id in periods]
    recount("F5")

    final_rows = []
    for row in surviving:
        row.is_bic = row.change_id in bics
        row.period = periods[row.change_id]
        final_rows.append(row)
    return FilteredDataset(
        stage_counts=stage_counts,
        rows=final_rows,
        periods=periods,
        months=months,
        retained_issues=retained_issues,
    )
