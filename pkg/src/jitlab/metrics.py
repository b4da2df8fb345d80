"""Code-change properties for JIT models.

Seventeen per-change properties in six families:

  Size                 la, ld
  Diffusion            ns, nd, nf, ent
  History              nuc, ndev, age
  Author Experience    aexp, arexp, asexp, asawr
  Reviewer Experience  rexp, rrexp, rsexp, rsawr
  Review               nrev, app, hcmt, rtime

History and experience values are computed against a HistoryIndex that
holds exactly the commits scanned before the queried change, so nothing
leaks from the future. Reviewer-family values are the mean across a
change's reviewers; changes without review data get zeros plus a
missing-review flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

from .mining import CommitRecord

SECONDS_PER_DAY = 86_400.0
SECONDS_PER_YEAR = 365.25 * SECONDS_PER_DAY

FAMILIES: dict[str, tuple[str, ...]] = {
    "Size": ("la", "ld"),
    "Diffusion": ("ns", "nd", "nf", "ent"),
    "History": ("nuc", "ndev", "age"),
    "Author Experience": ("aexp", "arexp", "asexp", "asawr"),
    "Reviewer Experience": ("rexp", "rrexp", "rsexp", "rsawr"),
    "Review": ("nrev", "app", "hcmt", "rtime"),
}

PROPERTIES: tuple[str, ...] = tuple(p for props in FAMILIES.values() for p in props)

FAMILY_OF: dict[str, str] = {p: fam for fam, props in FAMILIES.items() for p in props}


def subsystem_of(path: str) -> str:
    """First path segment; files at the repository root share one bucket."""
    return path.split("/", 1)[0] if "/" in path else ""


def directory_of(path: str) -> str:
    return path.rsplit("/", 1)[0] if "/" in path else ""


@dataclass
class ChangeMetrics:
    change_id: str
    author_time: int = 0
    la: int = 0
    ld: int = 0
    ns: int = 0
    nd: int = 0
    nf: int = 0
    ent: float = 0.0
    nuc: int = 0
    ndev: int = 0
    age: float = 0.0
    aexp: float = 0.0
    arexp: float = 0.0
    asexp: float = 0.0
    asawr: float = 0.0
    rexp: float = 0.0
    rrexp: float = 0.0
    rsexp: float = 0.0
    rsawr: float = 0.0
    nrev: int = 0
    app: int = 0
    hcmt: int = 0
    rtime: float = 0.0
    missing_review: bool = True
    is_bic: bool = False
    period: int | None = None

    def value(self, prop: str) -> float:
        return float(getattr(self, prop))


CSV_COLUMNS: tuple[str, ...] = tuple(f.name for f in fields(ChangeMetrics))


@dataclass(frozen=True)
class ReviewRecord:
    change_id: str
    created_time: int
    approved_time: int
    revisions: int
    voters: frozenset[str] = frozenset()
    human_nonowner_comments: int = 0
    reviewers: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.approved_time < self.created_time:
            raise ValueError(
                f"review {self.change_id}: approved before created"
            )
        if self.revisions < 1:
            raise ValueError(f"review {self.change_id}: revisions must be >= 1")


class HistoryIndex:
    """Per-file and per-actor history of the commits folded in so far."""

    def __init__(self):
        self.file_history: dict[str, list[tuple[str, str, int]]] = {}
        self.subsystem_changes: dict[str, set[str]] = {}
        self.actor_subsystem_changes: dict[tuple[str, str], set[str]] = {}
        self.participation: dict[str, list[tuple[str, int]]] = {}

    def add(self, commit: CommitRecord, reviewers: frozenset[str] = frozenset()) -> None:
        subsystems = {subsystem_of(d.path) for d in commit.files}
        for delta in commit.files:
            self.file_history.setdefault(delta.path, []).append(
                (commit.id, commit.author, commit.author_time)
            )
        actors = {commit.author} | set(reviewers)
        for sub in subsystems:
            self.subsystem_changes.setdefault(sub, set()).add(commit.id)
            for actor in actors:
                self.actor_subsystem_changes.setdefault((actor, sub), set()).add(commit.id)
        for actor in actors:
            self.participation.setdefault(actor, []).append((commit.id, commit.author_time))


def size_metrics(commit: CommitRecord) -> tuple[int, int]:
    la = sum(d.lines_added for d in commit.files)
    ld = sum(d.lines_deleted for d in commit.files)
    return la, ld


def diffusion_metrics(commit: CommitRecord) -> tuple[int, int, int, float]:
    paths = [d.path for d in commit.files]
    ns = len({subsystem_of(p) for p in paths})
    nd = len({directory_of(p) for p in paths})
    nf = len(set(paths))
    touched = [d.lines_added + d.lines_deleted for d in commit.files]
    total = sum(touched)
    if nf <= 1 or total == 0:
        return ns, nd, nf, 0.0
    entropy = 0.0
    for count in touched:
        if count > 0:
            p = count / total
            entropy -= p * math.log2(p)
    return ns, nd, nf, entropy / math.log2(nf)


def history_metrics(commit: CommitRecord, index: HistoryIndex) -> tuple[int, int, float]:
    paths = {d.path for d in commit.files}
    prior_changes: set[str] = set()
    prior_authors: set[str] = set()
    ages = []
    for path in paths:
        history = index.file_history.get(path, [])
        if not history:
            continue
        for change_id, author, _ in history:
            prior_changes.add(change_id)
            prior_authors.add(author)
        last_time = history[-1][2]
        ages.append((commit.author_time - last_time) / SECONDS_PER_DAY)
    age = sum(ages) / len(ages) if ages else 0.0
    return len(prior_changes), len(prior_authors), age


def experience_metrics(
    commit: CommitRecord, actor: str, index: HistoryIndex
) -> tuple[float, float, float, float]:
    """(exp, recent exp, subsystem exp, subsystem awareness) for one actor."""
    past = index.participation.get(actor, [])
    exp = float(len(past))
    rexp = sum(
        1.0 / ((commit.author_time - when) / SECONDS_PER_YEAR + 1.0) for _, when in past
    )
    subsystems = {subsystem_of(d.path) for d in commit.files}
    actor_subsystem: set[str] = set()
    all_subsystem: set[str] = set()
    for sub in subsystems:
        actor_subsystem |= index.actor_subsystem_changes.get((actor, sub), set())
        all_subsystem |= index.subsystem_changes.get(sub, set())
    sexp = float(len(actor_subsystem))
    awr = sexp / len(all_subsystem) if all_subsystem else 0.0
    return exp, rexp, sexp, awr


def review_metrics(record: ReviewRecord) -> tuple[int, int, int, float]:
    rtime = (record.approved_time - record.created_time) / SECONDS_PER_DAY
    return record.revisions, len(record.voters), record.human_nonowner_comments, rtime


def build_change_metrics(
    commits: list[CommitRecord],
    reviews: dict[str, ReviewRecord] | None = None,
    bic_ids: set[str] | None = None,
) -> list[ChangeMetrics]:
    """One metrics row per commit, folding history in scan order."""
    reviews = reviews or {}
    bic_ids = bic_ids or set()
    index = HistoryIndex()
    rows = []
    for commit in commits:
        la, ld = size_metrics(commit)
        ns, nd, nf, ent = diffusion_metrics(commit)
        nuc, ndev, age = history_metrics(commit, index)
        aexp, arexp, asexp, asawr = experience_metrics(commit, commit.author, index)
        review = reviews.get(commit.id)
        if review is not None and review.reviewers:
            per_reviewer = [
                experience_metrics(commit, reviewer, index)
                for reviewer in sorted(review.reviewers)
            ]
            rexp, rrexp, rsexp, rsawr = (
                sum(vals) / len(vals) for vals in zip(*per_reviewer)
            )
        else:
            rexp = rrexp = rsexp = rsawr = 0.0
        if review is not None:
            nrev, app, hcmt, rtime = review_metrics(review)
        else:
            nrev = app = hcmt = 0
            rtime = 0.0
        rows.append(
            ChangeMetrics(
                change_id=commit.id,
                author_time=commit.author_time,
                la=la,
                ld=ld,
                ns=ns,
                nd=nd,
                nf=nf,
                ent=ent,
                nuc=nuc,
                ndev=ndev,
                age=age,
                aexp=aexp,
                arexp=arexp,
                asexp=asexp,
                asawr=asawr,
                rexp=rexp,
                rrexp=rrexp,
                rsexp=rsexp,
                rsawr=rsawr,
                nrev=nrev,
                app=app,
                hcmt=hcmt,
                rtime=rtime,
                missing_review=review is None,
                is_bic=commit.id in bic_ids,
            )
        )
        index.add(commit, review.reviewers if review else frozenset())
    return rows
