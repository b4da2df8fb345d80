"""Issue linkage and bug-introducing-change tracing.

Links issues to bug-fixing changes through message patterns, then walks
blame from the fixed pre-image lines to candidate bug-introducing
changes. Candidates evidenced only by comment/whitespace lines and
candidates authored after the issue was reported are moved to a drop
ledger rather than discarded, so every filter conserves candidates.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .mining import KIND_CODE, CommitRecord, GitMiner

log = logging.getLogger(__name__)

DROP_COSMETIC = "cosmetic"
DROP_FUTURE = "future_dated"
DROP_SUSPICIOUS = "suspicious_flag"


class LinkageError(ValueError):
    pass


class MalformedPatternError(LinkageError):
    pass


@dataclass(frozen=True)
class IssueRecord:
    issue_id: str
    reported_time: int | None
    title: str = ""
    description: str = ""
    reporter: str = ""

    def to_dict(self) -> dict:
        return {
            "issue_id": self.issue_id,
            "reported_time": self.reported_time,
            "title": self.title,
            "description": self.description,
            "reporter": self.reporter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IssueRecord":
        return cls(
            issue_id=str(d["issue_id"]),
            reported_time=d.get("reported_time"),
            title=d.get("title", ""),
            description=d.get("description", ""),
            reporter=d.get("reporter", ""),
        )


@dataclass(frozen=True)
class EvidenceLine:
    """One fixed pre-image line blaming back to a candidate."""

    path: str
    line: int
    kind: str
    bfc_id: str

    def to_dict(self) -> dict:
        return {"path": self.path, "line": self.line, "kind": self.kind, "bfc_id": self.bfc_id}

    @classmethod
    def from_dict(cls, d: dict) -> "EvidenceLine":
        return cls(path=d["path"], line=d["line"], kind=d["kind"], bfc_id=d["bfc_id"])


@dataclass
class Candidate:
    commit_id: str
    evidence: list[EvidenceLine] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"commit_id": self.commit_id, "evidence": [e.to_dict() for e in self.evidence]}

    @classmethod
    def from_dict(cls, d: dict) -> "Candidate":
        return cls(
            commit_id=d["commit_id"],
            evidence=[EvidenceLine.from_dict(e) for e in d["evidence"]],
        )


@dataclass
class BugLinkage:
    issue_id: str
    bfc_ids: list[str] = field(default_factory=list)
    bic_candidates: list[Candidate] = field(default_factory=list)
    dropped: list[tuple[str, str]] = field(default_factory=list)
    suspicious: bool = False  # external annotation, passed through untouched

    def candidate_ids(self) -> list[str]:
        return [c.commit_id for c in self.bic_candidates]

    def to_dict(self) -> dict:
        return {
            "issue_id": self.issue_id,
            "bfc_ids": list(self.bfc_ids),
            "bic_candidates": [c.to_dict() for c in self.bic_candidates],
            "dropped": [list(d) for d in self.dropped],
            "suspicious": self.suspicious,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BugLinkage":
        return cls(
            issue_id=str(d["issue_id"]),
            bfc_ids=list(d["bfc_ids"]),
            bic_candidates=[Candidate.from_dict(c) for c in d["bic_candidates"]],
            dropped=[tuple(x) for x in d["dropped"]],
            suspicious=d.get("suspicious", False),
        )


def compile_patterns(patterns: list[str]) -> list[re.Pattern]:
    compiled = []
    for pattern in patterns:
        try:
            rx = re.compile(pattern)
        except re.error as exc:
            raise MalformedPatternError(f"bad issue-id pattern {pattern!r}: {exc}") from exc
        if rx.groups < 1:
            raise MalformedPatternError(
                f"pattern {pattern!r} needs one capturing group for the issue id"
            )
        compiled.append(rx)
    return compiled


def link_issues(
    commits: list[CommitRecord],
    issues: dict[str, IssueRecord],
    patterns: list[str],
) -> list[BugLinkage]:
    """Match issue ids in commit messages; one linkage per matched issue.

    Many-to-many is preserved: a commit fixing two issues appears in both
    linkages, an issue fixed twice lists both commits. Re-matches of the
    same (commit, issue) pair are logged and merged, never duplicated.
    """
    compiled = compile_patterns(patterns)
    by_issue: dict[str, list[str]] = {}
    seen: set[tuple[str, str]] = set()
    for commit in commits:
        for rx in compiled:
            for match in rx.finditer(commit.message):
                issue_id = match.group(1)
                if issue_id not in issues:
                    continue
                if (commit.id, issue_id) in seen:
                    log.warning(
                        "duplicate link %s -> issue %s (extra pattern match ignored)",
                        commit.id,
                        issue_id,
                    )
                    continue
                seen.add((commit.id, issue_id))
                by_issue.setdefault(issue_id, []).append(commit.id)
    return [BugLinkage(issue_id=iid, bfc_ids=bfcs) for iid, bfcs in sorted(by_issue.items())]


def trace_bic_candidates(
    linkage: BugLinkage,
    miner: GitMiner,
    commits_by_id: dict[str, CommitRecord],
) -> BugLinkage:
    """Populate bic_candidates by blaming the fixed pre-image lines.

    Each bug-fixing change's deleted lines are blamed at its first
    parent; origins become candidates carrying (path, line, kind)
    evidence. Pure-addition fixes legitimately produce no candidates.
    """
    evidence_by_origin: dict[str, list[EvidenceLine]] = {}
    for bfc_id in linkage.bfc_ids:
        bfc = commits_by_id[bfc_id]
        if not bfc.parents:
            continue  # root commit: no pre-image to blame
        parent = bfc.parents[0]
        for delta in bfc.files:
            if delta.binary or not delta.deleted_line_numbers:
                continue
            origins = miner.blame_lines(parent, delta.source_path, delta.deleted_line_numbers)
            for line, origin in sorted(origins.items()):
                evidence_by_origin.setdefault(origin, []).append(
                    EvidenceLine(
                        path=delta.source_path,
                        line=line,
                        kind=delta.deleted_line_kinds[line],
                        bfc_id=bfc_id,
                    )
                )
    linkage.bic_candidates = [
        Candidate(commit_id=origin, evidence=evidence)
        for origin, evidence in sorted(evidence_by_origin.items())
    ]
    return linkage


def _drop(linkage: BugLinkage, predicate, reason: str) -> BugLinkage:
    retained = []
    for candidate in linkage.bic_candidates:
        if predicate(candidate):
            linkage.dropped.append((candidate.commit_id, reason))
        else:
            retained.append(candidate)
    linkage.bic_candidates = retained
    return linkage


def filter_cosmetic(linkage: BugLinkage) -> BugLinkage:
    """Drop candidates whose every evidence line is comment or whitespace."""
    return _drop(
        linkage,
        lambda c: all(e.kind != KIND_CODE for e in c.evidence),
        DROP_COSMETIC,
    )


def filter_future(
    linkage: BugLinkage,
    issue: IssueRecord,
    commits_by_id: dict[str, CommitRecord],
    date_field: str = "author_time",
) -> BugLinkage:
    """Drop candidates authored strictly after the issue was reported.

    ``date_field`` switches between author and committer timestamps.
    """
    if issue.reported_time is None:
        raise LinkageError(f"issue {issue.issue_id} has no reported_time")
    if date_field not in ("author_time", "commit_time"):
        raise LinkageError(f"unknown date field {date_field!r}")

    def too_late(candidate: Candidate) -> bool:
        commit = commits_by_id[candidate.commit_id]
        return getattr(commit, date_field) > issue.reported_time

    return _drop(linkage, too_late, DROP_FUTURE)


def filter_suspicious(linkage: BugLinkage, suspicious_ids: set[str]) -> BugLinkage:
    """Drop candidates flagged suspicious by an external annotation file."""
    return _drop(linkage, lambda c: c.commit_id in suspicious_ids, DROP_SUSPICIOUS)


def run_szz(
    linkages: list[BugLinkage],
    miner: GitMiner,
    commits: list[CommitRecord],
    issues: dict[str, IssueRecord],
    cosmetic_filter: bool = True,
    date_filter: bool = True,
    date_field: str = "author_time",
    suspicious_ids: set[str] | None = None,
) -> list[BugLinkage]:
    """Trace candidates for every linkage and apply the enabled filters."""
    commits_by_id = {c.id: c for c in commits}
    for linkage in linkages:
        trace_bic_candidates(linkage, miner, commits_by_id)
        if cosmetic_filter:
            filter_cosmetic(linkage)
        if date_filter:
            filter_future(linkage, issues[linkage.issue_id], commits_by_id, date_field)
        if suspicious_ids:
            filter_suspicious(linkage, suspicious_ids)
    return linkages
