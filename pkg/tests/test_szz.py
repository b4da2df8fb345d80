"""Tests for issue linkage and bug-introducing-change tracing."""

import itertools

import pytest

from jitlab.mining import CommitRecord, GitMiner
from jitlab.szz import (
    DROP_COSMETIC,
    DROP_FUTURE,
    BugLinkage,
    Candidate,
    EvidenceLine,
    IssueRecord,
    LinkageError,
    MalformedPatternError,
    filter_cosmetic,
    filter_future,
    link_issues,
    run_szz,
    trace_bic_candidates,
)


def make_commit(cid, message, author_time=1000):
    return CommitRecord(
        id=cid, author="a <a@x>", author_time=author_time, commit_time=author_time,
        message=message, parents=["parent"],
    )


def make_issue(issue_id, reported_time=2000):
    return IssueRecord(issue_id=issue_id, reported_time=reported_time)


# ---------------------------------------------------------------------------
# linking


def test_direct_message_match():
    commits = [make_commit("c1", "Closes-Bug: #42")]
    issues = {"42": make_issue("42")}
    linkages = link_issues(commits, issues, [r"Closes-Bug: #(\d+)"])
    assert len(linkages) == 1
    assert linkages[0].issue_id == "42"
    assert linkages[0].bfc_ids == ["c1"]


def test_commit_fixing_two_issues_appears_in_both():
    commits = [make_commit("c1", "Closes-Bug: #1\nCloses-Bug: #2")]
    issues = {"1": make_issue("1"), "2": make_issue("2")}
    linkages = link_issues(commits, issues, [r"Closes-Bug: #(\d+)"])
    assert {l.issue_id: l.bfc_ids for l in linkages} == {"1": ["c1"], "2": ["c1"]}


def test_many_to_many_preserved():
    commits = [
        make_commit("c1", "Closes-Bug: #7"),
        make_commit("c2", "Closes-Bug: #7 and Closes-Bug: #8"),
    ]
    issues = {"7": make_issue("7"), "8": make_issue("8")}
    linkages = {l.issue_id: l.bfc_ids for l in link_issues(commits, issues, [r"Closes-Bug: #(\d+)"])}
    assert linkages == {"7": ["c1", "c2"], "8": ["c2"]}


def test_unmatched_issue_yields_no_linkage():
    commits = [make_commit("c1", "no reference here")]
    issues = {"42": make_issue("42")}
    assert link_issues(commits, issues, [r"Closes-Bug: #(\d+)"]) == []


def test_duplicate_pattern_match_not_duplicated(caplog):
    commits = [make_commit("c1", "Bug 5 / Closes-Bug: #5")]
    issues = {"5": make_issue("5")}
    with caplog.at_level("WARNING"):
        linkages = link_issues(commits, issues, [r"Closes-Bug: #(\d+)", r"Bug (\d+)"])
    assert linkages[0].bfc_ids == ["c1"]
    assert any("duplicate link" in r.message for r in caplog.records)


def test_malformed_pattern_rejected():
    with pytest.raises(MalformedPatternError):
        link_issues([], {}, ["(unclosed"])
    with pytest.raises(MalformedPatternError):
        link_issues([], {}, ["no-group"])


# ---------------------------------------------------------------------------
# tracing on the six-commit fixture


def fixture_linkages(fx, **kwargs):
    miner = GitMiner(fx.path)
    commits = miner.scan_history("main")
    issues = {
        iid: IssueRecord(issue_id=iid, reported_time=t) for iid, t in fx.issue_times.items()
    }
    linkages = link_issues(commits, issues, fx.patterns)
    return run_szz(linkages, miner, commits, issues, **kwargs), commits, miner


def test_fixture_candidates_match_hand_trace(szz_fixture):
    (linkages, _, _) = fixture_linkages(szz_fixture, cosmetic_filter=False, date_filter=False)
    by_issue = {l.issue_id: l for l in linkages}
    assert set(by_issue["1"].candidate_ids()) == {
        szz_fixture.c2,
        szz_fixture.c3,
        szz_fixture.c4,
    }
    assert by_issue["2"].candidate_ids() == []
    evidence = {
        c.commit_id: {(e.path, e.line, e.kind) for e in c.evidence}
        for c in by_issue["1"].bic_candidates
    }
    assert evidence[szz_fixture.c2] == {("core.py", 2, "code")}
    assert evidence[szz_fixture.c4] == {("core.py", 3, "code")}
    assert evidence[szz_fixture.c3] == {
        ("helper.py", 1, "comment"),
        ("helper.py", 2, "whitespace"),
    }


def test_fixture_filters_drop_planted_decoys(szz_fixture):
    (linkages, _, _) = fixture_linkages(szz_fixture)
    by_issue = {l.issue_id: l for l in linkages}
    assert by_issue["1"].candidate_ids() == [szz_fixture.c2]
    assert dict(by_issue["1"].dropped) == {
        szz_fixture.c3: DROP_COSMETIC,
        szz_fixture.c4: DROP_FUTURE,
    }


def test_fixture_conservation_at_every_stage(szz_fixture):
    (linkages, _, _) = fixture_linkages(szz_fixture, cosmetic_filter=False, date_filter=False)
    miner = GitMiner(szz_fixture.path)
    commits = {c.id: c for c in miner.scan_history("main")}
    issue = IssueRecord(issue_id="1", reported_time=szz_fixture.issue_times["1"])
    linkage = next(l for l in linkages if l.issue_id == "1")
    total = len(linkage.bic_candidates)
    filter_cosmetic(linkage)
    assert len(linkage.bic_candidates) + len(linkage.dropped) == total
    filter_future(linkage, issue, commits)
    assert len(linkage.bic_candidates) + len(linkage.dropped) == total


def test_fixture_filters_idempotent_and_commute(szz_fixture):
    miner = GitMiner(szz_fixture.path)
    commits = miner.scan_history("main")
    by_id = {c.id: c for c in commits}
    issue = IssueRecord(issue_id="1", reported_time=szz_fixture.issue_times["1"])

    def fresh():
        issues = {
            iid: IssueRecord(issue_id=iid, reported_time=t)
            for iid, t in szz_fixture.issue_times.items()
        }
        linkage = next(
            l
            for l in link_issues(commits, issues, szz_fixture.patterns)
            if l.issue_id == "1"
        )
        return trace_bic_candidates(linkage, miner, by_id)

    outcomes = []
    steps = {
        "cosmetic": lambda l: filter_cosmetic(l),
        "future": lambda l: filter_future(l, issue, by_id),
    }
    for order in itertools.permutations(steps):
        linkage = fresh()
        for name in order:
            steps[name](linkage)
        # idempotence: a second pass moves nothing
        before = (list(linkage.candidate_ids()), sorted(linkage.dropped))
        for name in order:
            steps[name](linkage)
        assert (list(linkage.candidate_ids()), sorted(linkage.dropped)) == before
        outcomes.append(
            (set(linkage.candidate_ids()), {cid for cid, _ in linkage.dropped})
        )
    assert outcomes[0] == outcomes[1]


def test_fixture_evidence_blame_verified(szz_fixture):
    (linkages, commits, miner) = fixture_linkages(szz_fixture)
    by_id = {c.id: c for c in commits}
    for linkage in linkages:
        for candidate in linkage.bic_candidates:
            for ev in candidate.evidence:
                parent = by_id[ev.bfc_id].parents[0]
                origin = miner.blame_lines(parent, ev.path, {ev.line})[ev.line]
                assert origin == candidate.commit_id


def test_pure_addition_bfc_yields_no_candidates(szz_fixture):
    (linkages, _, _) = fixture_linkages(szz_fixture)
    issue2 = next(l for l in linkages if l.issue_id == "2")
    assert issue2.bic_candidates == []
    assert issue2.dropped == []


# ---------------------------------------------------------------------------
# filter unit behavior


def candidate_with_kinds(kinds):
    return Candidate(
        commit_id="x",
        evidence=[
            EvidenceLine(path="f.py", line=i + 1, kind=k, bfc_id="bfc")
            for i, k in enumerate(kinds)
        ],
    )


def test_cosmetic_drop_rules():
    linkage = BugLinkage(issue_id="1", bfc_ids=["bfc"])
    linkage.bic_candidates = [candidate_with_kinds(["comment"])]
    filter_cosmetic(linkage)
    assert linkage.dropped == [("x", DROP_COSMETIC)]

    linkage = BugLinkage(issue_id="1", bfc_ids=["bfc"])
    linkage.bic_candidates = [candidate_with_kinds(["code", "comment"])]
    filter_cosmetic(linkage)
    assert linkage.dropped == []
    assert linkage.candidate_ids() == ["x"]


def test_future_filter_strict_boundary():
    issue = make_issue("1", reported_time=5000)
    commits = {
        "at": make_commit("at", "m", author_time=5000),
        "after": make_commit("after", "m", author_time=5001),
    }
    linkage = BugLinkage(issue_id="1", bfc_ids=["bfc"])
    linkage.bic_candidates = [Candidate("at"), Candidate("after")]
    filter_future(linkage, issue, commits)
    assert linkage.candidate_ids() == ["at"]  # equality retained: strictly "after"
    assert linkage.dropped == [("after", DROP_FUTURE)]


def test_future_filter_requires_reported_time():
    issue = IssueRecord(issue_id="9", reported_time=None)
    linkage = BugLinkage(issue_id="9", bfc_ids=["bfc"])
    with pytest.raises(LinkageError, match="9"):
        filter_future(linkage, issue, {})


def test_linkage_dict_roundtrip(szz_fixture):
    (linkages, _, _) = fixture_linkages(szz_fixture)
    for linkage in linkages:
        assert BugLinkage.from_dict(linkage.to_dict()).to_dict() == linkage.to_dict()
