"""Tests for the curation HTTP API, over a live loopback server."""

import json
import threading
import urllib.error
import urllib.request

import pytest

from jitlab.api import CurationService, serve_curation_api
from jitlab.curation import LabelStore, default_catalog
from jitlab.szz import IssueRecord


@pytest.fixture
def service():
    issues = {
        str(i): IssueRecord(issue_id=str(i), reported_time=1000 + i, title=f"issue {i}",
                            description=f"details {i}")
        for i in range(4)
    }
    store = LabelStore(set(issues), default_catalog())
    return CurationService(store, issues)


@pytest.fixture
def live(service):
    server = serve_curation_api(service, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address[0], server.server_address[1]
    yield f"http://{host}:{port}", service
    server.shutdown()
    thread.join(timeout=5)


def get(base, path):
    with urllib.request.urlopen(base + path) as resp:
        return resp.status, json.loads(resp.read())


def post(base, path, payload):
    request = urllib.request.Request(
        base + path,
        data=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(request) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


def test_post_valid_label_created(live):
    base, service = live
    status, body = post(
        base, "/api/labels",
        {"issue_id": "0", "rater": "alice", "verdict": "extrinsic", "rule_id": "E1",
         "labeled_time": 7},
    )
    assert status == 201
    assert body["verdict"] == "extrinsic"
    assert service.store.records[("0", "alice")].verdict == "extrinsic"


def test_post_rule_mismatch_is_400(live):
    base, _ = live
    status, body = post(
        base, "/api/labels",
        {"issue_id": "0", "rater": "alice", "verdict": "intrinsic", "rule_id": "E1"},
    )
    assert status == 400
    assert "error" in body


def test_post_unknown_issue_is_404(live):
    base, _ = live
    status, _ = post(
        base, "/api/labels",
        {"issue_id": "999", "rater": "alice", "verdict": "intrinsic", "rule_id": "I1"},
    )
    assert status == 404


def test_overwrite_without_token_is_409(live):
    base, _ = live
    _, first = post(
        base, "/api/labels",
        {"issue_id": "1", "rater": "alice", "verdict": "intrinsic", "rule_id": "I1"},
    )
    status, _ = post(
        base, "/api/labels",
        {"issue_id": "1", "rater": "alice", "verdict": "mislabeled", "rule_id": "M1"},
    )
    assert status == 409
    status, body = post(
        base, "/api/labels",
        {"issue_id": "1", "rater": "alice", "verdict": "mislabeled", "rule_id": "M1",
         "expected_token": first["token"]},
    )
    assert status == 201
    assert body["verdict"] == "mislabeled"


def test_next_task_walks_unlabeled_then_disputed(live):
    base, _ = live
    status, task = get(base, "/api/tasks/next?rater=alice")
    assert status == 200
    assert task["issue_id"] == "0"
    assert task["rules"]["rules"]
    assert task["prior_label"] is None
    assert not task["disputed"]

    rules = {"intrinsic": "I1", "extrinsic": "E1", "mislabeled": "M2"}
    for issue in "0123":
        post(base, "/api/labels",
             {"issue_id": issue, "rater": "alice", "verdict": "intrinsic", "rule_id": "I1"})
    for issue, verdict in zip("0123", ["intrinsic", "extrinsic", "intrinsic", "intrinsic"]):
        post(base, "/api/labels",
             {"issue_id": issue, "rater": "bob", "verdict": verdict,
              "rule_id": rules[verdict]})

    status, task = get(base, "/api/tasks/next?rater=alice")
    assert status == 200
    assert task["disputed"]
    assert task["issue_id"] == "1"
    assert len(task["labels"]) == 2

    # resolution clears the queue
    _, current = get(base, "/api/disagreements")
    token = next(
        l["token"] for l in current["disagreements"][0]["labels"] if l["rater"] == "alice"
    )
    post(base, "/api/labels",
         {"issue_id": "1", "rater": "alice", "verdict": "extrinsic", "rule_id": "E1",
          "expected_token": token})
    status, task = get(base, "/api/tasks/next?rater=alice")
    assert task == {"done": True}


def test_agreement_endpoint_perfect_and_fixture(live):
    base, _ = live
    status, body = get(base, "/api/agreement")
    assert status == 200
    assert body["alpha_bug_vs_not"] is None  # nothing double-rated yet

    # the hand coincidence fixture: (A,A),(A,A),(B,B),(A,B) on bug-vs-not
    verdicts_a = ["intrinsic", "intrinsic", "mislabeled", "intrinsic"]
    verdicts_b = ["intrinsic", "intrinsic", "mislabeled", "mislabeled"]
    rules = {"intrinsic": "I1", "mislabeled": "M2"}
    for i, (va, vb) in enumerate(zip(verdicts_a, verdicts_b)):
        post(base, "/api/labels",
             {"issue_id": str(i), "rater": "alice", "verdict": va, "rule_id": rules[va]})
        post(base, "/api/labels",
             {"issue_id": str(i), "rater": "bob", "verdict": vb, "rule_id": rules[vb]})
    status, body = get(base, "/api/agreement")
    assert status == 200
    assert body["alpha_bug_vs_not"] == pytest.approx(0.5333333, abs=1e-6)
    assert body["disagreements"] == ["3"]
    assert body["n_double_rated"] == 4


def test_progress_endpoint(live):
    base, _ = live
    post(base, "/api/labels",
         {"issue_id": "0", "rater": "alice", "verdict": "intrinsic", "rule_id": "I1"})
    status, body = get(base, "/api/progress")
    assert status == 200
    assert body["issues_total"] == 4
    assert body["per_rater"] == {"alice": 1}


def test_unknown_endpoint_404(live):
    base, _ = live
    request = urllib.request.Request(base + "/api/nothing")
    with pytest.raises(urllib.error.HTTPError) as err:
        urllib.request.urlopen(request)
    assert err.value.code == 404


def test_store_persisted_after_write(tmp_path):
    issues = {"1": IssueRecord(issue_id="1", reported_time=0)}
    save_path = tmp_path / "labels.ndjson"
    store = LabelStore({"1"}, default_catalog())
    service = CurationService(store, issues, save_path=str(save_path))
    service.post_label(
        {"issue_id": "1", "rater": "r", "verdict": "intrinsic", "rule_id": "I1",
         "labeled_time": 3}
    )
    assert save_path.exists()
    reloaded = LabelStore.load(str(save_path), {"1"})
    assert reloaded.records[("1", "r")].verdict == "intrinsic"


def test_api_writes_equal_direct_store_calls_by_audit_log(live):
    # the API must be a thin adapter: replaying the same calls directly on a
    # fresh store yields an identical audit trail
    base, service = live
    calls = [
        {"issue_id": "0", "rater": "a", "verdict": "intrinsic", "rule_id": "I1",
         "labeled_time": 1},
        {"issue_id": "1", "rater": "a", "verdict": "mislabeled", "rule_id": "M4",
         "labeled_time": 2},
        {"issue_id": "0", "rater": "b", "verdict": "extrinsic", "rule_id": "E2",
         "labeled_time": 3},
    ]
    for call in calls:
        status, _ = post(base, "/api/labels", call)
        assert status == 201
    token = service.store.records[("0", "a")].token
    overwrite = {"issue_id": "0", "rater": "a", "verdict": "extrinsic", "rule_id": "E4",
                 "labeled_time": 4, "expected_token": token}
    status, _ = post(base, "/api/labels", overwrite)
    assert status == 201

    mirror = LabelStore({"0", "1", "2", "3"}, default_catalog())
    for call in calls:
        mirror.record_label(**{k: v for k, v in call.items()})
    mirror.record_label(
        issue_id="0", rater="a", verdict="extrinsic", rule_id="E4", labeled_time=4,
        expected_token=mirror.records[("0", "a")].token,
    )
    assert service.store.audit == mirror.audit


def test_task_includes_bfc_diffs(szz_fixture):
    from jitlab.mining import GitMiner
    from jitlab.szz import link_issues

    miner = GitMiner(szz_fixture.path)
    commits = miner.scan_history("main")
    issues = {
        iid: IssueRecord(issue_id=iid, reported_time=t, title=f"issue {iid}")
        for iid, t in szz_fixture.issue_times.items()
    }
    linkages = link_issues(commits, issues, szz_fixture.patterns)
    store = LabelStore(set(issues), default_catalog())
    service = CurationService(store, issues, linkages=linkages, repo_path=szz_fixture.path)
    task = service.next_task("alice")
    assert task["issue_id"] == "1"
    assert len(task["bfc_diffs"]) == 1
    assert "speed = 2" in task["bfc_diffs"][0]
