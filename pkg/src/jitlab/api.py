"""HTTP JSON API serving the curation workbench.

A thin adapter over the label store: every write goes through
``LabelStore.record_label`` so the audit trail and token checks apply to
API traffic exactly as they do to library calls.

  GET  /api/tasks/next?rater=R   next unlabeled (then disputed) issue
  POST /api/labels               record one verdict (201, 400, 404, 409)
  GET  /api/agreement            AgreementReport (alphas null when not computable)
  GET  /api/disagreements        issues whose raters currently disagree
  GET  /api/progress             per-rater progress counters
  GET  /api/rules                the rule catalog

With ``ui_dir`` set, anything outside /api is served as static files so
the bundled front end and the API share one origin.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .curation import (
    ConflictError,
    CurationError,
    LabelStore,
    UnknownIssueError,
)
from .mining import GitMiner
from .szz import BugLinkage, IssueRecord

log = logging.getLogger(__name__)


class CurationService:
    """Store plus corpus context; writes are serialized by a lock."""

    def __init__(
        self,
        store: LabelStore,
        issues: dict[str, IssueRecord],
        linkages: list[BugLinkage] | None = None,
        repo_path: str | None = None,
        save_path: str | None = None,
    ):
        self.store = store
        self.issues = issues
        self.linkages = {l.issue_id: l for l in (linkages or [])}
        self.miner = GitMiner(repo_path) if repo_path else None
        self.save_path = save_path
        self._write_lock = threading.Lock()
        self._diff_cache: dict[str, list[str]] = {}

    def _bfc_diffs(self, issue_id: str) -> list[str]:
        if issue_id in self._diff_cache:
            return self._diff_cache[issue_id]
        linkage = self.linkages.get(issue_id)
        diffs = []
        if linkage and self.miner:
            for bfc in linkage.bfc_ids:
                diffs.append(self.miner.diff_text(bfc))
        self._diff_cache[issue_id] = diffs
        return diffs

    def _task_body(self, issue_id: str, rater: str, disputed: bool) -> dict:
        issue = self.issues[issue_id]
        prior = self.store.records.get((issue_id, rater))
        body = {
            "done": False,
            "issue_id": issue_id,
            "title": issue.title,
            "description": issue.description,
            "reported_time": issue.reported_time,
            "bfc_diffs": self._bfc_diffs(issue_id),
            "rules": self.store.catalog.to_dict(),
            "prior_label": prior.to_dict() if prior else None,
            "disputed": disputed,
        }
        if disputed:
            body["labels"] = [r.to_dict() for r in self.store.labels_for_issue(issue_id)]
        return body

    def next_task(self, rater: str) -> dict:
        if not rater:
            raise CurationError("rater query parameter required")
        for issue_id in sorted(self.issues):
            if (issue_id, rater) not in self.store.records:
                return self._task_body(issue_id, rater, disputed=False)
        for issue_id in self.store.disagreements():
            return self._task_body(issue_id, rater, disputed=True)
        return {"done": True}

    def post_label(self, payload: dict) -> dict:
        required = {"issue_id", "rater", "verdict", "rule_id"}
        missing = required - set(payload)
        if missing:
            raise CurationError(f"missing fields: {sorted(missing)}")
        with self._write_lock:
            record = self.store.record_label(
                issue_id=str(payload["issue_id"]),
                rater=str(payload["rater"]),
                verdict=payload["verdict"],
                rule_id=payload["rule_id"],
                rationale=payload.get("rationale", ""),
                labeled_time=payload.get("labeled_time"),
                expected_token=payload.get("expected_token"),
            )
            if self.save_path:
                self.store.save(self.save_path)
        return record.to_dict()

    def agreement(self) -> dict:
        try:
            return self.store.agreement_report().to_dict()
        except CurationError:
            return {
                "alpha_bug_vs_not": None,
                "alpha_intrinsic_vs_extrinsic": None,
                "disagreements": self.store.disagreements(),
                "coverage": 0.0,
                "n_double_rated": 0,
            }

    def disagreements(self) -> dict:
        return {
            "disagreements": [
                {
                    "issue_id": issue_id,
                    "labels": [r.to_dict() for r in self.store.labels_for_issue(issue_id)],
                }
                for issue_id in self.store.disagreements()
            ]
        }


def _make_handler(service: CurationService, ui_dir: str | None):
    import os

    class Handler(BaseHTTPRequestHandler):
        server_version = "jitlab-curation"

        def log_message(self, fmt, *args):
            log.debug("api: " + fmt, *args)

        def _send(self, status: int, body: dict) -> None:
            data = json.dumps(body, sort_keys=True).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.end_headers()
            self.wfile.write(data)

        def _send_file(self, relpath: str) -> None:
            if not ui_dir:
                self._send(404, {"error": "no UI bundled"})
                return
            relpath = relpath.lstrip("/") or "index.html"
            base = os.path.abspath(ui_dir)
            target = os.path.abspath(os.path.join(base, relpath))
            if not target.startswith(base + os.sep) or not os.path.isfile(target):
                self._send(404, {"error": "not found"})
                return
            content_types = {
                ".html": "text/html",
                ".js": "text/javascript",
                ".css": "text/css",
                ".map": "application/json",
            }
            ext = os.path.splitext(target)[1]
            with open(target, "rb") as fh:
                data = fh.read()
            self.send_response(200)
            self.send_header("Content-Type", content_types.get(ext, "application/octet-stream"))
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_OPTIONS(self):
            self._send(204, {})

        def do_GET(self):
            parsed = urlparse(self.path)
            query = parse_qs(parsed.query)
            try:
                if parsed.path == "/api/tasks/next":
                    rater = query.get("rater", [""])[0]
                    self._send(200, service.next_task(rater))
                elif parsed.path == "/api/agreement":
                    self._send(200, service.agreement())
                elif parsed.path == "/api/disagreements":
                    self._send(200, service.disagreements())
                elif parsed.path == "/api/progress":
                    self._send(200, service.store.progress())
                elif parsed.path == "/api/rules":
                    self._send(200, service.store.catalog.to_dict())
                elif parsed.path.startswith("/api/"):
                    self._send(404, {"error": f"no such endpoint {parsed.path}"})
                else:
                    self._send_file(parsed.path)
            except CurationError as exc:
                self._send(400, {"error": str(exc)})
            except Exception as exc:  # pragma: no cover - defensive
                log.exception("api failure")
                self._send(500, {"error": str(exc)})

        def do_POST(self):
            parsed = urlparse(self.path)
            if parsed.path != "/api/labels":
                self._send(404, {"error": f"no such endpoint {parsed.path}"})
                return
            length = int(self.headers.get("Content-Length", "0"))
            try:
                payload = json.loads(self.rfile.read(length) or b"{}")
            except json.JSONDecodeError:
                self._send(400, {"error": "body must be JSON"})
                return
            try:
                record = service.post_label(payload)
                self._send(201, record)
            except ConflictError as exc:
                self._send(409, {"error": str(exc)})
            except UnknownIssueError as exc:
                self._send(404, {"error": str(exc)})
            except CurationError as exc:
                self._send(400, {"error": str(exc)})
            except Exception as exc:  # pragma: no cover - defensive
                log.exception("api failure")
                self._send(500, {"error": str(exc)})

    return Handler


def serve_curation_api(
    service: CurationService,
    host: str = "127.0.0.1",
    port: int = 0,
    ui_dir: str | None = None,
) -> ThreadingHTTPServer:
    """Bind and return the server; callers drive serve_forever/shutdown."""
    handler = _make_handler(service, ui_dir)
    server = ThreadingHTTPServer((host, port), handler)
    log.info("curation api listening on http://%s:%d", *server.server_address)
    return server
