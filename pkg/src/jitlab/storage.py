"""File formats and deterministic serialization.

Newline-delimited JSON for record streams, CSV with round-trip float
formatting for tabular exports, a flat key=value config format, and
content checksums for the stage ledger. All writers emit byte-identical
output for identical inputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from datetime import datetime, timezone

from .metrics import CSV_COLUMNS, ChangeMetrics, ReviewRecord
from .szz import IssueRecord


class DataError(ValueError):
    """Malformed or unreadable input data."""


def fmt_value(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt_value(v) for v in row])


def read_csv(path: str) -> tuple[list[str], list[dict[str, str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader.fieldnames or []), list(reader)


def write_ndjson(path: str, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_ndjson(path: str) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


def write_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# timestamps


def parse_time(raw) -> int:
    """Epoch seconds from an int, numeric string, or ISO-8601 string."""
    if isinstance(raw, (int, float)):
        return int(raw)
    text = str(raw).strip()
    if not text:
        raise DataError("empty timestamp")
    try:
        return int(text)
    except ValueError:
        pass
    try:
        normalized = text.replace("Z", "+00:00")
        dt = datetime.fromisoformat(normalized)
    except ValueError as exc:
        raise DataError(f"unparseable timestamp {raw!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


# ---------------------------------------------------------------------------
# corpus loaders


def load_issues(path: str) -> dict[str, IssueRecord]:
    """Issues from CSV or newline-JSON, keyed by unique issue_id."""
    issues: dict[str, IssueRecord] = {}

    def add(record: IssueRecord):
        if record.issue_id in issues:
            raise DataError(f"duplicate issue id {record.issue_id!r} in {path}")
        issues[record.issue_id] = record

    if path.endswith(".csv"):
        _, rows = read_csv(path)
        for row in rows:
            add(
                IssueRecord(
                    issue_id=str(row["issue_id"]),
                    reported_time=parse_time(row["reported_time"]),
                    title=row.get("title", ""),
                    description=row.get("description", ""),
                    reporter=row.get("reporter", ""),
                )
            )
    else:
        for entry in read_ndjson(path):
            entry = dict(entry)
            entry["reported_time"] = parse_time(entry["reported_time"])
            add(IssueRecord.from_dict(entry))
    return issues


def _identities(raw) -> frozenset[str]:
    if isinstance(raw, str):
        return frozenset(part for part in raw.split(";") if part)
    return frozenset(raw or ())


def load_reviews(path: str) -> dict[str, ReviewRecord]:
    """Review records from CSV (identity lists ;-joined) or newline-JSON."""
    reviews: dict[str, ReviewRecord] = {}
    if path.endswith(".csv"):
        _, rows = read_csv(path)
        entries = rows
    else:
        entries = read_ndjson(path)
    for entry in entries:
        record = ReviewRecord(
            change_id=str(entry["change_id"]),
            created_time=parse_time(entry["created_time"]),
            approved_time=parse_time(entry["approved_time"]),
            revisions=int(entry["revisions"]),
            voters=_identities(entry.get("voters")),
            human_nonowner_comments=int(entry.get("human_nonowner_comments", 0)),
            reviewers=_identities(entry.get("reviewers")),
        )
        if record.change_id in reviews:
            raise DataError(f"duplicate review for change {record.change_id!r}")
        reviews[record.change_id] = record
    return reviews


# ---------------------------------------------------------------------------
# change-metrics table


def write_changes_csv(path: str, rows: list[ChangeMetrics]) -> None:
    write_csv(
        path,
        list(CSV_COLUMNS),
        [[getattr(row, col) for col in CSV_COLUMNS] for row in rows],
    )


def read_changes_csv(path: str) -> list[ChangeMetrics]:
    _, raw_rows = read_csv(path)
    out = []
    int_fields = {"author_time", "la", "ld", "ns", "nd", "nf", "nuc", "ndev",
                  "nrev", "app", "hcmt"}
    float_fields = {"ent", "age", "aexp", "arexp", "asexp", "asawr",
                    "rexp", "rrexp", "rsexp", "rsawr", "rtime"}
    for raw in raw_rows:
        kwargs = {"change_id": raw["change_id"]}
        for name in int_fields:
            kwargs[name] = int(raw[name])
        for name in float_fields:
            kwargs[name] = float(raw[name])
        kwargs["missing_review"] = raw["missing_review"] == "1"
        kwargs["is_bic"] = raw["is_bic"] == "1"
        kwargs["period"] = int(raw["period"]) if raw["period"] != "" else None
        out.append(ChangeMetrics(**kwargs))
    return out


# ---------------------------------------------------------------------------
# key=value config files


def load_config_file(path: str) -> dict[str, object]:
    """Flat ``key = value`` lines; JSON parsed values, # comments allowed."""
    out: dict[str, object] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise DataError(f"{path}:{lineno}: expected key = value")
            key, _, raw = stripped.partition("=")
            raw = raw.strip()
            try:
                out[key.strip()] = json.loads(raw)
            except json.JSONDecodeError:
                out[key.strip()] = raw
    return out


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
