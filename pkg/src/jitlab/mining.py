"""Git history mining: commits, per-file line-level deltas, and blame.

Everything shells out to the ``git`` CLI and parses plumbing-friendly
output. One ``git log`` invocation streams the whole history with
zero-context patches, so scanning stays a single child process no matter
how many commits the branch has. Blame answers are cached per
(commit, path) and safe for concurrent readers.

Merge commits are diffed against their first parent (mainline
semantics). Renames are followed at 50% similarity.
"""

from __future__ import annotations

import os
import re
import subprocess
import threading
from dataclasses import dataclass, field

COMMIT_SEP = "\x01"
FIELD_SEP = "\x02"
BODY_END = "\x03"

HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")

KIND_CODE = "code"
KIND_COMMENT = "comment"
KIND_WHITESPACE = "whitespace"

# Line-comment markers by file extension. Block comments are approximated
# by their delimiter lines; unknown extensions treat every nonblank line
# as code, which is all the cosmetic filter needs.
COMMENT_MARKERS: dict[str, tuple[str, ...]] = {
    ".py": ("#",),
    ".rb": ("#",),
    ".sh": ("#",),
    ".bash": ("#",),
    ".pl": ("#",),
    ".r": ("#",),
    ".yml": ("#",),
    ".yaml": ("#",),
    ".toml": ("#",),
    ".cfg": ("#",),
    ".ini": ("#", ";"),
    ".c": ("//", "/*", "*", "*/"),
    ".h": ("//", "/*", "*", "*/"),
    ".cc": ("//", "/*", "*", "*/"),
    ".cpp": ("//", "/*", "*", "*/"),
    ".hpp": ("//", "/*", "*", "*/"),
    ".java": ("//", "/*", "*", "*/"),
    ".js": ("//", "/*", "*", "*/"),
    ".ts": ("//", "/*", "*", "*/"),
    ".go": ("//", "/*", "*", "*/"),
    ".rs": ("//", "/*", "*", "*/"),
    ".cs": ("//", "/*", "*", "*/"),
    ".scala": ("//", "/*", "*", "*/"),
    ".kt": ("//", "/*", "*", "*/"),
    ".swift": ("//", "/*", "*", "*/"),
    ".php": ("//", "/*", "*", "*/", "#"),
    ".sql": ("--",),
    ".hs": ("--",),
    ".lua": ("--",),
    ".tex": ("%",),
    ".erl": ("%",),
    ".html": ("<!--",),
    ".xml": ("<!--",),
}


class MiningError(RuntimeError):
    """Repository is unreadable or a git invocation failed."""


class UnknownBranchError(MiningError):
    """The requested branch does not exist in the repository."""


def classify_line(content: str, path: str) -> str:
    """Classify one line of a file as code, comment, or whitespace."""
    stripped = content.strip()
    if not stripped:
        return KIND_WHITESPACE
    _, ext = os.path.splitext(path)
    for marker in COMMENT_MARKERS.get(ext.lower(), ()):
        if stripped.startswith(marker):
            return KIND_COMMENT
    return KIND_CODE


@dataclass
class FileDelta:
    """One file's change within a commit, with line provenance.

    Line numbers are 1-based: deleted lines index the pre-image (first
    parent), added lines the post-image. Kinds are kept per side because
    pre- and post-image numbers overlap.
    """

    path: str
    lines_added: int = 0
    lines_deleted: int = 0
    added_line_numbers: set[int] = field(default_factory=set)
    deleted_line_numbers: set[int] = field(default_factory=set)
    added_line_kinds: dict[int, str] = field(default_factory=dict)
    deleted_line_kinds: dict[int, str] = field(default_factory=dict)
    old_path: str | None = None
    binary: bool = False

    @property
    def source_path(self) -> str:
        """Path of the pre-image (differs from path across a rename)."""
        return self.old_path if self.old_path is not None else self.path

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "lines_added": self.lines_added,
            "lines_deleted": self.lines_deleted,
            "added_line_numbers": sorted(self.added_line_numbers),
            "deleted_line_numbers": sorted(self.deleted_line_numbers),
            "added_line_kinds": {str(k): v for k, v in sorted(self.added_line_kinds.items())},
            "deleted_line_kinds": {str(k): v for k, v in sorted(self.deleted_line_kinds.items())},
            "old_path": self.old_path,
            "binary": self.binary,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FileDelta":
        return cls(
            path=d["path"],
            lines_added=d["lines_added"],
            lines_deleted=d["lines_deleted"],
            added_line_numbers=set(d["added_line_numbers"]),
            deleted_line_numbers=set(d["deleted_line_numbers"]),
            added_line_kinds={int(k): v for k, v in d["added_line_kinds"].items()},
            deleted_line_kinds={int(k): v for k, v in d["deleted_line_kinds"].items()},
            old_path=d.get("old_path"),
            binary=d.get("binary", False),
        )


@dataclass
class CommitRecord:
    """One mined commit. ``files`` holds first-parent deltas."""

    id: str
    author: str
    author_time: int
    message: str
    parents: list[str] = field(default_factory=list)
    files: list[FileDelta] = field(default_factory=list)
    commit_time: int = 0

    @property
    def is_merge(self) -> bool:
        return len(self.parents) > 1

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "author": self.author,
            "author_time": self.author_time,
            "commit_time": self.commit_time,
            "message": self.message,
            "parents": list(self.parents),
            "files": [f.to_dict() for f in self.files],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CommitRecord":
        return cls(
            id=d["id"],
            author=d["author"],
            author_time=d["author_time"],
            commit_time=d.get("commit_time", d["author_time"]),
            message=d["message"],
            parents=list(d["parents"]),
            files=[FileDelta.from_dict(f) for f in d["files"]],
        )


class GitMiner:
    """Read-only access to one repository snapshot."""

    def __init__(self, repo_path: str, rename_threshold: int = 50):
        self.repo_path = str(repo_path)
        self.rename_threshold = rename_threshold
        self._blame_cache: dict[tuple[str, str], dict[int, str]] = {}
        self._cache_lock = threading.Lock()
        if not os.path.isdir(self.repo_path):
            raise MiningError(f"not a readable repository: {self.repo_path}")

    # -- git plumbing -------------------------------------------------

    def _git(self, *args: str, check: bool = True) -> str:
        cmd = ["git", "-c", "safe.directory=*", "-C", self.repo_path, *args]
        env = dict(os.environ, LC_ALL="C", GIT_OPTIONAL_LOCKS="0")
        proc = subprocess.run(cmd, capture_output=True, text=True, env=env)
        if check and proc.returncode != 0:
            raise MiningError(
                f"git {' '.join(args[:2])} failed in {self.repo_path}: {proc.stderr.strip()}"
            )
        return proc.stdout

    def _resolve_branch(self, branch: str) -> str | None:
        """Commit id of the branch tip; None for a commitless repository."""
        proc = subprocess.run(
            ["git", "-c", "safe.directory=*", "-C", self.repo_path, "rev-parse",
             "--verify", "--quiet", f"{branch}^{{commit}}"],
            capture_output=True, text=True,
        )
        if proc.returncode == 0:
            return proc.stdout.strip()
        if not self._git("rev-list", "--all", "--max-count=1").strip():
            return None
        raise UnknownBranchError(f"unknown branch {branch!r} in {self.repo_path}")

    # -- operations ---------------------------------------------------

    def scan_history(self, branch: str = "HEAD") -> list[CommitRecord]:
        """All commits reachable from the branch tip, ancestors first."""
        if self._resolve_branch(branch) is None:
            return []
        out = self._git(
            "log",
            "--topo-order",
            "--reverse",
            "--unified=0",
            "--diff-merges=first-parent",
            f"--find-renames={self.rename_threshold}%",
            "--no-color",
            f"--format={COMMIT_SEP}%H{FIELD_SEP}%P{FIELD_SEP}%an <%ae>{FIELD_SEP}%at{FIELD_SEP}%ct{FIELD_SEP}%B{BODY_END}",
            branch,
            "--",
        )
        records = []
        for chunk in out.split(COMMIT_SEP):
            if not chunk.strip():
                continue
            header, _, patch = chunk.partition(BODY_END)
            sha, parents, author, at, ct, message = header.split(FIELD_SEP)
            records.append(
                CommitRecord(
                    id=sha,
                    author=author,
                    author_time=int(at),
                    commit_time=int(ct),
                    message=message.rstrip("\n"),
                    parents=parents.split() if parents.strip() else [],
                    files=parse_patch(patch),
                )
            )
        return records

    def compute_file_deltas(self, commit_id: str) -> list[FileDelta]:
        """First-parent deltas for one commit (root diffs the empty tree)."""
        out = self._git(
            "show",
            "--unified=0",
            "--diff-merges=first-parent",
            f"--find-renames={self.rename_threshold}%",
            "--no-color",
            "--format=",
            commit_id,
            "--",
        )
        return parse_patch(out)

    def blame_lines(self, commit_id: str, path: str, lines: set[int]) -> dict[int, str]:
        """Origin commit of each requested line of ``path`` at ``commit_id``."""
        table = self._blame_table(commit_id, path)
        origins = {}
        for line in lines:
            if line not in table:
                raise MiningError(f"line {line} out of range for {path} at {commit_id}")
            origins[line] = table[line]
        return origins

    def _blame_table(self, commit_id: str, path: str) -> dict[int, str]:
        key = (commit_id, path)
        with self._cache_lock:
            cached = self._blame_cache.get(key)
        if cached is not None:
            return cached
        out = self._git("blame", "--porcelain", commit_id, "--", path)
        table: dict[int, str] = {}
        for line in out.splitlines():
            if not line or line.startswith("\t"):
                continue
            parts = line.split()
            if len(parts) >= 3 and len(parts[0]) == 40 and all(
                c in "0123456789abcdef" for c in parts[0]
            ):
                try:
                    final_line = int(parts[2])
                except ValueError:
                    continue
                table[final_line] = parts[0]
        if not table and self.file_lines(commit_id, path):
            raise MiningError(f"blame produced no output for {path} at {commit_id}")
        with self._cache_lock:
            self._blame_cache[key] = table
        return table

    def file_lines(self, commit_id: str, path: str) -> list[str]:
        """File content at a commit, split into lines."""
        out = self._git("show", f"{commit_id}:{path}")
        return out.splitlines()

    def diff_text(self, commit_id: str) -> str:
        """Human-readable unified diff of a commit against its first parent."""
        return self._git(
            "show",
            "--diff-merges=first-parent",
            "--no-color",
            "--format=commit %H%nAuthor: %an <%ae>%nDate: %ad%n%n%B",
            commit_id,
            "--",
        )


def parse_patch(patch: str) -> list[FileDelta]:
    """Parse zero-context unified diff output into FileDelta records."""
    deltas: list[FileDelta] = []
    current: FileDelta | None = None
    old_path: str | None = None
    new_path: str | None = None
    del_cursor = add_cursor = 0
    del_left = add_left = 0

    def flush():
        nonlocal current
        if current is not None:
            deltas.append(current)
            current = None

    for line in patch.splitlines():
        if line.startswith("diff --git "):
            flush()
            old_path = new_path = None
            # paths re-resolved from ---/+++/rename lines; the header copy
            # is only a fallback for mode-only and binary changes
            m = re.match(r'^diff --git (?:"?a/(.*?)"?) (?:"?b/(.*?)"?)$', line)
            header_old = m.group(1) if m else None
            header_new = m.group(2) if m else None
            current = FileDelta(path=header_new or header_old or "")
            if header_old and header_new and header_old != header_new:
                current.old_path = header_old
            del_left = add_left = 0
        elif current is None:
            continue
        elif line.startswith("rename from "):
            current.old_path = line[len("rename from ") :]
        elif line.startswith("rename to "):
            current.path = line[len("rename to ") :]
        elif line.startswith("--- "):
            target = line[4:]
            old_path = None if target == "/dev/null" else target[2:]
        elif line.startswith("+++ "):
            target = line[4:]
            new_path = None if target == "/dev/null" else target[2:]
            if new_path is not None:
                current.path = new_path
            elif old_path is not None:
                current.path = old_path  # deletion keeps the pre-image path
            if old_path is not None and new_path is not None and old_path != new_path:
                current.old_path = old_path
        elif line.startswith("Binary files ") or line.startswith("GIT binary patch"):
            current.binary = True
        elif line.startswith("@@ "):
            m = HUNK_RE.match(line)
            if not m:
                continue
            del_start = int(m.group(1))
            del_count = int(m.group(2)) if m.group(2) is not None else 1
            add_start = int(m.group(3))
            add_count = int(m.group(4)) if m.group(4) is not None else 1
            del_cursor, del_left = del_start, del_count
            add_cursor, add_left = add_start, add_count
        elif line.startswith("-") and del_left > 0:
            current.deleted_line_numbers.add(del_cursor)
            current.deleted_line_kinds[del_cursor] = classify_line(
                line[1:], current.source_path
            )
            current.lines_deleted += 1
            del_cursor += 1
            del_left -= 1
        elif line.startswith("+") and add_left > 0:
            current.added_line_numbers.add(add_cursor)
            current.added_line_kinds[add_cursor] = classify_line(line[1:], current.path)
            current.lines_added += 1
            add_cursor += 1
            add_left -= 1
    flush()
    return deltas
