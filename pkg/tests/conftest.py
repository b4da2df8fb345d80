"""Shared fixtures: deterministic throwaway git repositories."""

import subprocess
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "scripts"))

EPOCH_BASE = 1_577_836_800  # 2020-01-01T00:00:00Z
DAY = 86_400


class RepoBuilder:
    """Builds small git repositories with controlled authors and dates."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.counter = 0
        self._run("init", "-q", "-b", "main")

    def _run(self, *args: str, env: dict | None = None) -> str:
        proc = subprocess.run(
            ["git", "-C", str(self.path), *args],
            capture_output=True,
            text=True,
            env=env,
        )
        if proc.returncode != 0:
            raise RuntimeError(f"git {args} failed: {proc.stderr}")
        return proc.stdout.strip()

    def write(self, relpath: str, content: str | None) -> None:
        target = self.path / relpath
        if content is None:
            target.unlink()
        else:
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(content)

    def commit(
        self,
        files: dict[str, str | None],
        message: str,
        author: tuple[str, str] = ("Dev One", "dev1@example.com"),
        when: int | None = None,
    ) -> str:
        """Write files (None deletes), stage everything, commit; returns sha."""
        for relpath, content in files.items():
            self.write(relpath, content)
        self._run("add", "-A")
        if when is None:
            self.counter += 1
            when = EPOCH_BASE + self.counter * DAY
        import os

        env = dict(
            os.environ,
            GIT_AUTHOR_NAME=author[0],
            GIT_AUTHOR_EMAIL=author[1],
            GIT_COMMITTER_NAME=author[0],
            GIT_COMMITTER_EMAIL=author[1],
            GIT_AUTHOR_DATE=f"@{when} +0000",
            GIT_COMMITTER_DATE=f"@{when} +0000",
        )
        self._run("commit", "-q", "--allow-empty", "-m", message, env=env)
        return self._run("rev-parse", "HEAD")

    def checkout(self, ref: str, create: bool = False) -> None:
        args = ["checkout", "-q"] + (["-b"] if create else []) + [ref]
        self._run(*args)

    def merge(
        self,
        branch: str,
        message: str,
        author: tuple[str, str] = ("Dev One", "dev1@example.com"),
        when: int | None = None,
    ) -> str:
        import os

        if when is None:
            self.counter += 1
            when = EPOCH_BASE + self.counter * DAY
        env = dict(
            os.environ,
            GIT_AUTHOR_NAME=author[0],
            GIT_AUTHOR_EMAIL=author[1],
            GIT_COMMITTER_NAME=author[0],
            GIT_COMMITTER_EMAIL=author[1],
            GIT_AUTHOR_DATE=f"@{when} +0000",
            GIT_COMMITTER_DATE=f"@{when} +0000",
        )
        self._run("merge", "-q", "--no-ff", "-m", message, branch, env=env)
        return self._run("rev-parse", "HEAD")

    def rev_count(self, branch: str = "HEAD") -> int:
        return int(self._run("rev-list", "--count", branch))


@pytest.fixture
def repo_builder(tmp_path):
    return RepoBuilder(tmp_path / "repo")


def day(n: int) -> int:
    return EPOCH_BASE + n * DAY


class SzzFixture:
    """Six-commit repository with hand-traceable bug origins.

    Commit plan (all deltas trivially diffable by eye):
      c1 seeds core.py and helper.py
      c2 plants the real bug on core.py line 2            (day 2)
      c3 reformats helper.py's banner: cosmetic decoy     (day 3)
      c4 touches core.py line 3 after issue 1 was filed:  future decoy (day 6)
      c5 fixes issue 1 by rewriting core.py lines 2-3 and
         deleting helper.py's banner lines                (day 7)
      c6 fixes issue 2 by pure addition                   (day 8)

    Issue 1 is reported on day 4, issue 2 on day 5. Hand-traced truth:
    candidates for issue 1 are {c2, c3, c4}; the cosmetic filter drops c3,
    the date filter drops c4, leaving {c2}. Issue 2 has no candidates.
    """

    def __init__(self, root: Path):
        b = RepoBuilder(root)
        dev1 = ("Dev One", "dev1@example.com")
        dev2 = ("Dev Two", "dev2@example.com")
        self.c1 = b.commit(
            {
                "core.py": "def launch():\n    speed = 1\n    return speed\n",
                "helper.py": "# helper banner\n\ndef helper():\n    return 0\n",
            },
            "seed project",
            author=dev1,
            when=day(1),
        )
        self.c2 = b.commit(
            {"core.py": "def launch():\n    speed = 99\n    return speed\n"},
            "tune speed",
            author=dev2,
            when=day(2),
        )
        self.c3 = b.commit(
            {"helper.py": "# === helper banner ===\n   \ndef helper():\n    return 0\n"},
            "tidy helper banner",
            author=dev1,
            when=day(3),
        )
        self.c4 = b.commit(
            {"core.py": "def launch():\n    speed = 99\n    return speed  # adjusted\n"},
            "annotate return",
            author=dev2,
            when=day(6),
        )
        self.c5 = b.commit(
            {
                "core.py": "def launch():\n    speed = 2\n    return speed\n",
                "helper.py": "def helper():\n    return 0\n",
            },
            "Fixes issue #1: correct launch speed",
            author=dev1,
            when=day(7),
        )
        self.c6 = b.commit(
            {"extras.py": "def extra():\n    return 42\n"},
            "Fixes issue #2: add missing extra entry point",
            author=dev2,
            when=day(8),
        )
        self.builder = b
        self.path = str(b.path)
        self.patterns = [r"Fixes issue #(\d+)"]
        self.issue_times = {"1": day(4), "2": day(5)}


@pytest.fixture
def szz_fixture(tmp_path):
    return SzzFixture(tmp_path / "szz_repo")


@pytest.fixture(scope="session")
def demo_corpus(tmp_path_factory):
    """Synthetic 160-commit corpus with issues, reviews, and labels."""
    from make_demo_corpus import build_demo_corpus

    root = tmp_path_factory.mktemp("demo_corpus")
    return build_demo_corpus(root, n_commits=160)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion."""
    reports = [
        rep
        for outcome in ("passed", "failed")
        for rep in terminalreporter.stats.get(outcome, [])
        if "test_acceptance" in rep.nodeid and rep.when == "call"
    ]
    skipped = [
        rep
        for rep in terminalreporter.stats.get("skipped", [])
        if "test_acceptance" in rep.nodeid
    ]
    if not reports and not skipped:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for rep in sorted(reports, key=lambda r: r.nodeid):
        word = "PASS" if rep.passed else "FAIL"
        terminalreporter.write_line(f"  {word}  {rep.nodeid.split('::')[-1]}")
    for rep in sorted(skipped, key=lambda r: r.nodeid):
        terminalreporter.write_line(f"  SKIP  {rep.nodeid.split('::')[-1]}")
