#!/usr/bin/env python3
"""Build a synthetic corpus for end-to-end runs.

Creates a git repository with planted bug-introducing chains, an issue
file, review records, and an agreed two-rater label file, plus a ready
config. Every fix commit deletes exactly the block its planted bug
appended, so blame tracing has a known ground truth, and planted changes
are systematically larger so the fitted models have a real signal.

Usage:
    python3 scripts/make_demo_corpus.py [--root demo] [--commits 160]
"""

from __future__ import annotations

import argparse
import json
import os
import random
import subprocess
from pathlib import Path

EPOCH = 1_546_300_800  # 2019-01-01T00:00:00Z
DAY = 86_400

AUTHORS = [
    ("Ada Core", "ada@example.com"),
    ("Ben Fields", "ben@example.com"),
    ("Cleo Ray", "cleo@example.com"),
    ("Dev Ohm", "dev@example.com"),
]

FILES = ["src/core.py", "src/api.py", "src/db.py", "lib/util.py"]


def git(repo: Path, *args: str, env: dict | None = None) -> str:
    proc = subprocess.run(
        ["git", "-C", str(repo), *args], capture_output=True, text=True, env=env
    )
    if proc.returncode != 0:
        raise RuntimeError(f"git {args} failed: {proc.stderr}")
    return proc.stdout.strip()


def commit_all(repo: Path, message: str, author: tuple[str, str], when: int) -> str:
    git(repo, "add", "-A")
    env = dict(
        os.environ,
        GIT_AUTHOR_NAME=author[0],
        GIT_AUTHOR_EMAIL=author[1],
        GIT_COMMITTER_NAME=author[0],
        GIT_COMMITTER_EMAIL=author[1],
        GIT_AUTHOR_DATE=f"@{when} +0000",
        GIT_COMMITTER_DATE=f"@{when} +0000",
    )
    git(repo, "commit", "-q", "--allow-empty", "-m", message, env=env)
    return git(repo, "rev-parse", "HEAD")


def build_demo_corpus(
    root: Path,
    n_commits: int = 160,
    days_between: float = 3.5,
    plant_every: int = 10,
    seed: int = 42,
) -> dict:
    """Returns the paths of everything it wrote."""
    root = Path(root)
    repo = root / "repo"
    repo.mkdir(parents=True, exist_ok=True)
    git(repo, "init", "-q", "-b", "main")
    rng = random.Random(seed)

    lines: dict[str, list[str]] = {}
    for name in FILES:
        (repo / name).parent.mkdir(parents=True, exist_ok=True)
        lines[name] = ["def entry():", "    return 0"] + [
            f"VALUE_{i} = {i * 3}" for i in range(2, 32)
        ]
        (repo / name).write_text("\n".join(lines[name]) + "\n")
    when = EPOCH
    first_author = AUTHORS[0]
    commit_all(repo, "seed project layout", first_author, when)

    issues = []
    reviews = []
    labels = []
    plants: dict[int, str] = {}  # issue no -> file holding its risky block
    issue_no = 0

    def write_file(name: str) -> None:
        (repo / name).write_text("\n".join(lines[name]) + "\n")

    for k in range(1, n_commits + 1):
        when = EPOCH + int(k * days_between * DAY)
        author = rng.choice(AUTHORS)
        touched = rng.sample(FILES, rng.randint(1, 2))
        for name in touched:
            for _ in range(rng.randint(1, 4)):
                idx = rng.randrange(2, len(lines[name]))
                if not lines[name][idx].startswith("risky_step_"):
                    lines[name][idx] = f"VALUE_{idx} = {rng.randrange(10_000)}"
            write_file(name)
        message = f"routine update {k}"

        if k % plant_every == 0 and k + 5 <= n_commits:
            # plant a bug: append a marked block for its fix to delete later
            issue_no += 1
            name = rng.choice(FILES)
            lines[name].extend(
                f"risky_step_{issue_no}_{i} = {rng.randrange(100)}"
                for i in range(rng.randint(4, 12))
            )
            write_file(name)
            plants[issue_no] = name
            message = f"extend processing path ({issue_no})"

        due = [no for no in plants if no * plant_every + 5 == k]
        for no in due:
            name = plants[no]
            marker = f"risky_step_{no}_"
            lines[name] = [l for l in lines[name] if not l.startswith(marker)]
            write_file(name)
            message = f"repair processing path\n\nCloses-Bug: #{no}"

        sha = commit_all(repo, message, author, when)

        revisions = rng.randint(1, 4)
        reviewers = rng.sample([a[0] + " <" + a[1] + ">" for a in AUTHORS if a != author], 2)
        reviews.append(
            {
                "change_id": sha,
                "created_time": when - revisions * 7_200,
                "approved_time": when,
                "revisions": revisions,
                "voters": reviewers[: rng.randint(1, 2)],
                "human_nonowner_comments": rng.randint(0, 5),
                "reviewers": reviewers,
            }
        )

        for no in due:
            reported = EPOCH + int((no * plant_every + 2) * days_between * DAY)
            issues.append(
                {
                    "issue_id": str(no),
                    "reported_time": reported,
                    "title": f"processing path misbehaves ({no})",
                    "description": f"observed wrong output after routine update {no * plant_every}",
                    "reporter": rng.choice(AUTHORS)[0],
                }
            )

    # verdicts: most intrinsic, a few extrinsic/mislabeled to exercise F1
    verdict_cycle = ["intrinsic", "intrinsic", "mislabeled", "intrinsic", "extrinsic"]
    rule_for = {"intrinsic": "I1", "extrinsic": "E3", "mislabeled": "M2"}
    for issue in issues:
        verdict = verdict_cycle[(int(issue["issue_id"]) - 1) % len(verdict_cycle)]
        for rater in ("rater-a", "rater-b"):
            labels.append(
                {
                    "issue_id": issue["issue_id"],
                    "rater": rater,
                    "verdict": verdict,
                    "rule_id": rule_for[verdict],
                    "rationale": f"demo label for issue {issue['issue_id']}",
                    "labeled_time": EPOCH,
                }
            )

    issue_file = root / "issues.ndjson"
    issue_file.write_text(
        "".join(json.dumps(i, sort_keys=True) + "\n" for i in issues)
    )
    review_file = root / "reviews.ndjson"
    review_file.write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in reviews)
    )
    labels_file = root / "labels.ndjson"
    labels_file.write_text(
        "".join(json.dumps(l, sort_keys=True) + "\n" for l in labels)
    )
    out_dir = root / "out"
    config_file = root / "config.cfg"
    config_file.write_text(
        "\n".join(
            [
                "# synthetic corpus configuration",
                f'repo_path = "{repo}"',
                'branch = "main"',
                f'issue_file = "{issue_file}"',
                f'review_file = "{review_file}"',
                f'labels_file = "{labels_file}"',
                f'out_dir = "{out_dir}"',
                'patterns = ["Closes-Bug: #(\\\\d+)"]',
                "months = 3",
                'scheme = "both"',
                "spline_df = 2",
            ]
        )
        + "\n"
    )
    return {
        "root": root,
        "repo": repo,
        "issue_file": issue_file,
        "review_file": review_file,
        "labels_file": labels_file,
        "config_file": config_file,
        "out_dir": out_dir,
        "n_issues": len(issues),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", default="demo")
    parser.add_argument("--commits", type=int, default=160)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()
    paths = build_demo_corpus(Path(args.root), n_commits=args.commits, seed=args.seed)
    print(f"corpus with {paths['n_issues']} issues at {paths['root']}")
    print(f"run: jitlab run --config {paths['config_file']}")


if __name__ == "__main__":
    main()
