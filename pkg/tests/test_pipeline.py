"""End-to-end pipeline tests on the synthetic corpus."""

import json
import os
from pathlib import Path

import pytest

from jitlab.pipeline import Pipeline, PipelineConfig, PipelineError, run_pipeline
from jitlab.storage import read_changes_csv, read_csv


def config_for(demo_corpus, out_dir, **overrides) -> PipelineConfig:
    base = PipelineConfig.from_file(str(demo_corpus["config_file"]))
    raw = base.to_dict()
    raw["out_dir"] = str(out_dir)
    raw.update(overrides)
    return PipelineConfig.from_dict(raw)


@pytest.fixture(scope="module")
def completed_run(demo_corpus, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("run")
    config = config_for(demo_corpus, out_dir)
    manifest = run_pipeline(config)
    return config, manifest


def test_all_stage_artifacts_present(completed_run):
    config, manifest = completed_run
    pipeline = Pipeline(config)
    for stage in manifest.stage_checksums:
        for name in pipeline.stage_outputs(stage):
            assert os.path.exists(pipeline.path(name)), f"{stage} artifact {name} missing"
    assert manifest.run_id
    assert manifest.tool_version
    assert os.path.exists(pipeline.path("manifest.json"))


def test_manifest_covers_every_stage(completed_run):
    _, manifest = completed_run
    assert sorted(manifest.stage_checksums) == sorted(
        ["mine", "link", "szz", "metrics", "filter", "stratify",
         "train", "evaluate", "importance", "stability", "stats"]
    )


def test_filter_ledger_is_nonincreasing(completed_run):
    config, _ = completed_run
    _, rows = read_csv(os.path.join(config.out_dir, "filter_ledger.csv"))
    issues = [int(r["Issues"]) for r in rows]
    bics = [int(r["BICs"]) for r in rows]
    assert issues == sorted(issues, reverse=True)
    assert bics == sorted(bics, reverse=True)
    assert len(rows) == 6  # F0..F5


def test_dataset_rows_all_carry_periods(completed_run):
    config, _ = completed_run
    rows = read_changes_csv(os.path.join(config.out_dir, "dataset.csv"))
    assert rows
    assert all(r.period is not None for r in rows)
    assert any(r.is_bic for r in rows)
    assert any(not r.is_bic for r in rows)


def test_rerun_with_unchanged_inputs_reuses_everything(completed_run, caplog):
    config, first_manifest = completed_run
    with caplog.at_level("INFO", logger="jitlab.pipeline"):
        second_manifest = run_pipeline(config)
    assert second_manifest.stage_checksums == first_manifest.stage_checksums
    ran = [r.message for r in caplog.records if "running stage" in r.message]
    assert ran == []


def test_toggled_flag_recomputes_only_downstream_stages(demo_corpus, tmp_path, caplog):
    out_dir = tmp_path / "toggle"
    run_pipeline(config_for(demo_corpus, out_dir))
    toggled = config_for(demo_corpus, out_dir, drop_mislabeled=True)
    with caplog.at_level("INFO", logger="jitlab.pipeline"):
        run_pipeline(toggled)
    ran = {
        r.message.split()[-1]
        for r in caplog.records
        if r.message.startswith("running stage")
    }
    assert "mine" not in ran and "link" not in ran and "szz" not in ran
    assert "filter" in ran and "train" in ran and "evaluate" in ran


def test_two_fresh_runs_are_bit_identical(demo_corpus, tmp_path):
    outputs = []
    for name in ("d1", "d2"):
        out_dir = tmp_path / name
        run_pipeline(config_for(demo_corpus, out_dir))
        outputs.append(out_dir)
    a, b = outputs
    names = sorted(
        p.name for p in a.iterdir() if p.name not in ("manifest.json", "stage_state.json")
    )
    assert names
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), f"{name} differs"
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["stage_checksums"] == mb["stage_checksums"]


def test_stage_failure_names_the_stage(demo_corpus, tmp_path):
    config = config_for(demo_corpus, tmp_path / "broken", issue_file="/nonexistent.csv")
    with pytest.raises(PipelineError, match="stage link"):
        run_pipeline(config)


def test_config_validation():
    with pytest.raises(PipelineError):
        PipelineConfig.from_dict(
            {"repo_path": "x", "issue_file": "y", "out_dir": "z", "months": 5}
        )
    with pytest.raises(PipelineError):
        PipelineConfig.from_dict(
            {"repo_path": "x", "issue_file": "y", "out_dir": "z", "bogus_key": 1}
        )


def test_ground_truth_mode_shrinks_f1(demo_corpus, tmp_path):
    plain = config_for(demo_corpus, tmp_path / "plain")
    strict = config_for(demo_corpus, tmp_path / "strict", drop_mislabeled=True)
    run_pipeline(plain)
    run_pipeline(strict)
    _, plain_rows = read_csv(os.path.join(plain.out_dir, "filter_ledger.csv"))
    _, strict_rows = read_csv(os.path.join(strict.out_dir, "filter_ledger.csv"))
    assert int(strict_rows[1]["Issues"]) < int(plain_rows[1]["Issues"])
    assert int(strict_rows[1]["BICs"]) <= int(plain_rows[1]["BICs"])
