import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from evadv.cli import main
from evadv.config import config_hash, load_config
from evadv import load_events

TINY = {
    "seed": 5,
    "dataset": {"train_per_class": 8, "test_per_class": 2, "n_events": 64},
    "victim": {"n_points": 48, "epochs": 8},
    "attack": {"methods": ["fgsm", "ifgsm", "cw", "ma-adv"],
               "iterations": 8, "binary_steps": 2},
}

CSV_HEADER = "method,ablation,sr,chamfer,l2,hausdorff,n_samples,seed"


def run(args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "cfg.json"
    out = root / "run"
    cfg_path.write_text(json.dumps({**TINY, "out_dir": str(out)}))
    for cmd in ("gen-data", "train-victim", "attack", "defend"):
        assert run([cmd, "--config", cfg_path]) == 0
    assert run(["report", "--config", cfg_path, out]) == 0
    return cfg_path, out


def dir_hash(path: Path) -> str:
    digest = hashlib.sha256()
    for p in sorted(path.rglob("*")):
        if p.is_file():
            digest.update(p.name.encode())
            digest.update(p.read_bytes())
    return digest.hexdigest()


class TestGenData:
    def test_file_counts_and_manifest(self, pipeline):
        _, out = pipeline
        train = out / "dataset" / "train"
        files = list(train.glob("*.evt1"))
        assert len(files) == 4 * TINY["dataset"]["train_per_class"]
        manifest = json.loads((train / "manifest.json").read_text())
        assert len(manifest["samples"]) == len(files)
        counts = {}
        for s in manifest["samples"]:
            counts[s["label"]] = counts.get(s["label"], 0) + 1
        assert all(v == TINY["dataset"]["train_per_class"] for v in counts.values())

    def test_rerun_identical(self, pipeline, tmp_path):
        cfg_path, out = pipeline
        before = dir_hash(out / "dataset")
        assert run(["gen-data", "--config", cfg_path]) == 0
        assert dir_hash(out / "dataset") == before


class TestTrainVictim:
    def test_metrics_file(self, pipeline):
        _, out = pipeline
        metrics = json.loads((out / "victim" / "metrics.json").read_text())
        assert {"train_accuracy", "val_accuracy", "n_train"} <= set(metrics)

    def test_deterministic(self, pipeline):
        cfg_path, out = pipeline
        blob = (out / "victim" / "victim.bin").read_bytes()
        assert run(["train-victim", "--config", cfg_path]) == 0
        assert (out / "victim" / "victim.bin").read_bytes() == blob


class TestAttack:
    def test_csv_schema(self, pipeline):
        _, out = pipeline
        lines = (out / "attack" / "results.csv").read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 1 + len(TINY["attack"]["methods"])
        methods = [line.split(",")[0] for line in lines[1:]]
        assert methods == TINY["attack"]["methods"]
        for line in lines[1:]:
            sr = float(line.split(",")[2])
            assert 0.0 <= sr <= 1.0

    def test_rerun_byte_identical(self, pipeline):
        cfg_path, out = pipeline
        blob = (out / "attack" / "results.csv").read_bytes()
        assert run(["attack", "--config", cfg_path]) == 0
        assert (out / "attack" / "results.csv").read_bytes() == blob

    def test_per_sample_json_and_adv_dump(self, pipeline):
        _, out = pipeline
        cw_dir = out / "attack" / "cw"
        jsons = sorted(cw_dir.glob("sample_*.json"))
        assert len(jsons) == 4 * TINY["dataset"]["test_per_class"]
        for jp in jsons:
            payload = json.loads(jp.read_text())
            assert {"sample_index", "method", "label", "success",
                    "lambda_trace", "norm"} <= set(payload)
            if payload["success"]:
                adv = load_events(cw_dir / payload["adv_file"])
                assert adv.n == TINY["victim"]["n_points"]

    def test_config_hash_matches_resolved_config(self, pipeline):
        cfg_path, out = pipeline
        run_info = json.loads((out / "attack" / "run.json").read_text())
        resolved = json.loads((out / "attack" / "resolved_config.json").read_text())
        assert run_info["config_hash"] == config_hash(resolved)
        assert config_hash(load_config(cfg_path)) == run_info["config_hash"]

    def test_ablation_flag_tags_rows(self, pipeline, tmp_path):
        cfg_path, _ = pipeline
        out2 = tmp_path / "ablation_run"
        for cmd in ("gen-data", "train-victim"):
            assert run([cmd, "--config", cfg_path, "--out", out2]) == 0
        assert run(["attack", "--config", cfg_path, "--out", out2,
                    "--no-diffusion"]) == 0
        lines = (out2 / "attack" / "results.csv").read_text().splitlines()
        row = {l.split(",")[0]: l.split(",")[1] for l in lines[1:]}
        assert row["ma-adv"] == "no-diffusion"
        assert row["cw"] == "no-diffusion"
        assert row["fgsm"] == "full"


class TestDefend:
    def test_rows_and_no_defense_consistency(self, pipeline):
        _, out = pipeline
        lines = (out / "defense" / "defense.csv").read_text().splitlines()
        assert lines[0] == "attack,defense,sr"
        rows = [l.split(",") for l in lines[1:]]
        by_key = {(r[0], r[1]): float(r[2]) for r in rows}
        attack_rows = (out / "attack" / "results.csv").read_text().splitlines()[1:]
        for line in attack_rows:
            parts = line.split(",")
            assert by_key[(parts[0], "none")] == pytest.approx(float(parts[2]))
        assert all(0.0 <= v <= 1.0 for v in by_key.values())
        kinds = {r[1] for r in rows}
        assert kinds == {"none", "sor", "srs"}


class TestReport:
    def test_merged_rows(self, pipeline):
        _, out = pipeline
        merged = (out / "report" / "merged.csv").read_text().splitlines()
        single = (out / "attack" / "results.csv").read_text().splitlines()
        assert merged[0] == single[0]
        assert len(merged) == len(single)

    def test_merging_two_runs_sums_rows(self, pipeline, tmp_path):
        cfg_path, out = pipeline
        report2 = tmp_path / "rep2"
        assert run(["report", "--config", cfg_path, "--out", report2, out, out]) == 0
        merged = (report2 / "report" / "merged.csv").read_text().splitlines()
        single = (out / "attack" / "results.csv").read_text().splitlines()
        assert len(merged) - 1 == 2 * (len(single) - 1)

    def test_plotdata_round_trips(self, pipeline):
        _, out = pipeline
        dumps = list((out / "report" / "plotdata").glob("*_adv.csv"))
        for dump in dumps:
            stream = load_events(dump)
            assert stream.n == TINY["victim"]["n_points"]


class TestExitCodes:
    def test_usage_error(self):
        assert run(["no-such-command"]) == 1

    def test_config_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"nope": 1}')
        assert run(["gen-data", "--config", bad]) == 1

    def test_runtime_error(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({**TINY, "out_dir": str(tmp_path / "empty")}))
        assert run(["defend", "--config", cfg]) == 2
