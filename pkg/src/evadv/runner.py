"""Campaign orchestration behind the CLI: datasets, training, attacks,
defenses, and report emission.

All outputs land under the configured output directory:

    out/dataset/{train,test}/sample_*.evt1 + manifest.json
    out/victim/victim.{bin,json}
    out/attack/results.csv, run.json, resolved_config.json,
               clean/sample_*.evt1, <method>[+tag]/sample_*.{json,evt1}
    out/defense/defense.csv
    out/report/merged.csv, plotdata/

Every artifact is a pure function of (config, seed); reruns produce
byte-identical files.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .attacks import CwAttack, FgsmAttack, IfgsmAttack, MotionAwareAttack
from .config import apply_ablations, canonical_dumps, config_hash
from .defenses import defended_eval, make_defense, summarize_results
from .events import (EventStream, NormState, SyntheticScenario, SCENARIO_KINDS,
                     generate_synthetic, normalize, resample_fixed)
from .io import load_events, save_events
from .validation import sample_seed
from .victim import EventPointNet, load_victim, save_victim

CSV_HEADER = "method,ablation,sr,chamfer,l2,hausdorff,n_samples,seed"


def _fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _stream_seed(base_seed, split_id, label, index) -> int:
    ss = np.random.SeedSequence([int(base_seed), split_id, label, index])
    return int(ss.generate_state(1, np.uint64)[0])


# ----------------------------------------------------------------------
# gen-data
# ----------------------------------------------------------------------

def generate_split(ds_cfg, seed, split_id, per_class, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = []
    file_index = 0
    for label, kind in enumerate(SCENARIO_KINDS):
        scenario = SyntheticScenario(
            kind, noise_rate=ds_cfg["noise_rate"],
            sensor_size=tuple(ds_cfg["sensor_size"]),
            duration_us=ds_cfg["duration_us"])
        for i in range(per_class):
            stream_seed = _stream_seed(seed, split_id, label, i)
            sample = generate_synthetic(scenario, ds_cfg["n_events"], stream_seed)
            name = f"sample_{file_index:05d}.evt1"
            save_events(sample.stream, out_dir / name)
            samples.append({"file": name, "label": label, "kind": kind,
                            "seed": stream_seed})
            file_index += 1
    manifest = {
        "samples": samples,
        "per_class_counts": {kind: per_class for kind in SCENARIO_KINDS},
        "n_events": ds_cfg["n_events"],
        "sensor_size": list(ds_cfg["sensor_size"]),
        "noise_rate": ds_cfg["noise_rate"],
        "duration_us": ds_cfg["duration_us"],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def cmd_gen_data(cfg) -> Path:
    out = Path(cfg["out_dir"]) / "dataset"
    ds = cfg["dataset"]
    generate_split(ds, cfg["seed"], 0, ds["train_per_class"], out / "train")
    generate_split(ds, cfg["seed"], 1, ds["test_per_class"], out / "test")
    return out


def load_split(split_dir: Path):
    """Raw streams + labels + manifest for one dataset split."""
    manifest = json.loads((split_dir / "manifest.json").read_text())
    sensor_size = tuple(manifest["sensor_size"])
    streams, labels = [], []
    for entry in manifest["samples"]:
        streams.append(load_events(split_dir / entry["file"], sensor_size=sensor_size))
        labels.append(entry["label"])
    return streams, np.array(labels, dtype=np.int64), manifest


def prepare_streams(streams, n_points, seed):
    """Normalize and resample raw streams to the victim's fixed event count."""
    return [resample_fixed(normalize(s), n_points, sample_seed(seed, i))
            for i, s in enumerate(streams)]


# ----------------------------------------------------------------------
# train-victim
# ----------------------------------------------------------------------

def cmd_train_victim(cfg) -> Path:
    out = Path(cfg["out_dir"])
    train_dir = out / "dataset" / "train"
    if not (train_dir / "manifest.json").exists():
        raise FileNotFoundError(f"dataset missing: {train_dir}; run gen-data first")
    streams, labels, _ = load_split(train_dir)
    v = cfg["victim"]
    fixed = prepare_streams(streams, v["n_points"], cfg["seed"])
    X = np.stack([s.events for s in fixed])
    model = EventPointNet(
        n_classes=len(SCENARIO_KINDS), hidden1=v["hidden1"], hidden2=v["hidden2"],
        head_hidden=v["head_hidden"], epochs=v["epochs"], lr=v["lr"],
        batch_size=v["batch_size"], val_fraction=v["val_fraction"], seed=cfg["seed"])
    model.fit(X, labels)
    victim_dir = out / "victim"
    victim_dir.mkdir(parents=True, exist_ok=True)
    save_victim(model, victim_dir / "victim.bin",
                meta={"config_hash": config_hash(cfg)})
    metrics = {"train_accuracy": model.train_accuracy_,
               "val_accuracy": model.val_accuracy_,
               "n_train": len(labels)}
    (victim_dir / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True))
    return victim_dir


# ----------------------------------------------------------------------
# attack
# ----------------------------------------------------------------------

def build_attack(attack_cfg: dict, method: str):
    if method == "ma-adv":
        return MotionAwareAttack(
            iterations=attack_cfg["iterations"], binary_steps=attack_cfg["binary_steps"],
            eta0=attack_cfg["eta0"], lambda_lo=attack_cfg["lambda_lo"],
            lambda_hi=attack_cfg["lambda_hi"], k_neighbors=attack_cfg["k_neighbors"],
            sigma_s=attack_cfg["sigma_s"], sigma_t=attack_cfg["sigma_t"],
            lr_scale_success=attack_cfg["lr_scale_success"],
            lr_scale_failure=attack_cfg["lr_scale_failure"],
            lr_interval=attack_cfg["lr_interval"], kappa=attack_cfg["kappa"],
            init_sigma=attack_cfg["init_sigma"], beta1=attack_cfg["beta1"],
            beta2=attack_cfg["beta2"], gamma=attack_cfg["gamma"],
            diffusion=attack_cfg["diffusion"], spatial=attack_cfg["spatial"],
            temporal=attack_cfg["temporal"], causal=attack_cfg["causal"],
            adaptive_lr=attack_cfg["adaptive_lr"])
    if method == "cw":
        return CwAttack(
            iterations=attack_cfg["iterations"], binary_steps=attack_cfg["binary_steps"],
            eta0=attack_cfg["eta0"], lambda_lo=attack_cfg["lambda_lo"],
            lambda_hi=attack_cfg["lambda_hi"], lr_interval=attack_cfg["lr_interval"],
            kappa=attack_cfg["kappa"], init_sigma=attack_cfg["init_sigma"],
            beta1=attack_cfg["beta1"], beta2=attack_cfg["beta2"],
            gamma=attack_cfg["gamma"])
    if method == "fgsm":
        return FgsmAttack(epsilon=attack_cfg["epsilon"])
    if method == "ifgsm":
        return IfgsmAttack(epsilon=attack_cfg["epsilon"], steps=attack_cfg["ifgsm_steps"])
    raise ValueError(f"unknown method {method!r}")


def run_campaign(victim, samples, labels, attack, seed, jobs=1):
    """Attack every sample; per-sample seeds are seed XOR index, so results
    do not depend on the worker count."""

    def one(i):
        return attack.attack(victim, samples[i], int(labels[i]),
                             seed=sample_seed(seed, i), sample_index=i)

    if jobs == 1:
        return [one(i) for i in range(len(samples))]
    results = Parallel(n_jobs=jobs)(delayed(one)(i) for i in range(len(samples)))
    return list(results)


def _result_json(res, adv_name, stream):
    return {
        "sample_index": res.sample_index,
        "method": res.method,
        "label": res.label,
        "seed": res.seed,
        "success": res.success,
        "iterations_used": res.iterations_used,
        "metrics": res.metrics_dict() if res.success else None,
        "lambda_trace": res.lambda_trace,
        "adv_file": adv_name,
        "sensor_size": list(stream.sensor_size),
        "norm": {"width": stream.norm.width, "height": stream.norm.height,
                 "t_min": stream.norm.t_min, "t_max": stream.norm.t_max},
    }


def cmd_attack(cfg, ablation_flags=(), jobs=1) -> Path:
    out = Path(cfg["out_dir"])
    victim_bin = out / "victim" / "victim.bin"
    test_dir = out / "dataset" / "test"
    if not victim_bin.exists():
        raise FileNotFoundError(f"victim missing: {victim_bin}; run train-victim first")
    if not (test_dir / "manifest.json").exists():
        raise FileNotFoundError(f"dataset missing: {test_dir}; run gen-data first")
    victim = load_victim(victim_bin)
    streams, labels, _ = load_split(test_dir)
    samples = prepare_streams(streams, victim.n_points_, cfg["seed"])

    attack_cfg, tag = apply_ablations(cfg["attack"], ablation_flags)
    attack_dir = out / "attack"
    attack_dir.mkdir(parents=True, exist_ok=True)
    (attack_dir / "resolved_config.json").write_text(canonical_dumps(cfg))

    clean_dir = attack_dir / "clean"
    clean_dir.mkdir(exist_ok=True)
    for i, s in enumerate(samples):
        save_events(s, clean_dir / f"sample_{i:05d}.evt1")

    t0 = time.perf_counter()
    rows = []
    for method in attack_cfg["methods"]:
        attack = build_attack(attack_cfg, method)
        results = run_campaign(victim, samples, labels, attack, cfg["seed"], jobs)
        row_tag = tag if method in ("ma-adv", "cw") else "full"
        method_dir = attack_dir / (method if row_tag == "full" else f"{method}+{row_tag}")
        method_dir.mkdir(exist_ok=True)
        for res in results:
            i = res.sample_index
            adv_name = None
            if res.success:
                adv_name = f"sample_{i:05d}.evt1"
                # Sorted copy: the dump is a valid stream for defenses and
                # plotting; index-aligned metrics are already in the JSON.
                save_events(res.best_adv.sorted_by_t(), method_dir / adv_name)
            payload = _result_json(res, adv_name, samples[i])
            payload["ablation"] = row_tag
            (method_dir / f"sample_{i:05d}.json").write_text(
                json.dumps(payload, indent=2, sort_keys=True))
        report = summarize_results(results)
        rows.append({"method": method, "ablation": row_tag, "sr": report.sr,
                     "chamfer": report.chamfer, "l2": report.l2,
                     "hausdorff": report.hausdorff,
                     "n_samples": report.n_samples, "seed": cfg["seed"]})
    wall = time.perf_counter() - t0

    csv_path = attack_dir / "results.csv"
    with open(csv_path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r[k]) for k in CSV_HEADER.split(",")) + "\n")
    run_info = {"config_hash": config_hash(cfg), "wall_clock_s": wall,
                "rows": rows, "ablation": tag}
    (attack_dir / "run.json").write_text(json.dumps(run_info, indent=2, sort_keys=True))
    return csv_path


def load_attack_results(attack_dir: Path):
    """Reconstruct per-method result lists from the on-disk attack artifacts."""
    from .attacks import AttackResult

    by_method = {}
    for method_dir in sorted(p for p in attack_dir.iterdir() if p.is_dir()):
        if method_dir.name == "clean":
            continue
        results = []
        for json_path in sorted(method_dir.glob("sample_*.json")):
            payload = json.loads(json_path.read_text())
            best_adv = None
            if payload["success"]:
                raw = load_events(method_dir / payload["adv_file"],
                                  sensor_size=tuple(payload["sensor_size"]))
                best_adv = EventStream(raw.events, raw.sensor_size,
                                       NormState(**payload["norm"]))
            metrics = payload["metrics"] or {}
            results.append(AttackResult(
                method=payload["method"], label=payload["label"],
                success=payload["success"], best_adv=best_adv,
                chamfer=metrics.get("chamfer"), hausdorff=metrics.get("hausdorff"),
                l2=metrics.get("l2"), iterations_used=payload["iterations_used"],
                seed=payload["seed"], lambda_trace=payload["lambda_trace"],
                sample_index=payload["sample_index"]))
        if results:
            by_method[method_dir.name] = results
    return by_method


# ----------------------------------------------------------------------
# defend
# ----------------------------------------------------------------------

def cmd_defend(cfg) -> Path:
    out = Path(cfg["out_dir"])
    attack_dir = out / "attack"
    if not (attack_dir / "results.csv").exists():
        raise FileNotFoundError(f"attack results missing under {attack_dir}")
    victim = load_victim(out / "victim" / "victim.bin")
    by_method = load_attack_results(attack_dir)

    defense_dir = out / "defense"
    defense_dir.mkdir(parents=True, exist_ok=True)
    lines = ["attack,defense,sr"]
    for method, results in by_method.items():
        lines.append(f"{method},none,{_fmt(summarize_results(results).sr)}")
        for d_cfg in cfg["defenses"]:
            params = {k: v for k, v in d_cfg.items() if k != "kind"}
            if d_cfg["kind"] == "srs":
                params.setdefault("seed", cfg["seed"])
            defense = make_defense(d_cfg["kind"], **params)
            report = defended_eval(victim, results, defense, seed=cfg["seed"])
            lines.append(f"{method},{d_cfg['kind']},{_fmt(report.sr)}")
    csv_path = defense_dir / "defense.csv"
    csv_path.write_text("\n".join(lines) + "\n")
    return csv_path


# ----------------------------------------------------------------------
# report
# ----------------------------------------------------------------------

def cmd_report(run_dirs, out_dir, plot_samples=8) -> Path:
    run_dirs = [Path(d) for d in run_dirs]
    if not run_dirs:
        raise ValueError("need at least one run directory")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    header = None
    merged = []
    for run in run_dirs:
        csv_path = run / "attack" / "results.csv"
        if not csv_path.exists():
            raise FileNotFoundError(f"no attack results under {run}")
        text = csv_path.read_text().splitlines()
        if header is None:
            header = text[0]
        elif text[0] != header:
            raise ValueError(f"{csv_path}: header differs from previous runs")
        merged.extend(text[1:])
    (out_dir / "merged.csv").write_text("\n".join([header] + merged) + "\n")

    plot_dir = out_dir / "plotdata"
    plot_dir.mkdir(exist_ok=True)
    for run in run_dirs:
        attack_dir = run / "attack"
        for method_dir in sorted(p for p in attack_dir.iterdir() if p.is_dir()):
            if method_dir.name == "clean":
                continue
            dumped = 0
            for json_path in sorted(method_dir.glob("sample_*.json")):
                if dumped >= plot_samples:
                    break
                payload = json.loads(json_path.read_text())
                if not payload["success"]:
                    continue
                i = payload["sample_index"]
                sensor = tuple(payload["sensor_size"])
                adv = load_events(method_dir / payload["adv_file"], sensor_size=sensor)
                clean = load_events(attack_dir / "clean" / f"sample_{i:05d}.evt1",
                                    sensor_size=sensor)
                stem = f"{run.name}_{method_dir.name}_{i:05d}"
                save_events(adv, plot_dir / f"{stem}_adv.csv")
                save_events(clean, plot_dir / f"{stem}_clean.csv")
                dumped += 1
    return out_dir / "merged.csv"
