"""Command-line pipeline: stage artifacts on disk, explicit seeds, stable bytes.

Every stage reads and writes only declared workspace paths and embeds the
config hash in its artifacts, so chained stages can detect mismatched
reruns. Wall-clock timing goes to a separate log (workspace/log.jsonl) and
never into artifacts, keeping reruns byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .clustering import IFClustering
from .codec import LAYOUT_V1, encode_packet, iter_windows, pack_image, \
    write_png, write_sidecar
from .colors import load_color_table
from .combine import (
    CombinationConfig,
    assemble_trace,
    combine,
    read_chain_jsonl,
    write_chain_jsonl,
)
from .config import (
    ConfigHashError,
    PipelineConfig,
    StageOrderError,
    check_artifact,
    check_hash,
)
from .fieldgen import export_surrogate_images, export_training_pairs
from .generator import TemporalModel, train_temporal_model
from .ingest import export_csv, export_pcap, ingest_csv, ingest_pcap, \
    load_label_rules
from .metrics import evaluate
from .packets import TraceDataset
from .prompts import ViewCatalog, generation_prompt
from .surrogate import FieldSurrogate
from .timeseries import bin_timestamps

STAGES = ("ingest", "encode", "prompts", "fit-surrogate", "train-temporal",
          "gen-temporal", "gen-fields", "combine", "assemble", "eval")


def _ws(cfg: PipelineConfig) -> Path:
    ws = Path(cfg["workspace"])
    ws.mkdir(parents=True, exist_ok=True)
    return ws


def _log(cfg: PipelineConfig, stage: str, elapsed: float) -> None:
    with open(_ws(cfg) / "log.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps({"stage": stage, "elapsed_s": round(elapsed, 3)})
                 + "\n")


def _write_meta(path: Path, cfg: PipelineConfig, **extra) -> None:
    payload = {"config_hash": cfg.config_hash, **extra}
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n",
                    encoding="utf-8")


def _read_meta(path: Path, cfg: PipelineConfig, stage: str) -> dict:
    check_artifact(path, stage)
    meta = json.loads(path.read_text(encoding="utf-8"))
    check_hash(meta.get("config_hash", ""), cfg.config_hash, str(path))
    return meta


def _load_trace(cfg: PipelineConfig) -> TraceDataset:
    ws = _ws(cfg)
    trace = check_artifact(ws / "trace.csv", "ingest")
    _read_meta(ws / "trace.meta.json", cfg, "ingest")
    return ingest_csv(trace)


def stage_ingest(cfg: PipelineConfig) -> None:
    source = cfg["input"]
    if not source:
        raise SystemExit("config error: 'input' is required for ingest")
    rules = load_label_rules(cfg["label_rules"]) if cfg["label_rules"] else []
    path = Path(source)
    if path.suffix == ".pcap":
        dataset = ingest_pcap(path, rules)
    else:
        dataset = ingest_csv(path)
    ws = _ws(cfg)
    export_csv(dataset, ws / "trace.csv")
    _write_meta(ws / "trace.meta.json", cfg, epoch=dataset.epoch,
                skipped=dataset.skipped, n_packets=len(dataset))


def stage_encode(cfg: PipelineConfig) -> None:
    dataset = _load_trace(cfg)
    ws = _ws(cfg)
    out = ws / "encoded"
    out.mkdir(exist_ok=True)
    vectors = [encode_packet(p, LAYOUT_V1) for p in dataset]
    count = 0
    for w, window in enumerate(iter_windows(vectors)):
        rows = dataset.packets[w * 1024:(w + 1) * 1024]
        write_png(pack_image(window), out / f"window_{w:04d}.png")
        write_sidecar(out / f"window_{w:04d}.json", LAYOUT_V1, rows, {},
                      len(window), extra={"config_hash": cfg.config_hash})
        count += 1
    _write_meta(out / "encoded.meta.json", cfg, windows=count,
                rows=len(vectors))


def stage_prompts(cfg: PipelineConfig) -> None:
    dataset = _load_trace(cfg)
    table = load_color_table(cfg["color_table"] or None)
    catalog = ViewCatalog.from_dataset(
        dataset, templates=cfg.get("prompts", "templates") or None,
        global_prompt=cfg.get("prompts", "global"))
    out = _ws(cfg) / "prompts"
    entries = export_training_pairs(dataset, LAYOUT_V1, catalog, table, out,
                                    config_hash=cfg.config_hash)
    _write_meta(out / "prompts.meta.json", cfg, pairs=len(entries))


def stage_fit_surrogate(cfg: PipelineConfig) -> None:
    dataset = _load_trace(cfg)
    model = FieldSurrogate(layout_id=cfg["layout_id"]).fit(dataset, LAYOUT_V1)
    model.save(_ws(cfg) / "surrogate.json", config_hash=cfg.config_hash)


def _burst_series(dataset: TraceDataset, bin_width: float, min_gap: float,
                  l_min: int):
    """Split each label's timestamps at idle gaps into burst series."""
    series = []
    dropped = 0
    for attack in sorted({p.attack_label for p in dataset}):
        ts = [p.timestamp for p in dataset if p.attack_label == attack]
        bursts: list[list[float]] = [[ts[0]]]
        for t in ts[1:]:
            if t - bursts[-1][-1] > min_gap:
                bursts.append([])
            bursts[-1].append(t)
        for burst in bursts:
            s = bin_timestamps(burst, bin_width, attack)
            if len(s) < l_min:
                dropped += 1
                continue
            series.append(s)
    return series, dropped


def stage_train_temporal(cfg: PipelineConfig) -> None:
    dataset = _load_trace(cfg)
    t = cfg["temporal"]
    series, dropped = _burst_series(dataset, t["bin_width"],
                                    t["min_series_gap"], t["l_min"])
    if not series:
        raise SystemExit("temporal: no bursts long enough to train on")
    k = min(t["k"], len(series))
    clusterer = IFClustering(
        k=k, period=t["period"] or None, n_fourier=t["n_fourier"],
        resample_len=t["resample_len"], seed=cfg["seed"]).fit(series)
    model = train_temporal_model(
        series, clusterer.labels_, clusterer.metadata_chain_,
        l_min=t["l_min"], l_max=t["l_max"],
        match_threshold=t["match_threshold"] or None,
        min_support=t["min_support"],
        diffusion_config=t["diffusion"], seed=cfg["seed"])
    model.config_hash = cfg.config_hash
    ws = _ws(cfg)
    model.save(ws / "temporal_model.json")
    write_chain_jsonl(model.metadata_chain, ws / "metadata_chain.jsonl",
                      config_hash=cfg.config_hash)
    _write_meta(ws / "temporal.meta.json", cfg, n_series=len(series),
                dropped_short=dropped, k=k)


def stage_gen_temporal(cfg: PipelineConfig) -> None:
    ws = _ws(cfg)
    check_artifact(ws / "temporal_model.json", "train-temporal")
    model = TemporalModel.load(ws / "temporal_model.json")
    check_hash(model.config_hash, cfg.config_hash, "temporal_model.json")
    bin_width = cfg["temporal"]["bin_width"]
    out = {}
    for cid, gen in sorted(model.generators.items()):
        durations = [m.duration for m in model.metadata_chain
                     if m.cluster == cid]
        target_len = max(2, int(round(float(np.median(durations)) / bin_width)))
        series = gen.generate(target_len, seed=cfg["seed"] + cid)
        out[str(cid)] = {"values": [float(v) for v in series.values],
                         "bin_width": series.bin_width}
    (ws / "gen_series.json").write_text(
        json.dumps({"config_hash": cfg.config_hash, "series": out},
                   sort_keys=True, indent=1) + "\n", encoding="utf-8")


def stage_gen_fields(cfg: PipelineConfig) -> None:
    ws = _ws(cfg)
    check_artifact(ws / "surrogate.json", "fit-surrogate")
    surrogate = FieldSurrogate.load(ws / "surrogate.json")
    check_hash(surrogate.config_hash, cfg.config_hash, "surrogate.json")
    dataset = _load_trace(cfg)
    table = load_color_table(cfg["color_table"] or None)
    catalog = ViewCatalog.from_dataset(
        dataset, templates=cfg.get("prompts", "templates") or None,
        global_prompt=cfg.get("prompts", "global"))
    n = cfg["fields"]["samples_per_label"]
    labels = sorted({p.attack_label for p in dataset})
    vectors_by_label = {}
    prompts = {}
    for i, label in enumerate(labels):
        vectors_by_label[label] = surrogate.sample_vectors(
            label, n, seed=cfg["seed"] + 1000 + i)
        packets = dataset.by_label(label)
        proto = max(sorted({p.protocol.name for p in packets}),
                    key=lambda name: sum(p.protocol.name == name
                                         for p in packets))
        prompts[label] = generation_prompt(
            {"protocol": proto, "attack_type": label}, catalog, table).text
    out = ws / "fields"
    entries = export_surrogate_images(vectors_by_label, LAYOUT_V1, out,
                                      prompts=prompts,
                                      config_hash=cfg.config_hash)
    _write_meta(out / "fields.meta.json", cfg, images=len(entries))


def stage_combine(cfg: PipelineConfig) -> None:
    ws = _ws(cfg)
    chain_path = check_artifact(ws / "metadata_chain.jsonl", "train-temporal")
    chain, found_hash = read_chain_jsonl(chain_path)
    check_hash(found_hash, cfg.config_hash, "metadata_chain.jsonl")
    c = cfg["combine"]
    total_time = c["total_time"]
    if not total_time:
        total_time = 2.0 * max(m.start + m.duration for m in chain)
    combo = CombinationConfig(method=c["method"], total_time=total_time,
                              seed=cfg["seed"], counts=c["counts"])
    result = combine(chain, combo)
    write_chain_jsonl(result, ws / "combined_chain.jsonl",
                      config_hash=cfg.config_hash)


def stage_assemble(cfg: PipelineConfig) -> None:
    ws = _ws(cfg)
    model_path = check_artifact(ws / "temporal_model.json", "train-temporal")
    model = TemporalModel.load(model_path)
    check_hash(model.config_hash, cfg.config_hash, "temporal_model.json")
    surrogate_path = check_artifact(ws / "surrogate.json", "fit-surrogate")
    surrogate = FieldSurrogate.load(surrogate_path)
    check_hash(surrogate.config_hash, cfg.config_hash, "surrogate.json")
    chain_path = check_artifact(ws / "combined_chain.jsonl", "combine")
    chain, found_hash = read_chain_jsonl(chain_path)
    check_hash(found_hash, cfg.config_hash, "combined_chain.jsonl")

    bin_width = cfg["temporal"]["bin_width"]

    def series_source(cluster: int, target_len: int, seed: int):
        if cluster not in model.generators:
            raise KeyError(cluster)
        return model.generators[cluster].generate(target_len, seed=seed)

    def field_source(label: str, n: int, seed: int):
        return surrogate.sample_packets(label, n, seed=seed, label=label)

    synth = assemble_trace(chain, series_source, field_source,
                           seed=cfg["seed"], bin_width=bin_width,
                           provenance="assemble")
    export_csv(synth, ws / "synth_trace.csv")
    export_pcap(synth, ws / "synth_trace.pcap")
    _write_meta(ws / "synth_trace.meta.json", cfg, n_packets=len(synth),
                checksums="zeroed")


def stage_eval(cfg: PipelineConfig) -> None:
    ws = _ws(cfg)
    real = _load_trace(cfg)
    synth_path = check_artifact(ws / "synth_trace.csv", "assemble")
    _read_meta(ws / "synth_trace.meta.json", cfg, "assemble")
    synth = ingest_csv(synth_path)
    report = evaluate(real, synth, LAYOUT_V1, unit=cfg["eval"]["unit"])
    (ws / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (ws / "report.txt").write_text(report.to_text(), encoding="utf-8")


_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "encode": stage_encode,
    "prompts": stage_prompts,
    "fit-surrogate": stage_fit_surrogate,
    "train-temporal": stage_train_temporal,
    "gen-temporal": stage_gen_temporal,
    "gen-fields": stage_gen_fields,
    "combine": stage_combine,
    "assemble": stage_assemble,
    "eval": stage_eval,
}


def run_stage(name: str, cfg: PipelineConfig) -> None:
    start = time.perf_counter()
    _STAGE_FUNCS[name](cfg)
    _log(cfg, name, time.perf_counter() - start)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ddosynth",
        description="Synthesize packet-level DDoS traffic and score its fidelity.")
    parser.add_argument("--config", help="pipeline config file (.toml or .json)")
    parser.add_argument("--workspace", help="override the workspace directory")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--input", help="override the input trace path")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sub.add_parser(name, help=f"run the {name} stage")
    sub.add_parser("pipeline", help="run every stage in order")

    args = parser.parse_args(argv)
    overrides = {}
    for key in ("workspace", "seed", "input"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    cfg = PipelineConfig.load(args.config, overrides)

    try:
        if args.command == "pipeline":
            for name in STAGES:
                run_stage(name, cfg)
        else:
            run_stage(args.command, cfg)
    except (StageOrderError, ConfigHashError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
