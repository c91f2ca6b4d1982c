"""Command-line pipeline: generate, ingest, analyze, evaluate, report.

Config files are key = value lines; values are parsed as JSON when possible
(so lists and dicts work) and fall back to plain strings. --set overrides
win over the file. Every subcommand writes a run manifest and all
randomness flows from one master seed.

Exit codes: 0 success, 2 usage or config validation, 3 data error,
4 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import fields as dataclass_fields

import numpy as np

from . import __version__
from .analytics import (
    channel_mix,
    conversion_rates,
    device_ownership,
    query_stats,
    session_length_ccdf,
    temporal_profile,
)
from .evaluation import ProtocolConfig, TooFewSessions, run_protocol
from .ingest import (
    DEVICES,
    BotFilterConfig,
    IngestError,
    filter_events,
    read_events,
    sessionize,
    split_by_identity,
)
from .markov import transition_matrix
from .models import TrainConfig
from .sessions import build_journeys, read_sessions, write_sessions
from .synthgen import GenConfig, InvalidConfig, generate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def _parse_kv_text(text: str) -> dict:
    out = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidConfig(line, "expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def load_config(path: str | None, overrides) -> dict:
    cfg = _parse_kv_text(open(path, encoding="utf-8").read()) if path else {}
    for item in overrides or []:
        if "=" not in item:
            raise InvalidConfig(item, "--set expects key=value")
        key, _, value = item.partition("=")
        try:
            cfg[key.strip()] = json.loads(value.strip())
        except json.JSONDecodeError:
            cfg[key.strip()] = value.strip()
    return cfg


def _dataclass_from_dict(cls, data: dict, alias=None):
    alias = alias or {}
    known = {f.name for f in dataclass_fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = alias.get(key, key)
        if name not in known:
            raise InvalidConfig(key, f"unknown {cls.__name__} option")
        if isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    return cls(**kwargs)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: str, payload: dict) -> None:
    payload = {"tool_version": __version__, **payload}
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt_pct(x: float) -> str:
    return f"{100.0 * x:.2f}"


def cmd_generate(args) -> int:
    raw = load_config(args.config, args.set)
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = _dataclass_from_dict(GenConfig, raw)
    started = time.time()
    result = generate(cfg, args.out)
    _write_manifest(
        args.out,
        {
            "subcommand": "generate",
            "seed": cfg.seed,
            "config": raw,
            "outputs": result,
            "events_sha256": _sha256(result["events_path"]),
            "elapsed_s": round(time.time() - started, 3),
        },
    )
    print(f"wrote {result['n_events']} events / {result['n_sessions']} sessions to {args.out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    raw = load_config(args.config, args.set)
    bot_keys = {f.name for f in dataclass_fields(BotFilterConfig)}
    bot_kwargs = {k: (frozenset(v) if isinstance(v, list) else v) for k, v in raw.items() if k in bot_keys}
    cfg = BotFilterConfig(**bot_kwargs)
    started = time.time()
    events = list(read_events(args.input))
    kept, dropped = filter_events(events, cfg)
    sessions = sessionize(
        kept, min_events=cfg.min_session_events, max_events=cfg.max_session_events
    )
    anonymous, identified = split_by_identity(sessions)
    os.makedirs(args.out, exist_ok=True)
    sessions_path = os.path.join(args.out, "sessions.jsonl")
    write_sessions(sessions_path, sessions)
    _write_manifest(
        args.out,
        {
            "subcommand": "ingest",
            "input": args.input,
            "input_sha256": _sha256(args.input),
            "events_read": len(events),
            "events_dropped": dropped,
            "sessions": len(sessions),
            "anonymous_sessions": len(anonymous),
            "identified_sessions": len(identified),
            "outputs": {"sessions_path": sessions_path},
            "elapsed_s": round(time.time() - started, 3),
        },
    )
    print(
        f"{len(events)} events read, {dropped} dropped; "
        f"{len(sessions)} sessions ({len(anonymous)} anonymous / {len(identified)} identified)"
    )
    return EXIT_OK


def _write_csv(path: str, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(str(c) for c in row) + "\n")


def cmd_analyze(args) -> int:
    started = time.time()
    sessions = read_sessions(args.input)
    journeys = build_journeys(sessions)
    os.makedirs(args.out, exist_ok=True)
    out = lambda name: os.path.join(args.out, name)

    ccdfs = session_length_ccdf(sessions)
    rows = []
    for (device, label), ccdf in sorted(ccdfs.items()):
        for length, tail in zip(ccdf.support, ccdf.tail):
            rows.append((device, "purchase" if label else "non_purchase", length, f"{tail:.6f}"))
    _write_csv(out("ccdf.csv"), "device,label,length,tail", rows)

    for axis, name in (("weekday", "weekday.csv"), ("hour", "hour.csv")):
        profile = temporal_profile(sessions, axis)
        rows = []
        for label in (True, False):
            if label not in profile:
                continue
            for idx, frac in enumerate(profile[label]):
                rows.append(("purchase" if label else "non_purchase", idx, _fmt_pct(frac)))
        _write_csv(out(name), f"label,{axis},percent", rows)

    mix = channel_mix(sessions)
    rows = []
    for label in (True, False):
        for channel, frac in mix["fractions"].get(label, {}).items():
            rows.append(("purchase" if label else "non_purchase", channel, _fmt_pct(frac)))
    _write_csv(out("channels.csv"), "label,channel,percent_within_label", rows)

    rows = []
    if sessions:
        conv = conversion_rates(sessions, "device")
        for r in conv.rows:
            std = "" if math.isnan(r.standardized_rate) else f"{r.standardized_rate:.2f}"
            rows.append((r.key, r.purchase_sessions, r.total_sessions, f"{r.conversion_rate:.4f}", std))
    _write_csv(out("devices.csv"), "device,purchase_sessions,total_sessions,conversion_rate,standardized_rate", rows)

    ownership = device_ownership(journeys)
    rows = []
    for group, stats in ownership.items():
        for bucket, frac in stats["fractions"].items():
            rows.append((group, bucket, _fmt_pct(frac)))
        rows.append((group, ">1", _fmt_pct(stats["multi_share"])))
    _write_csv(out("ownership.csv"), "group,devices,percent", rows)

    matrix, support = transition_matrix(journeys.values(), DEVICES, require_purchase_next=True)
    rows = []
    for i, src in enumerate(DEVICES):
        for j, dst in enumerate(DEVICES):
            value = "" if math.isnan(matrix[i, j]) else f"{matrix[i, j]:.4f}"
            rows.append((src, dst, value, int(support[i])))
    _write_csv(out("transitions.csv"), "from_device,to_device,probability,support", rows)

    qs = query_stats(sessions)
    rows = []
    for (device, label), cell in sorted(qs["rows"].items()):
        rows.append((
            device, "purchase" if label else "non_purchase", cell["sessions"],
            f"{cell['queries_per_session']:.4f}", cell["unique_queries"],
        ))
    for label in (True, False):
        if label in qs["avg"]:
            rows.append(("Avg", "purchase" if label else "non_purchase", "", f"{qs['avg'][label]:.4f}", ""))
    _write_csv(out("queries.csv"), "device,label,sessions,queries_per_session,unique_queries", rows)

    report = {
        "sessions": len(sessions),
        "purchase_sessions": sum(1 for s in sessions if s.purchase),
        "identified_sessions": sum(1 for s in sessions if s.customer_id is not None),
        "customers": len(journeys),
        "ownership": ownership,
        "query_avg": {("purchase" if k else "non_purchase"): v for k, v in qs["avg"].items()},
    }
    with open(out("report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    _write_manifest(
        args.out,
        {
            "subcommand": "analyze",
            "input": args.input,
            "input_sha256": _sha256(args.input),
            "sessions": len(sessions),
            "elapsed_s": round(time.time() - started, 3),
        },
    )
    print(f"analytics written to {args.out} ({len(sessions)} sessions)")
    return EXIT_OK


def _protocol_from_config(raw: dict) -> ProtocolConfig:
    train_keys = {f.name for f in dataclass_fields(TrainConfig)}
    train_kwargs = {k: v for k, v in raw.items() if k in train_keys and k != "seed"}
    proto_kwargs = {k: v for k, v in raw.items() if k not in train_kwargs}
    for key in ("steps", "settings", "variants", "models"):
        if key in proto_kwargs and isinstance(proto_kwargs[key], list):
            proto_kwargs[key] = tuple(proto_kwargs[key])
    known = {f.name for f in dataclass_fields(ProtocolConfig)}
    unknown = set(proto_kwargs) - known
    if unknown:
        raise InvalidConfig(sorted(unknown)[0], "unknown protocol option")
    cfg = ProtocolConfig(**proto_kwargs)
    cfg.train = TrainConfig(**train_kwargs)
    return cfg


def cmd_evaluate(args) -> int:
    raw = load_config(args.config, args.set)
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = _protocol_from_config(raw)
    started = time.time()
    sessions = read_sessions(args.input)
    report = run_protocol(sessions, cfg, threads=max(1, args.threads))
    os.makedirs(args.out, exist_ok=True)
    step_path = os.path.join(args.out, "step_report.csv")
    imp_path = os.path.join(args.out, "importance.csv")
    with open(step_path, "w", encoding="utf-8") as fh:
        fh.write(report.step_report_csv())
    with open(imp_path, "w", encoding="utf-8") as fh:
        fh.write(report.importance_csv())
    # manifest last: completion marker
    _write_manifest(
        args.out,
        {
            "subcommand": "evaluate",
            "input": args.input,
            "input_sha256": _sha256(args.input),
            "seed": cfg.seed,
            "config": raw,
            "threads": args.threads,
            "outputs": {"step_report": step_path, "importance": imp_path},
            "elapsed_s": round(time.time() - started, 3),
        },
    )
    print(f"protocol report written to {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    step_path = os.path.join(args.out, "step_report.csv")
    if not os.path.exists(step_path):
        print(f"no step_report.csv under {args.out}", file=sys.stderr)
        return EXIT_DATA
    rows = []
    with open(step_path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            rows.append(dict(zip(header, line.strip().split(","))))
    if not rows:
        print("empty report")
        return EXIT_OK
    print(f"{'model':<6} {'setting':<11} {'variant':<9} {'mean F1':<9} best-step F1")
    seen = {}
    for r in rows:
        key = (r["model"], r["setting"], r["variant"])
        seen.setdefault(key, []).append((int(r["step"]), float(r["f1_mean"])))
    for (model, setting, variant), pairs in sorted(seen.items()):
        f1s = [f for _, f in pairs if not math.isnan(f)]
        if not f1s:
            continue
        best_step, best = max(pairs, key=lambda p: p[1])
        print(f"{model:<6} {setting:<11} {variant:<9} {np.mean(f1s):<9.4f} {best:.4f} @ step {best_step}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shopstream",
        description="Clickstream sessionization, purchase analytics and step-wise purchase prediction.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic event log + truth sidecar")
    p.add_argument("--config", help="key = value generator config file")
    p.add_argument("--set", action="append", help="override: key=value", default=[])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest", help="parse + filter a TSV log into sessions.jsonl")
    p.add_argument("input")
    p.add_argument("--config", help="bot filter config file")
    p.add_argument("--set", action="append", default=[])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="emit the characterization CSVs")
    p.add_argument("input", help="sessions.jsonl")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("evaluate", help="run the step-wise cross-validated protocol")
    p.add_argument("input", help="sessions.jsonl")
    p.add_argument("--config", help="protocol config file")
    p.add_argument("--set", action="append", default=[])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="summarize an evaluate output directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    # environment overrides for CI: SHOPSTREAM_SEED, SHOPSTREAM_THREADS
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None and os.environ.get("SHOPSTREAM_SEED"):
        args.seed = int(os.environ["SHOPSTREAM_SEED"])
    if hasattr(args, "threads") and os.environ.get("SHOPSTREAM_THREADS"):
        args.threads = int(os.environ["SHOPSTREAM_THREADS"])
    try:
        return args.func(args)
    except IngestError as exc:  # before ValueError: IngestError subclasses it
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvalidConfig, TooFewSessions, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
