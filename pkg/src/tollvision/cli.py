"""Command-line entry points: replay/live runs, scenario tools, store server."""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

import yaml

from .config import AppConfig, load_config
from .evaluate import evaluate
from .gateway import EventBroker, Gateway, create_app
from .pipeline import Pipeline, RunResult, replay_trace
from .sim import GroundTruth, ScenarioSpec, generate
from .store import EmbeddedStore, open_store
from .trace import read_trace, trace_sha256, write_trace


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tollvision")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="process a detection trace (or follow a live one)")
    source = run.add_mutually_exclusive_group(required=True)
    source.add_argument("--trace", help="detection trace file to replay")
    source.add_argument("--live", help="stream frames from a growing file, or - for stdin")
    run.add_argument("--config", help="configuration file (tracker, plates, rates)")
    run.add_argument("--store", help="external store address host:port (default embedded)")
    run.add_argument("--gateway-bind", help="serve the gateway at addr:port while running")
    run.add_argument("--metrics-out", help="write the run result as JSON")
    run.add_argument("--batch-size", type=int, default=None, help="fixed replay batch size")
    run.add_argument("--pace", type=float, default=0.0, help="ms of wall time per frame")
    run.add_argument("--hold", type=float, default=0.0, help="keep the gateway up N seconds after the trace ends")
    run.set_defaults(func=_cmd_run)

    sim = sub.add_parser("sim", help="synthetic scenarios and scoring")
    sim_sub = sim.add_subparsers(dest="sim_command", required=True)

    gen = sim_sub.add_parser("generate", help="generate a trace plus ground truth")
    gen.add_argument("--spec", required=True, help="scenario spec file (YAML or JSON)")
    gen.add_argument("--out", required=True, help="trace output path")
    gen.add_argument("--truth", required=True, help="ground truth output path")
    gen.set_defaults(func=_cmd_generate)

    ev = sim_sub.add_parser("evaluate", help="run the pipeline on a trace and score it")
    ev.add_argument("--trace-output", required=True, help="detection trace produced by generate")
    ev.add_argument("--truth", required=True, help="ground truth file")
    ev.add_argument("--report", required=True, help="evaluation report output path")
    ev.add_argument("--config", help="pipeline configuration file")
    ev.set_defaults(func=_cmd_evaluate)

    store = sub.add_parser("store", help="transaction store utilities")
    store_sub = store.add_subparsers(dest="store_command", required=True)
    serve = store_sub.add_parser("serve", help="serve the line-protocol store")
    serve.add_argument("--bind", default="127.0.0.1:7440", help="listen address host:port")
    serve.add_argument("--archive", default="archive.jsonl", help="archive file path")
    serve.set_defaults(func=_cmd_store_serve)

    return parser


def _load_app_config(path: str | None) -> AppConfig:
    return load_config(path)


def _cmd_run(args: argparse.Namespace) -> int:
    config = _load_app_config(args.config)
    store = open_store(args.store or config.store.address, config.store.archive_path)
    broker = EventBroker(config.gateway.client_buffer)
    pipeline = Pipeline(config=config, store=store, event_sink=broker.publish)

    server = None
    if args.gateway_bind:
        server = _start_gateway(args.gateway_bind, store, broker, config, pipeline)

    try:
        if args.trace:
            frames = list(read_trace(args.trace))
            pipeline.result.trace_sha256 = trace_sha256(frames)
            if args.pace > 0:
                for frame in frames:
                    pipeline.process_frame_batch([frame])
                    time.sleep(args.pace / 1000.0)
                pipeline.finish()
            else:
                replay_trace(pipeline, frames, batch_size=args.batch_size or config.pipeline.optimal_batch_size)
        else:
            _run_live(pipeline, args.live, args.pace)
        result = pipeline.result
        if args.metrics_out:
            Path(args.metrics_out).write_text(result.to_json(), encoding="utf-8")
        _print_run_summary(result)
        if server is not None and args.hold > 0:
            time.sleep(args.hold)
    finally:
        if server is not None:
            server.should_exit = True
    return 0


def _run_live(pipeline: Pipeline, source: str, pace_ms: float) -> None:
    from .trace import loads_frame

    if source == "-":
        for line in sys.stdin:
            line = line.strip()
            if line:
                pipeline.process_frame_batch([loads_frame(line)])
                if pace_ms > 0:
                    time.sleep(pace_ms / 1000.0)
        pipeline.finish()
        return
    # follow a growing file until it stops growing for a while
    idle_budget = 5.0
    idle = 0.0
    with open(source, "r", encoding="utf-8") as fh:
        while idle < idle_budget:
            line = fh.readline()
            if not line:
                time.sleep(0.05)
                idle += 0.05
                continue
            idle = 0.0
            line = line.strip()
            if line:
                pipeline.process_frame_batch([loads_frame(line)])
    pipeline.finish()


def _start_gateway(bind: str, store, broker: EventBroker, config: AppConfig, pipeline: Pipeline):
    import threading

    import uvicorn

    host, _, port = bind.rpartition(":")
    gateway = Gateway(store, broker, config, stats_provider=pipeline.stats)
    app = create_app(gateway)
    server = uvicorn.Server(
        uvicorn.Config(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10.0
    while not server.started and time.time() < deadline:
        time.sleep(0.02)
    if not server.started:
        raise RuntimeError(f"gateway failed to start on {bind}")
    return server


def _print_run_summary(result: RunResult) -> None:
    latencies = sorted(result.frame_latencies_ms)
    if latencies:
        p50 = statistics.median(latencies)
        p99 = latencies[min(len(latencies) - 1, int(0.99 * len(latencies)))]
    else:
        p50 = p99 = 0.0
    print(
        f"frames={result.frames_processed} transactions={len(result.transactions)} "
        f"latency_p50_ms={p50:.3f} latency_p99_ms={p99:.3f}"
    )


def _cmd_generate(args: argparse.Namespace) -> int:
    payload = yaml.safe_load(Path(args.spec).read_text(encoding="utf-8")) or {}
    spec = ScenarioSpec.from_dict(payload)
    frames, truth = generate(spec)
    write_trace(frames, args.out)
    truth.save(args.truth)
    print(f"frames={len(frames)} vehicles={len(truth.vehicles)} trace_sha256={truth.trace_sha256}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = _load_app_config(args.config)
    frames = list(read_trace(args.trace_output))
    truth = GroundTruth.load(args.truth)
    pipeline = Pipeline(config=config, store=EmbeddedStore(), clock=lambda: 0.0)
    pipeline.result.trace_sha256 = trace_sha256(frames)
    replay_trace(pipeline, frames, batch_size=config.pipeline.optimal_batch_size)
    report = evaluate(frames, pipeline.result, truth)
    report.save(args.report)
    print(
        f"mAP={report.mean_average_precision:.4f} plate_acc={report.plate_accuracy:.4f} "
        f"axle_acc={report.axle_accuracy:.4f} id_switches={report.id_switches}"
    )
    return 0


def _cmd_store_serve(args: argparse.Namespace) -> int:
    from .store_server import serve

    print(f"store listening on {args.bind}, archive {args.archive}", flush=True)
    serve(args.bind, args.archive)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
