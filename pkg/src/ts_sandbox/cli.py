"""Command line entry point: ``ts-sandbox <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .e2lite import default_bindings
from .eval import (
    COMPARE_COLUMNS, compare_runs, compute_metrics, export_metrics, load_logs, read_csv, write_csv,
)
from .experiment import (
    DEFAULT_BASE_PORT, MANIFEST, RunError, make_ric, run_id_for, run_simulation, verify_manifest,
    write_manifest, write_records, write_run_outputs,
)
from .policies import PolicyError, resolve_policy
from .sim.config import Band, ConfigError, SimConfig

log = logging.getLogger("ts_sandbox")


class CliError(Exception):
    pass


def setup_logging() -> None:
    level = os.environ.get("TS_SANDBOX_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s %(message)s")


# -- helpers --------------------------------------------------------------------

def load_config(path: str | None, band: str | None = None, **overrides) -> SimConfig:
    data: dict = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read config {path}: {exc}") from None
    if band:
        data["band"] = band
        data.pop("carrier_freq_hz", None)
        data.pop("isd_m", None)
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return SimConfig.from_dict(data)
    except (ConfigError, TypeError, ValueError) as exc:
        raise CliError(f"invalid config: {exc}") from None


def check_policy(spec: str) -> None:
    try:
        resolve_policy(spec)
    except PolicyError as exc:
        raise CliError(str(exc)) from None


def prepare_out(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"output directory {path} is not writable: {exc}") from None
    return out


def parse_addr(s: str) -> tuple[str, int]:
    host, _, port = s.rpartition(":")
    if not host or not port.isdigit():
        raise CliError(f"expected HOST:PORT, got {s!r}")
    return host, int(port)


def _sim_job(args: tuple) -> tuple[str, str]:
    cfg_dict, policy, out_dir = args
    cfg = SimConfig.from_dict(cfg_dict)
    result = run_simulation(cfg, policy)
    write_run_outputs(result, out_dir)
    return result.run_id, str(out_dir)


def run_many(jobs: list[tuple[SimConfig, str, Path]], n_jobs: int) -> list[tuple[str, str]]:
    payload = [(cfg.to_dict(), pol, str(out)) for cfg, pol, out in jobs]
    if n_jobs <= 1:
        return [_sim_job(p) for p in payload]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_sim_job, payload))


# -- subcommands ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.from_manifest:
        m = json.loads(Path(args.from_manifest).read_text())
        cfg = SimConfig.from_dict(m["config"])
        policy = m["policy"]
    else:
        cfg = load_config(args.config, args.band, seed=args.seed, n_ues=args.ues,
                          sim_duration_ms=args.duration_ms)
        policy = args.policy
    check_policy(policy)
    out = prepare_out(args.out)
    ric_addr = parse_addr(args.ric) if args.ric else None
    try:
        result = run_simulation(cfg, policy, ric_addr=ric_addr, base_port=args.base_port,
                                epsilon_ms=args.epsilon_ms)
    except OSError as exc:
        raise CliError(f"transport failure: {exc}") from None
    manifest = write_run_outputs(result, out)
    m = result.metrics()
    print(f"{result.run_id}: mean {m.mean_thpt_bps / 1e6:.3f} Mbit/s, p10 "
          f"{m.p10_thpt_bps / 1e6:.3f}, p95 {m.p95_thpt_bps / 1e6:.3f}, "
          f"{m.ho_total} handovers -> {manifest}")
    return 0


def cmd_collect(args) -> int:
    from .rl.dataset import (
        build_transitions, concat, read_bin, write_bin, write_csv_mirror,
    )
    from .rl.features import DEFAULT_NORMS, FEATURE_DIM

    configs = args.config or [None]
    if not args.policy or not args.seed:
        raise CliError("collect needs at least one --policy and one --seed")
    for p in args.policy:
        check_policy(p)
    out = prepare_out(args.out)
    layout = {"feature_dim": FEATURE_DIM, "norms": DEFAULT_NORMS.to_dict()}
    merged = []
    for d in args.merge or []:
        m = json.loads((Path(d) / MANIFEST).read_text())
        if m.get("layout") != layout:
            raise CliError(f"dataset {d} has a different feature layout; refusing to mix")
        merged.append((d, read_bin(Path(d) / "transitions.bin")))

    jobs = []
    for cpath in configs:
        for seed in args.seed:
            cfg = load_config(cpath, args.band, seed=seed, n_ues=args.ues,
                              sim_duration_ms=args.duration_ms)
            for pol in args.policy:
                jobs.append((cfg, pol, out / "runs" / run_id_for(
                    f"{Path(cpath).stem if cpath else 'default'}-{pol}", seed)))
    done = run_many(jobs, args.jobs)

    from .ric.records import parse_record_row

    parts, prov = [], []
    for (cfg, pol, run_dir), (run_id, _) in zip(jobs, done):
        recs = [parse_record_row(r) for r in read_csv(Path(run_dir) / "records.csv")]
        parts.append(build_transitions(recs, cfg.report_period_ms))
        prov.append((run_dir.name, pol, cfg.seed, cfg.band.value, cfg.scenario))
    for d, data in merged:
        parts.append(data)
        prov.append((f"merge:{d}", "", "", "", ""))
    data, ranges = concat(parts)
    if len(data) == 0:
        raise CliError("no transitions collected")
    write_bin(out / "transitions.bin", data)
    if not args.no_csv:
        write_csv_mirror(out / "transitions.csv", data)
    write_csv(out / "provenance.csv", ("run", "policy", "seed", "band", "scenario", "start", "stop"),
              [(*p, a, b) for p, (a, b) in zip(prov, ranges)])
    write_manifest(out, {"kind": "dataset", "layout": layout, "rows": len(data),
                         "runs": [p[0] for p in prov]})
    print(f"{len(data)} transitions from {len(prov)} runs -> {out / 'transitions.bin'}")
    return 0


def cmd_train(args) -> int:
    from .rl.network import NetShape
    from .rl.train import DESK_HYPER, FULL_HYPER, Hyper, TrainingError, train_offline

    hyper = FULL_HYPER if args.full_schedule else DESK_HYPER
    if args.hyper:
        hyper = Hyper.from_dict({**hyper.__dict__, **json.loads(Path(args.hyper).read_text())})
    overrides = {"steps": args.steps, "seed": args.seed, "lr": args.lr,
                 "target_update_period": args.target_update,
                 "min_replay_history": args.min_replay, "cql_alpha": args.cql_alpha,
                 "cql_variant": args.cql_variant}
    hyper = hyper.replace(**{k: v for k, v in overrides.items() if v is not None})
    ds = Path(args.dataset)
    if ds.is_dir():
        ds = ds / "transitions.bin"
    if not ds.is_file():
        raise CliError(f"dataset {ds} not found")
    out = prepare_out(args.out)
    try:
        _, report = train_offline(ds, hyper, out / "model.tsq", shape=NetShape(),
                                  loss_csv=out / "loss.csv")
    except (TrainingError, ValueError) as exc:
        raise CliError(f"training failed: {exc}") from None
    (out / "train_report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    write_manifest(out, {"kind": "model", "dataset": str(ds), "hyper": hyper.__dict__})
    print(json.dumps(report.to_dict()))
    return 0


def cmd_serve(args) -> int:
    from .runner import RicServer
    from .sim.world import World

    check_policy(args.policy)
    cfg = load_config(args.config, args.band, n_ues=0)
    out = prepare_out(args.out)
    world = World(cfg)  # topology only, for node ids and cell list
    records: list = []
    ric = make_ric(resolve_policy(args.policy, cfg.seed), world, records, args.epsilon_ms)
    bindings = default_bindings(sorted(world.cell_index), args.base_port, args.node_address)
    try:
        server = RicServer(ric, args.host, args.port, bindings)
    except OSError as exc:
        raise CliError(f"cannot listen on {args.host}:{args.port}: {exc}") from None
    print(f"RIC listening on {server.host}:{server.port}", flush=True)
    try:
        server.serve_forever(until_idle=not args.forever)
    except KeyboardInterrupt:
        pass
    write_records(out / "records.csv", records, len(world.topology.nr_cells))
    stats = {"records": len(records), "controls": ric.stats.controls,
             "policy_failures": ric.stats.policy_failures,
             "isolation_drops": ric.stats.isolation_drops,
             "max_dispatch_latency_s": ric.stats.max_latency_s, "errors": server.errors}
    (out / "ric_stats.json").write_text(json.dumps(stats, indent=2) + "\n")
    write_manifest(out, {"kind": "ric", "policy": args.policy, "config": cfg.to_dict()})
    return 0


def cmd_evaluate(args) -> int:
    run = Path(args.run)
    try:
        m = json.loads((run / MANIFEST).read_text())
    except OSError as exc:
        raise CliError(f"cannot read run manifest: {exc}") from None
    bad = verify_manifest(run)
    if bad:
        raise CliError(f"checksum mismatch in {run}: {bad}")
    cfg = SimConfig.from_dict(m["config"])
    from .sim.radio import LTE_CELL_ID, build_topology

    topo = build_topology(cfg)
    ue, cell, ev = load_logs(run)
    metrics = compute_metrics(ue, cell, ev, cfg.sim_duration_ms / 1000.0,
                              {c.cell_id: c.bandwidth_hz for c in topo.cells}, (LTE_CELL_ID,),
                              run_id=m["run_id"], policy=m["policy"], seed=cfg.seed,
                              band=cfg.band.value)
    out = prepare_out(args.out) if args.out else run
    export_metrics(metrics, out)
    if args.out:
        write_manifest(out, {"kind": "evaluation", "run": str(run)})
    else:
        write_manifest(out, {k: v for k, v in m.items() if k not in ("files", "version")})
    print(json.dumps(metrics.row()))
    return 0


def cmd_compare(args) -> int:
    out = prepare_out(args.out)
    run_dirs = [Path(d) for d in args.runs or []]
    if args.policy:
        if not args.seed:
            raise CliError("compare with --policy needs at least one --seed")
        for p in args.policy:
            check_policy(p)
        jobs = []
        for seed in args.seed:
            cfg = load_config(args.config, args.band, seed=seed, n_ues=args.ues,
                              sim_duration_ms=args.duration_ms)
            for pol in args.policy:
                jobs.append((cfg, pol, out / "runs" / run_id_for(pol, seed)))
        run_many(jobs, args.jobs)
        run_dirs += [j[2] for j in jobs]
    if not run_dirs:
        raise CliError("nothing to compare: give run directories or --policy/--seed")
    rows = []
    for d in run_dirs:
        rows.extend(read_csv(d / "metrics.csv"))
    table = compare_runs(rows)
    write_csv(out / "compare.csv", COMPARE_COLUMNS, table)
    write_manifest(out, {"kind": "compare", "runs": [str(d) for d in run_dirs]})
    for policy, n, metric, mean, lo, hi in table:
        if metric in ("mean_thpt_bps", "p10_thpt_bps", "p95_thpt_bps"):
            print(f"{policy:24s} {metric:14s} {mean / 1e6:8.3f} Mbit/s "
                  f"[{lo / 1e6:.3f}, {hi / 1e6:.3f}] n={n}")
        elif metric == "ho_total":
            print(f"{policy:24s} {metric:14s} {mean:8.1f} [{lo:.0f}, {hi:.0f}] n={n}")
    return 0


# -- parser ---------------------------------------------------------------------

def _add_sim_args(p: argparse.ArgumentParser, multi_config: bool = False,
                  multi_seed: bool = False) -> None:
    if multi_config:
        p.add_argument("--config", action="append", help="JSON config file (repeatable)")
    else:
        p.add_argument("--config", help="JSON config file")
    if multi_seed:
        p.add_argument("--seed", type=int, action="append", help="seed (repeatable)")
    else:
        p.add_argument("--seed", type=int, default=None)
    p.add_argument("--band", choices=[b.value for b in Band])
    p.add_argument("--ues", type=int, help="number of UEs")
    p.add_argument("--duration-ms", type=int, help="simulated time")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ts-sandbox", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one simulation under a policy")
    _add_sim_args(p)
    p.add_argument("--policy", default="rrm",
                   help="rrm | son1 | son2 | rl:<model> | explore:<eps>:<base>")
    p.add_argument("--out", required=True)
    p.add_argument("--ric", help="HOST:PORT of a running 'serve' (split mode)")
    p.add_argument("--base-port", type=int, default=DEFAULT_BASE_PORT,
                   help="local port of node 0; node k binds base+k")
    p.add_argument("--epsilon-ms", type=int, default=300)
    p.add_argument("--from-manifest", help="rerun exactly the run described by a manifest")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("collect", help="run behaviour policies and build an offline dataset")
    _add_sim_args(p, multi_config=True, multi_seed=True)
    p.add_argument("--policy", action="append")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--merge", action="append", help="existing dataset directory to append")
    p.add_argument("--no-csv", action="store_true", help="skip the CSV mirror")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", help="offline training on a transitions dataset")
    p.add_argument("--dataset", required=True, help="transitions.bin or its directory")
    p.add_argument("--out", required=True)
    p.add_argument("--full-schedule", action="store_true",
                   help="start from the full 40M-step schedule instead of desk scale")
    p.add_argument("--hyper", help="JSON file of hyperparameter overrides")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--target-update", type=int)
    p.add_argument("--min-replay", type=int)
    p.add_argument("--cql-alpha", type=float)
    p.add_argument("--cql-variant", choices=["greedy", "logsumexp"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("serve", help="run the RIC as a TCP server (split mode)")
    p.add_argument("--config")
    p.add_argument("--band", choices=[b.value for b in Band])
    p.add_argument("--policy", default="rrm")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=36421)
    p.add_argument("--base-port", type=int, default=DEFAULT_BASE_PORT)
    p.add_argument("--node-address", default="127.0.0.1")
    p.add_argument("--epsilon-ms", type=int, default=300)
    p.add_argument("--out", required=True)
    p.add_argument("--forever", action="store_true", help="keep serving after nodes leave")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("evaluate", help="recompute metrics of a run from its logs")
    p.add_argument("run", help="run directory")
    p.add_argument("--out", help="write exports here instead of into the run directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="compare policies across seeds")
    _add_sim_args(p, multi_seed=True)
    p.add_argument("runs", nargs="*", help="existing run directories")
    p.add_argument("--policy", action="append")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv: list[str] | None = None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, RunError, PolicyError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
