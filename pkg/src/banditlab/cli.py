"""Operator command line: serve / simulate / analyze / export / sequences.

Exit codes: 0 success, 1 runtime or validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import policies, simulate, stats
from .catalog import load_catalog, make_synthetic_catalog
from .config import ExperimentConfig, load_config
from .datasets import dataset_to_csv, dataset_to_dict, load_dataset, save_dataset
from .errors import BanditLabError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="banditlab")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the participant-facing HTTP service")
    serve.add_argument("--config", help="experiment config JSON")
    serve.add_argument("--catalog", help="catalog JSON")
    serve.add_argument("--listen", default="127.0.0.1:8000", help="host:port to bind")
    serve.add_argument("--data-dir", required=True, help="directory for the durable session store")
    serve.add_argument("--static-dir", help="directory of web UI assets to serve at /")

    sim = sub.add_parser("simulate", help="generate a synthetic trajectory dataset")
    sim.add_argument("--model", help="user model JSON (default: static, base means 5)")
    sim.add_argument("--cohort", default="cycle=40,repeat=38", help="counts per policy, e.g. cycle=40,repeat=38")
    sim.add_argument("--T", type=int, default=50)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output dataset path (.json or .csv)")

    analyze = sub.add_parser("analyze", help="run the full statistics pipeline on a dataset")
    analyze.add_argument("--dataset", required=True)
    analyze.add_argument("--alpha", type=float, default=stats.DEFAULT_ALPHA)
    analyze.add_argument("--n-perm", type=int, default=stats.DEFAULT_N_PERM)
    analyze.add_argument("--n-boot", type=int, default=stats.DEFAULT_N_BOOT)
    analyze.add_argument("--seed", type=int, default=0)
    analyze.add_argument("--stratify", choices=["heavy-light", "none"], default="heavy-light")
    analyze.add_argument("--no-bootstrap", action="store_true", help="skip confidence intervals")
    analyze.add_argument("--out", help="write the JSON report here (text report goes to stdout)")

    export = sub.add_parser("export", help="export completed sessions from a data directory")
    export.add_argument("--data-dir", required=True)
    export.add_argument("--config", help="experiment config JSON (defaults must match the study)")
    export.add_argument("--catalog", help="catalog JSON")
    export.add_argument("--filter", choices=["passed", "all"], default="passed")
    export.add_argument("--format", choices=["json", "csv"], default="json")
    export.add_argument("--out", required=True)

    seq = sub.add_parser("sequences", help="print the fixed pull sequences for audit")
    seq.add_argument("--T", type=int, default=50)
    seq.add_argument("--K", type=int, default=5)

    return parser


def _load_config_or_default(path: str | None) -> ExperimentConfig:
    return load_config(path) if path else ExperimentConfig()


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = _load_config_or_default(args.config)
    catalog = load_catalog(args.catalog) if args.catalog else make_synthetic_catalog(config.K, config.T)
    app = create_app(config, catalog, data_dir=args.data_dir, static_dir=args.static_dir)
    host, _, port = args.listen.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


def _parse_cohort(spec: str) -> simulate.CohortSpec:
    counts: dict[str, int] = {}
    for part in spec.split(","):
        if not part.strip():
            continue
        label, _, count = part.partition("=")
        counts[label.strip()] = int(count)
    if not counts:
        raise BanditLabError(f"empty cohort spec {spec!r}")
    return simulate.CohortSpec(counts=counts)


def _cmd_simulate(args) -> int:
    if args.model:
        model = simulate.load_model(args.model)
    else:
        model = simulate.UserModel(kind=simulate.STATIC, base_means=(5.0,) * 5)
    dataset = simulate.simulate_cohort(model, _parse_cohort(args.cohort), T=args.T, seed=args.seed)
    save_dataset(dataset, args.out)
    print(f"wrote {len(dataset.participants)} trajectories to {args.out}")
    return 0


def _cmd_analyze(args) -> int:
    dataset = load_dataset(args.dataset)
    report = stats.analyze_dataset(
        dataset,
        alpha=args.alpha,
        n_perm=args.n_perm,
        n_boot=args.n_boot,
        seed=args.seed,
        stratify=(args.stratify == "heavy-light"),
        include_bootstrap=not args.no_bootstrap,
    )
    sys.stdout.write(stats.render_text_report(report))
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2))
        print(f"wrote JSON report to {args.out}")
    return 0


def _cmd_export(args) -> int:
    from . import sessions as sessions_mod
    from .datasets import TrajectoryDataset, session_to_trajectory
    from .storage import SessionStore

    config = _load_config_or_default(args.config)
    catalog = load_catalog(args.catalog) if args.catalog else None
    store = SessionStore(Path(args.data_dir) / "study.sqlite3")
    try:
        complete = [s for s in store.all_sessions() if s.phase == sessions_mod.PHASE_COMPLETE]
        if args.filter == "passed":
            complete = [s for s in complete if sessions_mod.attention_pass(s, config)[1]]
        dataset = TrajectoryDataset(
            K=config.K,
            T=config.T,
            participants=[session_to_trajectory(s, config) for s in complete],
            arm_labels=catalog.arm_labels if catalog else None,
        )
        if args.format == "csv":
            Path(args.out).write_text(dataset_to_csv(dataset, sessions=complete))
        else:
            Path(args.out).write_text(json.dumps(dataset_to_dict(dataset)))
    finally:
        store.close()
    print(f"exported {len(dataset.participants)} sessions to {args.out}")
    return 0


def _cmd_sequences(args) -> int:
    cycle = policies.cycle_sequence(args.T, args.K)
    repeat = policies.repeat_sequence(args.T, args.K)
    print("CYCLE: " + " ".join(str(a) for a in cycle))
    print("REPEAT: " + " ".join(str(a) for a in repeat))
    return 0


_COMMANDS = {
    "serve": _cmd_serve,
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
    "export": _cmd_export,
    "sequences": _cmd_sequences,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except BanditLabError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
