"""Command-line front door: run, sweep, gen-trace, analyze-offsets, storage.

Thin adapter only -- argument handling and file plumbing live here, all
simulation behavior stays in the library modules (the test suites enforce
this by never importing this module).

Exit codes: 0 success, 1 runtime failure (unreadable trace, infeasible
generator spec, drained pipeline), 2 usage error.
"""

import argparse
import configparser
import sys

from .harness import (
    ConfigError,
    ExperimentConfig,
    OrgSpec,
    analyze_offsets,
    config_hash,
    parse_config,
    run_experiment,
    write_offsets_csv,
    write_results_stream,
)
from .frontend_sim import FrontendConfig, TraceExhaustedError
from .trace import (
    InfeasibleSpecError,
    KINDS_BY_NAME,
    SyntheticSpec,
    TraceError,
    gen_synthetic,
    load_trace,
    save_trace,
)

ORG_CHOICES = ("baseline", "skewed", "mbtb", "fdipx", "ideal")

# flag name -> parser for values arriving from a --config file
RUN_FLAG_TYPES = {
    "trace": str,
    "org": str,
    "entries": int,
    "ways": int,
    "latency": int,
    "variants": int,
    "warmup": int,
    "measure": int,
    "seed": int,
    "out": str,
}


def build_parser():
    p = argparse.ArgumentParser(
        prog="btbsim",
        description="Trace-driven front-end simulator with pluggable BTBs",
    )
    sub = p.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="one organization on one trace")
    run.add_argument("--config", help="file supplying defaults for any run flag")
    run.add_argument("--trace")
    run.add_argument("--org", choices=ORG_CHOICES)
    run.add_argument("--entries", type=int)
    run.add_argument("--ways", type=int)
    run.add_argument("--latency", type=int, help="L2 BTB access latency in cycles")
    run.add_argument("--variants", type=int, choices=(2, 3, 4))
    run.add_argument("--warmup", type=int)
    run.add_argument("--measure", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="result CSV path; stdout when omitted")

    sweep = sub.add_parser("sweep", help="expand and run an experiment file")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", help="overrides out= from the config file")

    gen = sub.add_parser("gen-trace", help="generate a synthetic trace")
    gen.add_argument("--spec", required=True, help="generator spec file")
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, help="overrides seed from the spec file")

    ana = sub.add_parser("analyze-offsets", help="per-kind offset-width table")
    ana.add_argument("--trace", required=True)
    ana.add_argument("--out", help="CSV path; stdout when omitted")

    sto = sub.add_parser("storage", help="print an organization's storage budget")
    sto.add_argument("--org", choices=ORG_CHOICES, required=True)
    sto.add_argument("--entries", type=int)
    sto.add_argument("--ways", type=int)
    sto.add_argument("--variants", type=int, choices=(2, 3, 4))
    return p


def _echo_config(cmd, pairs):
    body = " ".join(f"{k}={v}" for k, v in pairs if v not in (None, ""))
    print(f"# effective-config {cmd} {body}", file=sys.stderr)


def _merge_run_config(args):
    """Fill run flags the command line left unset; explicit flags win.

    Filling the parsed namespace directly sidesteps argparse's subparser
    default handling, which would let subparser defaults clobber values
    injected with set_defaults on the top-level parser.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(args.config) as f:
        cp.read_file(f)
    if "run" not in cp:
        raise ConfigError(f"{args.config}: expected a [run] section")
    for key, raw in cp["run"].items():
        if key not in RUN_FLAG_TYPES:
            raise ConfigError(f"{args.config}: unknown run setting {key!r}")
        if getattr(args, key) is None:
            try:
                setattr(args, key, RUN_FLAG_TYPES[key](raw))
            except ValueError:
                raise ConfigError(f"{args.config}: bad value for {key}: {raw!r}")
    return args


def _org_spec(args):
    return OrgSpec(
        label=args.org,
        kind=args.org,
        entries=args.entries or 0,
        ways=args.ways or 0,
        variant_mode=args.variants or 0,
    )


def _cmd_run(parser, args):
    if args.config:
        args = _merge_run_config(args)
    if not args.trace:
        parser.error("run needs --trace (flag or config file)")
    if not args.org:
        parser.error("run needs --org (flag or config file)")
    spec = _org_spec(args)
    spec.validate()
    frontend = FrontendConfig(
        **({"l2btb_latency": args.latency} if args.latency else {})
    )
    cfg = ExperimentConfig(
        traces=[args.trace],
        orgs=[spec],
        frontend=frontend,
        warmup=args.warmup or 0,
        measure=args.measure or 0,
        seed=args.seed if args.seed is not None else 1,
        out=args.out or "",
    )
    _echo_config("run", [
        ("trace", args.trace), ("org", spec.descriptor()),
        ("latency", frontend.l2btb_latency), ("warmup", cfg.warmup),
        ("measure", cfg.measure or "rest"), ("seed", cfg.seed),
        ("out", cfg.out or "stdout"),
    ])
    rows = run_experiment(cfg)
    if not cfg.out:
        write_results_stream(sys.stdout, rows, cfg.seed, config_hash(cfg))
    return 0


def _cmd_sweep(args):
    cfg = parse_config(args.config)
    if args.out:
        cfg.out = args.out
    if not cfg.out:
        raise ConfigError("sweep needs --out or out= in the config file")
    _echo_config("sweep", [
        ("config", args.config), ("traces", ",".join(cfg.traces)),
        ("orgs", ",".join(o.label for o in cfg.orgs)),
        ("sweep", cfg.sweep and f"{cfg.sweep.org_label}:{cfg.sweep.axis}"),
        ("seed", cfg.seed), ("out", cfg.out),
    ])
    run_experiment(cfg)
    return 0


def _parse_gen_spec(path, seed_override):
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(path) as f:
        cp.read_file(f)
    for section in ("trace", "kind_mix", "offset_bits"):
        if section not in cp:
            raise ConfigError(f"{path}: missing [{section}] section")
    t = cp["trace"]
    mix = {}
    for name, weight in cp["kind_mix"].items():
        if name not in KINDS_BY_NAME:
            raise ConfigError(f"{path}: unknown branch kind {name!r}")
        mix[KINDS_BY_NAME[name]] = float(weight)
    hist = {int(w): float(v) for w, v in cp["offset_bits"].items()}
    return SyntheticSpec(
        static_branch_count=t.getint("static_branches"),
        kind_mix=mix,
        offset_bits_histogram=hist,
        event_count=t.getint("events"),
        seed=seed_override if seed_override is not None else t.getint("seed", 1),
        call_depth_max=t.getint("call_depth_max", 8),
        indirect_target_fanout=t.getint("indirect_target_fanout", 4),
        taken_rate=t.getfloat("taken_rate", 0.6),
        gap_max=t.getint("gap_max", 10),
    )


def _cmd_gen_trace(args):
    spec = _parse_gen_spec(args.spec, args.seed)
    _echo_config("gen-trace", [
        ("spec", args.spec), ("events", spec.event_count),
        ("static", spec.static_branch_count), ("seed", spec.seed),
        ("out", args.out),
    ])
    save_trace(gen_synthetic(spec), args.out)
    return 0


def _cmd_analyze_offsets(args):
    events = load_trace(args.trace)
    table = analyze_offsets(events)
    _echo_config("analyze-offsets", [
        ("trace", args.trace), ("events", len(events)),
        ("out", args.out or "stdout"),
    ])
    if args.out:
        write_offsets_csv(args.out, table)
    else:
        print("kind,width,cumulative_fraction")
        for kind, width, frac in table:
            print(f"{kind},{width},{frac}")
    return 0


def _cmd_storage(args):
    spec = _org_spec(args)
    spec.validate()
    org = spec.build()
    _echo_config("storage", [
        ("org", spec.descriptor()), ("bits", org.storage_bits()),
    ])
    print(f"{org.storage_bits() / 8192:g} KB")
    return 0


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.cmd == "run":
            return _cmd_run(parser, args)
        if args.cmd == "sweep":
            return _cmd_sweep(args)
        if args.cmd == "gen-trace":
            return _cmd_gen_trace(args)
        if args.cmd == "analyze-offsets":
            return _cmd_analyze_offsets(args)
        return _cmd_storage(args)
    except ConfigError as exc:
        parser.exit(2, f"btbsim: {exc}\n")
    except (
        OSError,
        TraceError,
        InfeasibleSpecError,
        TraceExhaustedError,
        ValueError,
    ) as exc:
        print(f"btbsim: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
