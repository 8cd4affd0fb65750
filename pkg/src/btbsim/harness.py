"""Experiment orchestration: configs, sweeps, offset analysis, CSV tables.

A run is described by an INI file::

    [experiment]
    trace = traces/a.btr traces/b.btr
    warmup = 100000
    measure = 900000
    seed = 7
    out = results.csv

    [frontend]
    l2btb_latency = 2          ; any FrontendConfig field

    [org baseline8k]
    kind = baseline            ; baseline | skewed | mbtb | fdipx | ideal
    entries = 8192
    ways = 4

    [org mbtb4k]
    kind = mbtb
    entries = 4096
    variants = 2
    skewed = true
    compress = true

    [sweep]
    org = mbtb4k               ; optional when exactly one org is defined
    axis = latency             ; entries | ways | latency | variants
    values = 1 2 3 4 5

Every (trace, org, sweep point) combination becomes one ResultRow and one
CSV line; the swept org contributes only its sweep points.  Points run in
a thread pool but results are ordered by their position in the expanded
job list, so output never depends on scheduling.
"""

import configparser
import csv
import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields as dc_fields, replace

from .btb_models import (
    BaselineBtb,
    FdipXBtb,
    IdealBtb,
    MicroBtb,
    SkewedBtb,
)
from .frontend_sim import FrontendConfig, run_frontend
from .trace import BranchKind, KIND_NAMES, load_trace, offset_width

ADDR_BITS_MAX_WIDTH = 57
SWEEP_AXES = ("entries", "ways", "latency", "variants")

# column order for the per-kind latency block, by wire kind order
KIND_ORDER = [KIND_NAMES[k] for k in sorted(BranchKind, key=int)]

BASE_COLUMNS = [
    "trace",
    "org",
    "point",
    "storage_kb",
    "mpki",
    "scki",
    "ipc_proxy",
    "resident_branches_mean",
    "evictions",
    "false_hits",
    "cycles",
    "retired_instructions",
    "retired_events",
]

LATENCY_SUBCOLUMNS = ("resolved", "fq_mean", "dq_mean", "ex_mean", "total_mean")


def result_columns():
    cols = list(BASE_COLUMNS)
    for kname in KIND_ORDER:
        cols += [f"{kname}_{sub}" for sub in LATENCY_SUBCOLUMNS]
    return cols


class ConfigError(ValueError):
    """The experiment description is malformed."""


@dataclass(frozen=True)
class OrgSpec:
    """One BTB organization to evaluate, in harness-level terms.

    entries is total branch capacity; the per-organization geometry
    (sets x ways, banks) is derived from it.
    """

    label: str
    kind: str
    entries: int = 0  # 0 means the organization's default size
    ways: int = 0
    variant_mode: int = 0
    skewed: bool = True
    compress: bool = True

    DEFAULT_ENTRIES = {"baseline": 8192, "skewed": 8192, "mbtb": 4096}
    DEFAULT_WAYS = {"baseline": 4, "skewed": 4}

    def validate(self):
        if self.kind not in ("baseline", "skewed", "mbtb", "fdipx", "ideal"):
            raise ConfigError(f"unknown org kind {self.kind!r}")
        if self.kind in ("fdipx", "ideal"):
            if self.entries or self.ways or self.variant_mode:
                raise ConfigError(
                    f"{self.kind} has fixed geometry; entries/ways/variants do not apply"
                )
        if self.variant_mode and self.kind != "mbtb":
            raise ConfigError("variants only applies to mbtb")
        if self.ways and self.kind not in ("baseline", "skewed"):
            raise ConfigError("ways only applies to baseline/skewed")

    def resolved(self):
        """Fill in defaults, returning a concrete spec."""
        entries = self.entries or self.DEFAULT_ENTRIES.get(self.kind, 0)
        ways = self.ways or self.DEFAULT_WAYS.get(self.kind, 0)
        variants = self.variant_mode or (2 if self.kind == "mbtb" else 0)
        return replace(self, entries=entries, ways=ways, variant_mode=variants)

    def build(self, seed=1):
        spec = self.resolved()
        if spec.kind == "baseline":
            sets, rem = divmod(spec.entries, spec.ways)
            if rem:
                raise ConfigError("entries must divide evenly by ways")
            return BaselineBtb(sets=sets, ways=spec.ways)
        if spec.kind == "skewed":
            sets, rem = divmod(spec.entries, spec.ways)
            if rem or sets & (sets - 1):
                raise ConfigError(
                    "skewed indexing needs entries/ways to be a power of two"
                )
            return SkewedBtb(sets=sets, ways=spec.ways, seed=seed)
        if spec.kind == "mbtb":
            sets, rem = divmod(spec.entries, 4)
            if rem or sets & (sets - 1):
                raise ConfigError(
                    "mbtb needs entries to be 4 x a power-of-two bank size"
                )
            return MicroBtb(
                sets_per_bank=sets,
                variant_mode=spec.variant_mode,
                skewed=spec.skewed,
                compress=spec.compress,
                seed=seed,
            )
        if spec.kind == "fdipx":
            return FdipXBtb()
        return IdealBtb()

    def descriptor(self):
        spec = self.resolved()
        if spec.kind in ("fdipx", "ideal"):
            return spec.kind
        if spec.kind == "mbtb":
            tags = [f"{spec.entries}e", f"v{spec.variant_mode}"]
            if not spec.skewed:
                tags.append("noskew")
            if not spec.compress:
                tags.append("nocompress")
            return "mbtb[" + ",".join(tags) + "]"
        return f"{spec.kind}[{spec.entries}e,{spec.ways}w]"


@dataclass(frozen=True)
class SweepSpec:
    org_label: str
    axis: str
    values: tuple

    def validate(self, org_labels):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}")
        if self.org_label not in org_labels:
            raise ConfigError(f"sweep org {self.org_label!r} is not defined")
        if not self.values:
            raise ConfigError("sweep needs at least one value")


@dataclass
class ExperimentConfig:
    traces: list
    orgs: list  # OrgSpec
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    sweep: SweepSpec = None
    warmup: int = 0
    measure: int = 0  # 0 means the rest of the trace
    seed: int = 1
    out: str = ""

    def validate(self):
        if not self.traces:
            raise ConfigError("at least one trace is required")
        if not self.orgs:
            raise ConfigError("at least one org is required")
        labels = [o.label for o in self.orgs]
        if len(set(labels)) != len(labels):
            raise ConfigError("org labels must be unique")
        for org in self.orgs:
            org.validate()
        if self.sweep is not None:
            self.sweep.validate(labels)
            target = next(o for o in self.orgs if o.label == self.sweep.org_label)
            if self.sweep.axis == "variants" and target.kind != "mbtb":
                raise ConfigError("variants sweep applies only to mbtb")
            if self.sweep.axis == "ways" and target.kind not in ("baseline", "skewed"):
                raise ConfigError("ways sweep applies only to baseline/skewed")
            if self.sweep.axis == "entries" and target.kind in ("fdipx", "ideal"):
                raise ConfigError("entries sweep does not apply to fixed geometries")
        self.frontend.validate()
        return self


def parse_config(path):
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(path) as f:
        cp.read_file(f)
    if "experiment" not in cp:
        raise ConfigError("missing [experiment] section")
    exp = cp["experiment"]
    traces = exp.get("trace", "").replace(",", " ").split()
    warmup = exp.getint("warmup", 0)
    measure = exp.getint("measure", 0)
    seed = exp.getint("seed", 1)
    out = exp.get("out", "")

    fc_kwargs = {}
    if "frontend" in cp:
        valid = {f.name for f in dc_fields(FrontendConfig)}
        for key, value in cp["frontend"].items():
            if key not in valid:
                raise ConfigError(f"unknown frontend setting {key!r}")
            fc_kwargs[key] = int(value)
    frontend = FrontendConfig(**fc_kwargs)

    orgs = []
    for section in cp.sections():
        if not section.startswith("org "):
            continue
        label = section[4:].strip()
        s = cp[section]
        if "kind" not in s:
            raise ConfigError(f"[{section}] needs a kind")
        orgs.append(
            OrgSpec(
                label=label,
                kind=s["kind"].strip(),
                entries=s.getint("entries", 0),
                ways=s.getint("ways", 0),
                variant_mode=s.getint("variants", 0),
                skewed=s.getboolean("skewed", True),
                compress=s.getboolean("compress", True),
            )
        )

    sweep = None
    if "sweep" in cp:
        s = cp["sweep"]
        if "axis" not in s or "values" not in s:
            raise ConfigError("[sweep] needs axis and values")
        org_label = s.get("org", "").strip()
        if not org_label:
            if len(orgs) != 1:
                raise ConfigError("[sweep] needs org= when several orgs are defined")
            org_label = orgs[0].label
        values = tuple(int(v) for v in s["values"].replace(",", " ").split())
        sweep = SweepSpec(org_label=org_label, axis=s["axis"].strip(), values=values)

    return ExperimentConfig(
        traces=traces, orgs=orgs, frontend=frontend, sweep=sweep,
        warmup=warmup, measure=measure, seed=seed, out=out,
    ).validate()


def config_hash(cfg):
    """Short digest of everything that determines the results."""
    canon = (
        tuple(cfg.traces),
        tuple(
            (o.label, o.kind, o.entries, o.ways, o.variant_mode, o.skewed, o.compress)
            for o in cfg.orgs
        ),
        tuple(sorted(cfg.frontend.__dict__.items())),
        None if cfg.sweep is None else (cfg.sweep.org_label, cfg.sweep.axis, cfg.sweep.values),
        cfg.warmup,
        cfg.measure,
        cfg.seed,
    )
    return hashlib.sha256(repr(canon).encode()).hexdigest()[:12]


@dataclass
class ResultRow:
    trace_id: str
    org: str
    point: str
    storage_kb: float
    mpki: float
    scki: float
    ipc_proxy: float
    resident_branches_mean: float
    evictions: int
    false_hits: int
    cycles: int
    retired_instructions: int
    retired_events: int
    latency: dict  # kind name -> dict of LATENCY_SUBCOLUMNS

    def to_csv_values(self):
        vals = [
            self.trace_id, self.org, self.point, self.storage_kb, self.mpki,
            self.scki, self.ipc_proxy, self.resident_branches_mean,
            self.evictions, self.false_hits, self.cycles,
            self.retired_instructions, self.retired_events,
        ]
        for kname in KIND_ORDER:
            block = self.latency.get(kname, {})
            vals += [block.get(sub, 0) for sub in LATENCY_SUBCOLUMNS]
        return vals


def _latency_blocks(report):
    blocks = {}
    for kind, stats in report.latency.items():
        n = stats.count
        blocks[KIND_NAMES[kind]] = {
            "resolved": n,
            "fq_mean": stats.fetch_queue / n,
            "dq_mean": stats.decode_queue / n,
            "ex_mean": stats.execute / n,
            "total_mean": stats.total / n,
        }
    return blocks


def _run_point(trace_path, trace_id, events, org_spec, frontend, point, warmup,
               measure, seed):
    if events is None:
        events = load_trace(trace_path)
    org = org_spec.build(seed)
    measure_events = measure or (len(events) - warmup)
    report = run_frontend(
        events, org, config=frontend, warmup_events=warmup,
        measure_events=measure_events, seed=seed,
    )
    return ResultRow(
        trace_id=trace_id,
        org=org_spec.descriptor(),
        point=point,
        storage_kb=org.storage_bits() / 8192,
        mpki=report.mpki,
        scki=report.scki,
        ipc_proxy=report.ipc_proxy,
        resident_branches_mean=report.resident_branches_mean,
        evictions=report.evictions,
        false_hits=report.false_hits,
        cycles=report.cycles,
        retired_instructions=report.retired_instructions,
        retired_events=report.retired_events,
        latency=_latency_blocks(report),
    )


def _sweep_variants(org, frontend, sweep):
    """Expand the swept org into (org_spec, frontend, point label) triples."""
    out = []
    for v in sweep.values:
        if sweep.axis == "latency":
            out.append((org, replace(frontend, l2btb_latency=v), f"latency={v}"))
        elif sweep.axis == "entries":
            out.append((replace(org, entries=v), frontend, f"entries={v}"))
        elif sweep.axis == "ways":
            out.append((replace(org, ways=v), frontend, f"ways={v}"))
        else:
            out.append((replace(org, variant_mode=v), frontend, f"variants={v}"))
    return out


def expand_jobs(cfg):
    """Deterministic job list; row order in the CSV follows this order."""
    jobs = []
    for trace_path in cfg.traces:
        trace_id = os.path.splitext(os.path.basename(trace_path))[0]
        for org in cfg.orgs:
            if cfg.sweep is not None and org.label == cfg.sweep.org_label:
                for spec, fc, point in _sweep_variants(org, cfg.frontend, cfg.sweep):
                    jobs.append((trace_path, trace_id, spec, fc, point))
            else:
                jobs.append((trace_path, trace_id, org, cfg.frontend, "base"))
    return jobs


def run_experiment(cfg, events_by_path=None):
    """Run every combination; returns rows and writes cfg.out when set.

    events_by_path lets callers hand in already-loaded traces (tests, the
    single-run CLI path); anything not present is loaded from disk inside
    the worker, keeping sweep points independent.
    """
    cfg.validate()
    jobs = expand_jobs(cfg)
    events_by_path = events_by_path or {}

    def work(job):
        trace_path, trace_id, spec, fc, point = job
        return _run_point(
            trace_path, trace_id, events_by_path.get(trace_path), spec, fc,
            point, cfg.warmup, cfg.measure, cfg.seed,
        )

    workers = min(len(jobs), os.cpu_count() or 1) or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(work, jobs))
    if cfg.out:
        write_results_csv(cfg.out, rows, cfg.seed, config_hash(cfg))
    return rows


def write_results_stream(f, rows, seed, digest):
    f.write(f"# seed={seed} config={digest}\n")
    w = csv.writer(f)
    w.writerow(result_columns())
    for row in rows:
        w.writerow(row.to_csv_values())


def write_results_csv(path, rows, seed, digest):
    with open(path, "w", newline="") as f:
        write_results_stream(f, rows, seed, digest)


def read_results_csv(path):
    """Returns (list of per-row dicts with numeric fields parsed, meta dict)."""
    with open(path, newline="") as f:
        first = f.readline().strip()
        meta = {}
        if first.startswith("#"):
            for part in first[1:].split():
                k, _, v = part.partition("=")
                meta[k] = v
        else:
            f.seek(0)
        reader = csv.DictReader(f)
        rows = []
        for raw in reader:
            row = {}
            for key, value in raw.items():
                if key in ("trace", "org", "point"):
                    row[key] = value
                elif key in (
                    "evictions", "false_hits", "cycles",
                    "retired_instructions", "retired_events",
                ) or key.endswith("_resolved"):
                    row[key] = int(value)
                else:
                    row[key] = float(value)
            rows.append(row)
    return rows, meta


# ---------------------------------------------------------------------------
# offset analysis


def analyze_offsets(events):
    """Cumulative fraction of dynamic branches encodable within w offset bits.

    Returns rows (kind name, w, fraction) for w = 1..57, one block per kind
    present in the trace.
    """
    widths = {}
    for ev in events:
        widths.setdefault(ev.kind, []).append(offset_width(ev.pc, ev.target))
    table = []
    for kind in sorted(widths, key=int):
        ws = widths[kind]
        total = len(ws)
        counts = [0] * (ADDR_BITS_MAX_WIDTH + 1)
        for w in ws:
            counts[w] += 1
        running = 0
        for w in range(1, ADDR_BITS_MAX_WIDTH + 1):
            running += counts[w]
            table.append((KIND_NAMES[kind], w, running / total))
    return table


def write_offsets_csv(path, table):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["kind", "width", "cumulative_fraction"])
        w.writerows(table)


def read_offsets_csv(path):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        return [
            (r["kind"], int(r["width"]), float(r["cumulative_fraction"]))
            for r in reader
        ]


# ---------------------------------------------------------------------------
# organization comparison


def arithmetic_mean(xs):
    return sum(xs) / len(xs)


def geometric_mean(xs):
    return math.exp(sum(math.log(x) for x in xs) / len(xs))


def compare_orgs(events, org_specs, frontend=None, warmup=0, measure=0, seed=1,
                 trace_id="trace"):
    """Run every org on one trace; rank by MPKI and by SCKI.

    The summary carries both rankings, whether they agree, and both the
    arithmetic and geometric mean of ipc_proxy across orgs (explicitly
    labeled, since "average" is ambiguous between the two).
    """
    if len(org_specs) < 2:
        raise ConfigError("compare_orgs needs at least two orgs")
    frontend = frontend or FrontendConfig()
    rows = [
        _run_point("", trace_id, events, spec, frontend, "base", warmup, measure, seed)
        for spec in org_specs
    ]
    mpki_ranking = [r.org for r in sorted(rows, key=lambda r: (r.mpki, r.org))]
    scki_ranking = [r.org for r in sorted(rows, key=lambda r: (r.scki, r.org))]
    disagreements = [
        (a, b) for a, b in zip(mpki_ranking, scki_ranking) if a != b
    ]
    summary = {
        "mpki_ranking": mpki_ranking,
        "scki_ranking": scki_ranking,
        "rankings_agree": not disagreements,
        "disagreements": disagreements,
        "ipc_mean_arithmetic": arithmetic_mean([r.ipc_proxy for r in rows]),
        "ipc_mean_geometric": geometric_mean([r.ipc_proxy for r in rows]),
    }
    return rows, summary
