"""Shipping criteria, one test each, with pinned tolerances and time budgets.

Every test appends a PASS/FAIL line to the summary block that conftest
prints after the run, so `pytest -v` always ends with one verdict per
criterion.  Expected values are structural facts asserted exactly or
directional comparisons between runs; nothing here was copied back from
simulator output.  The heavyweight high-footprint trace and its frontend
runs are cached at module scope because two criteria share them.
"""

import random
import time

import conftest
from reference_models import RefBaseline, RefFdipx, RefMbtb, RefSkewed
from test_btb_models import drive_pair, equivalence_trace
from test_frontend_sim import golden_trace

from btbsim.btb_models import (
    BaselineBtb,
    FdipXBtb,
    IdealBtb,
    MicroBtb,
    SkewedBtb,
    decode_target,
    empty_field,
    encode_offset,
)
from btbsim.frontend_sim import FrontendConfig, FrontendSim, run_frontend
from btbsim.harness import ExperimentConfig, OrgSpec, SweepSpec, run_experiment
from btbsim.trace import (
    BranchKind,
    SyntheticSpec,
    TraceEvent,
    gen_synthetic,
    save_trace,
)


def _record(name, budget, t0, ok, detail):
    elapsed = time.perf_counter() - t0
    in_budget = elapsed < budget
    status = "PASS" if ok and in_budget else "FAIL"
    line = f"{status}  {name:<34} {detail}  [{elapsed:.2f}s/{budget:g}s]"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, f"{name}: {detail}"
    assert in_budget, f"{name}: {elapsed:.2f}s exceeded the {budget:g}s budget"


# ---------------------------------------------------------------------------
# shared high-footprint workload (criteria: compression capture, scki/mpki)

# no call/return kinds: a call site costs two static pcs (the call plus its
# paired return), which would stop the pool from landing on 16384 exactly
CAPTURE_SPEC = SyntheticSpec(
    static_branch_count=16_384,
    kind_mix={
        BranchKind.COND_DIRECT: 0.70,
        BranchKind.UNCOND_DIRECT: 0.24,
        BranchKind.INDIRECT_JUMP: 0.06,
    },
    offset_bits_histogram={8: 0.45, 11: 0.30, 14: 0.18, 30: 0.07},
    event_count=120_000,
    taken_rate=0.7,
    seed=77,
)

_capture_cache = {}

_CAPTURE_ORGS = {
    "ideal": lambda: IdealBtb(),
    "mbtb4k": lambda: MicroBtb(sets_per_bank=1024, variant_mode=2, seed=5),
    "baseline8k": lambda: BaselineBtb(sets=2048, ways=4),
    "baseline4k": lambda: BaselineBtb(sets=1024, ways=4),
}


def _capture_events():
    if "events" not in _capture_cache:
        _capture_cache["events"] = gen_synthetic(CAPTURE_SPEC)
    return _capture_cache["events"]


def _capture_run(name):
    if name not in _capture_cache:
        _capture_cache[name] = run_frontend(
            _capture_events(),
            _CAPTURE_ORGS[name](),
            warmup_events=40_000,
            measure_events=80_000,
        )
    return _capture_cache[name]


# ---------------------------------------------------------------------------
# criteria


def test_criterion_storage_accounting():
    t0 = time.perf_counter()
    kb = {
        "mbtb4k": MicroBtb(sets_per_bank=1024, variant_mode=2).storage_bits() / 8192,
        "baseline8k": BaselineBtb(sets=2048, ways=4).storage_bits() / 8192,
        "skewed8k": SkewedBtb(sets=2048, ways=4).storage_bits() / 8192,
    }
    fdipx_bits = FdipXBtb().storage_bits()
    ok = (
        kb == {"mbtb4k": 45.5, "baseline8k": 93.0, "skewed8k": 91.0}
        and fdipx_bits == 726_400
        and "66.92" in FdipXBtb.__doc__  # the discrepancy stays documented
    )
    _record(
        "storage accounting", 1.0, t0, ok,
        f"KB={kb} fdipx_bits={fdipx_bits} (88.67 KB, note present)",
    )


def test_criterion_offset_field_roundtrip():
    t0 = time.perf_counter()
    rng = random.Random(20260813)
    bad = 0
    for _ in range(100_000):
        w = rng.randint(2, 56)
        mag = rng.randrange(1 << w)
        # place pc so the target stays inside the 57-bit address space
        if rng.random() < 0.5:
            pc = ((1 << 57) - 1) - rng.getrandbits(55)
            target = pc - mag
        else:
            pc = rng.getrandbits(55)
            target = pc + mag
        enc = encode_offset(pc, target, w)
        if enc is None or enc == empty_field(w):
            bad += 1
        elif decode_target(pc, enc, w) != target:
            bad += 1
    boundary = True
    for w in (3, 7, 14, 15, 28):
        pc = 1 << 40
        boundary &= encode_offset(pc, pc + (1 << w), w) is None
        boundary &= encode_offset(pc, pc - (1 << w), w) is None
        boundary &= encode_offset(pc, pc + (1 << w) - 1, w) is not None
        boundary &= encode_offset(pc, pc - (1 << w) + 1, w) is not None
    ok = bad == 0 and boundary
    _record(
        "offset field roundtrip", 5.0, t0, ok,
        f"100000 random cases, {bad} failures; 2^w cutoffs exact={boundary}",
    )


def test_criterion_ideal_table_oracle():
    t0 = time.perf_counter()
    spec = SyntheticSpec(
        static_branch_count=900,
        kind_mix={
            BranchKind.COND_DIRECT: 0.55,
            BranchKind.UNCOND_DIRECT: 0.15,
            BranchKind.DIRECT_CALL: 0.08,
            BranchKind.INDIRECT_JUMP: 0.07,
            BranchKind.RETURN: 0.15,
        },
        offset_bits_histogram={7: 0.4, 13: 0.4, 26: 0.2},
        event_count=10_000,
        seed=11,
    )
    events = gen_synthetic(spec)
    ideal = IdealBtb()
    misses = 0
    for ev in events:
        if not ev.taken:
            continue
        if not ideal.lookup(ev.pc).hit:
            misses += 1
            ideal.insert(ev.pc, ev.target, ev.kind)
    unique_taken = len({ev.pc for ev in events if ev.taken})
    ok = misses == unique_taken
    _record(
        "ideal table oracle", 1.0, t0, ok,
        f"misses={misses} unique_taken={unique_taken} on 10000 events",
    )


def test_criterion_reference_equivalence():
    t0 = time.perf_counter()
    events = equivalence_trace(2026, events=100_000, static=4000)
    small_tables = ((512, 8, 29), (512, 13, 34), (512, 23, 44), (128, 57, 77))
    pairs = [
        ("mbtb v2", MicroBtb(sets_per_bank=256, variant_mode=2, seed=42),
         RefMbtb(256, variant_mode=2, seed=42)),
        ("mbtb v4", MicroBtb(sets_per_bank=256, variant_mode=4, seed=42),
         RefMbtb(256, variant_mode=4, seed=42)),
        ("baseline", BaselineBtb(sets=256, ways=4), RefBaseline(256, 4)),
        ("skewed", SkewedBtb(sets=256, ways=4, seed=9), RefSkewed(256, 4, seed=9)),
        ("fdipx", FdipXBtb(tables=small_tables), RefFdipx(small_tables)),
    ]
    mismatch = None
    for label, org, ref in pairs:
        try:
            drive_pair(org, ref, events)
        except AssertionError as exc:
            mismatch = f"{label}: {exc}"
            break
    ok = mismatch is None
    _record(
        "reference model equivalence", 30.0, t0, ok,
        mismatch or f"{len(pairs)} organizations x 100000 events, streams identical",
    )


def test_criterion_compression_capture():
    t0 = time.perf_counter()
    events = _capture_events()
    # uniform reuse leaves a statistical handful of the 16384-branch pool
    # unvisited in 120k events, so coverage is checked, not exact identity
    emitted = len({ev.pc for ev in events})
    coverage = emitted / CAPTURE_SPEC.static_branch_count
    near = sum(1 for ev in events if abs(ev.target - ev.pc) < 1 << 15)
    frac = near / len(events)
    mbtb = _capture_run("mbtb4k")
    base = _capture_run("baseline4k")
    census = mbtb.resident_branches_mean
    rel = (base.mpki - mbtb.mpki) / base.mpki if base.mpki else 0.0
    ok = (
        CAPTURE_SPEC.static_branch_count == 16_384
        and coverage >= 0.999
        and frac >= 0.90
        and census > 4096
        and rel >= 0.20
    )
    _record(
        "compression capture", 60.0, t0, ok,
        f"pool=16384 ({coverage:.2%} emitted) near={frac:.1%} census={census:.0f}"
        f" mpki {mbtb.mpki:.2f} vs {base.mpki:.2f} ({rel:+.1%})",
    )


def _conflict_trace(rounds=1500, branches=12, sets=256):
    """Branches whose pcs collide modulo `sets` but differ above the index."""
    stride = sets * 4
    base = 0x40_0000
    events = []
    for _ in range(rounds):
        for k in range(branches):
            pc = base + k * stride
            events.append(TraceEvent(pc, 4, BranchKind.COND_DIRECT, True, pc + 64))
    return events


def test_criterion_skewed_indexing_benefit():
    t0 = time.perf_counter()
    events = _conflict_trace()

    def mpki_of(org):
        rep = run_frontend(events, org, warmup_events=2400, measure_events=12_000)
        return rep.mpki

    both = mpki_of(MicroBtb(sets_per_bank=256, variant_mode=2, seed=3))
    compress_only = mpki_of(
        MicroBtb(sets_per_bank=256, variant_mode=2, skewed=False, seed=3)
    )
    skew_only = mpki_of(
        MicroBtb(sets_per_bank=256, variant_mode=2, compress=False, seed=3)
    )
    modulo = mpki_of(BaselineBtb(sets=256, ways=4))
    ok = both < compress_only and skew_only < modulo
    _record(
        "skewed indexing benefit", 60.0, t0, ok,
        f"skew+compress {both:.2f} < compress-only {compress_only:.2f};"
        f" skew-only {skew_only:.2f} < modulo {modulo:.2f}",
    )


def test_criterion_variant_eviction_sensitivity():
    t0 = time.perf_counter()
    # Compared at equal compressed capacity, not equal geometry: 1024 sets
    # at 2 slots, 512 at 4, 256 at 8 all hold 8192 tiny branches.  At equal
    # geometry the deeper modes simply retain more, and since every branch
    # placed is eventually displaced or survives, fewer misses means fewer
    # displacements no matter how full the victims are.  Pressure is kept
    # moderate (working set ~1.1x capacity) so entries live long enough to
    # pack toward their slot cap before a victimization takes the whole
    # group out at once.
    spec = SyntheticSpec(
        static_branch_count=9000,
        kind_mix={BranchKind.COND_DIRECT: 0.8, BranchKind.UNCOND_DIRECT: 0.2},
        offset_bits_histogram={3: 0.85, 30: 0.15},
        event_count=120_000,
        taken_rate=1.0,
        seed=21,
    )
    events = gen_synthetic(spec)
    displaced = {}
    for mode, sets in ((2, 1024), (3, 512), (4, 256)):
        org = MicroBtb(sets_per_bank=sets, variant_mode=mode, seed=13)
        total = 0
        for ev in events:
            if ev.taken:
                total += org.insert(ev.pc, ev.target, ev.kind).count
        displaced[mode] = total
    ok = displaced[4] >= displaced[3] >= displaced[2]
    _record(
        "variant eviction sensitivity", 60.0, t0, ok,
        f"displaced by mode {displaced}",
    )


def test_criterion_lru_inclusion():
    t0 = time.perf_counter()
    violations = []
    for seed in range(10):
        spec = SyntheticSpec(
            static_branch_count=1500,
            kind_mix={
                BranchKind.COND_DIRECT: 0.6,
                BranchKind.UNCOND_DIRECT: 0.2,
                BranchKind.DIRECT_CALL: 0.1,
                BranchKind.RETURN: 0.1,
            },
            offset_bits_histogram={9: 0.4, 14: 0.3, 21: 0.3},
            event_count=20_000,
            seed=100 + seed,
        )
        events = gen_synthetic(spec)
        misses = []
        for ways in (2, 4, 8):
            btb = BaselineBtb(sets=128, ways=ways)
            m = 0
            for ev in events:
                if not btb.lookup(ev.pc).hit:
                    m += 1
                    btb.insert(ev.pc, ev.target, ev.kind)
            misses.append(m)
        if not misses[0] >= misses[1] >= misses[2]:
            violations.append((seed, misses))
    ok = not violations
    _record(
        "lru inclusion", 60.0, t0, ok,
        f"10 traces, ways 2/4/8 misses non-increasing; violations={violations}",
    )


def test_criterion_latency_sweep_monotone():
    t0 = time.perf_counter()
    spec = SyntheticSpec(
        static_branch_count=800,
        kind_mix={
            BranchKind.COND_DIRECT: 0.6,
            BranchKind.UNCOND_DIRECT: 0.15,
            BranchKind.DIRECT_CALL: 0.1,
            BranchKind.RETURN: 0.15,
        },
        offset_bits_histogram={9: 0.4, 15: 0.4, 24: 0.2},
        event_count=20_000,
        seed=31,
    )
    events = gen_synthetic(spec)
    cycles = []
    for lat in (1, 2, 3, 4, 5):
        org = MicroBtb(sets_per_bank=256, variant_mode=2, seed=5)
        rep = run_frontend(
            events, org, config=FrontendConfig(l2btb_latency=lat),
            warmup_events=2000, measure_events=16_000,
        )
        cycles.append(rep.cycles)
    ok = all(a <= b for a, b in zip(cycles, cycles[1:]))
    _record(
        "latency sweep monotone", 60.0, t0, ok,
        f"cycles over latency 1..5 = {cycles}",
    )


def test_criterion_scki_tracks_mpki():
    t0 = time.perf_counter()
    names = ("ideal", "mbtb4k", "baseline8k", "baseline4k")
    reports = {n: _capture_run(n) for n in names}
    by_mpki = sorted(names, key=lambda n: (reports[n].mpki, n))
    by_scki = sorted(names, key=lambda n: (reports[n].scki, n))
    ok = by_mpki == by_scki
    pairs = {n: (round(reports[n].mpki, 2), round(reports[n].scki, 2)) for n in names}
    _record(
        "scki/mpki ranking agreement", 120.0, t0, ok,
        f"mpki order {by_mpki} == scki order {by_scki}; (mpki, scki)={pairs}",
    )


def test_criterion_timing_goldens():
    t0 = time.perf_counter()
    r1 = run_frontend(golden_trace(), IdealBtb(), warmup_events=0, measure_events=2)
    c1 = r1.latency[BranchKind.COND_DIRECT]
    g1 = (c1.fetch_queue, c1.decode_queue, c1.execute, r1.cycles,
          r1.starved_cycles) == (4, 1, 0, 16, 10)

    sim = FrontendSim(golden_trace(), IdealBtb())
    sim.dq.append(("f", 60))
    sim.dq_size = 60
    r2 = sim.run(0, 2)
    c2 = r2.latency[BranchKind.COND_DIRECT]
    g2 = (c2.fetch_queue, c2.decode_queue, c2.execute, r2.cycles) == (4, 6, 0, 21)

    tr3 = golden_trace(first_kind=BranchKind.INDIRECT_JUMP, first_target=0x2000)
    r3 = run_frontend(tr3, IdealBtb(), warmup_events=0, measure_events=2)
    i3 = r3.latency[BranchKind.INDIRECT_JUMP]
    g3 = (i3.fetch_queue, i3.decode_queue, i3.execute, r3.cycles) == (4, 1, 12, 28)

    ok = g1 and g2 and g3
    _record(
        "timing goldens", 1.0, t0, ok,
        f"empty-queue={g1} full-decode-queue={g2} indirect={g3}",
    )


def test_criterion_determinism(tmp_path):
    t0 = time.perf_counter()
    spec = SyntheticSpec(
        static_branch_count=400,
        kind_mix={
            BranchKind.COND_DIRECT: 0.6,
            BranchKind.UNCOND_DIRECT: 0.2,
            BranchKind.DIRECT_CALL: 0.1,
            BranchKind.RETURN: 0.1,
        },
        offset_bits_histogram={8: 0.5, 16: 0.5},
        event_count=6000,
        seed=9,
    )
    tp = tmp_path / "d.btr"
    save_trace(gen_synthetic(spec), tp)

    def run_once(out):
        cfg = ExperimentConfig(
            traces=[str(tp)],
            orgs=[
                OrgSpec(label="m", kind="mbtb", entries=1024),
                OrgSpec(label="b", kind="baseline", entries=1024),
            ],
            sweep=SweepSpec(org_label="m", axis="latency", values=(1, 2)),
            warmup=1000,
            measure=4000,
            seed=12,
            out=str(out),
        )
        cfg.validate()
        run_experiment(cfg)
        return out.read_bytes()

    first = run_once(tmp_path / "a.csv")
    second = run_once(tmp_path / "b.csv")
    ok = bool(first) and first == second
    _record(
        "determinism", 60.0, t0, ok,
        f"rerun byte-identical={first == second} ({len(first)} bytes incl header)",
    )
