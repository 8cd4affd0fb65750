import io
import random

import pytest

from btbsim.trace import (
    ADDR_MASK,
    GAP_MAX,
    BranchKind,
    InfeasibleSpecError,
    SyntheticSpec,
    TraceError,
    TraceEvent,
    gen_synthetic,
    load_trace,
    offset_width,
    read_trace,
    read_trace_text,
    save_trace,
    trace_bytes,
    trace_stats,
    tv_distance,
    write_trace,
    write_trace_text,
)


def roundtrip_binary(events):
    buf = io.BytesIO()
    write_trace(events, buf)
    buf.seek(0)
    return read_trace(buf)


def roundtrip_text(events):
    buf = io.StringIO()
    write_trace_text(events, buf)
    buf.seek(0)
    return read_trace_text(buf)


def test_empty_roundtrip():
    assert roundtrip_binary([]) == []
    assert roundtrip_text([]) == []


def test_single_record_roundtrip():
    ev = TraceEvent(0x1000, 3, BranchKind.COND_DIRECT, True, 0x1010)
    assert roundtrip_binary([ev]) == [ev]
    assert roundtrip_text([ev]) == [ev]


def test_gap_boundary():
    ev = TraceEvent(0x40, GAP_MAX, BranchKind.UNCOND_DIRECT, True, 0x80)
    assert roundtrip_binary([ev]) == [ev]


def test_pc_out_of_range_rejected():
    ev = TraceEvent(1 << 57, 0, BranchKind.UNCOND_DIRECT, True, 0x80)
    with pytest.raises(TraceError):
        trace_bytes([ev])
    ev = TraceEvent(0x80, 0, BranchKind.UNCOND_DIRECT, True, 1 << 57)
    with pytest.raises(TraceError):
        trace_bytes([ev])


def test_not_taken_only_for_conditionals():
    ev = TraceEvent(0x80, 0, BranchKind.RETURN, False, 0x40)
    with pytest.raises(TraceError):
        trace_bytes([ev])
    # conditional not-taken is fine
    ev = TraceEvent(0x80, 0, BranchKind.COND_DIRECT, False, 0x40)
    assert roundtrip_binary([ev]) == [ev]


def test_bad_magic():
    with pytest.raises(TraceError):
        read_trace(io.BytesIO(b"NOTATRACE"))


def test_truncated_record():
    ev = TraceEvent(0x1000, 3, BranchKind.COND_DIRECT, True, 0x1010)
    raw = trace_bytes([ev])
    with pytest.raises(TraceError):
        read_trace(io.BytesIO(raw[:-5]))


def test_text_parse_errors():
    with pytest.raises(TraceError):
        read_trace_text(io.StringIO("0x10 0 conditional T\n"))
    with pytest.raises(TraceError):
        read_trace_text(io.StringIO("0x10 0 nonsense T 0x20\n"))
    with pytest.raises(TraceError):
        read_trace_text(io.StringIO("0x10 0 conditional X 0x20\n"))


def test_text_skips_comments_and_blanks():
    src = "# header\n\n0x1000 3 conditional T 0x1010\n"
    events = read_trace_text(io.StringIO(src))
    assert events == [TraceEvent(0x1000, 3, BranchKind.COND_DIRECT, True, 0x1010)]


def random_event(rng):
    kind = BranchKind(rng.randrange(6))
    taken = bool(rng.getrandbits(1)) if kind == BranchKind.COND_DIRECT else True
    return TraceEvent(
        rng.getrandbits(57),
        rng.getrandbits(32),
        kind,
        taken,
        rng.getrandbits(57),
    )


def test_roundtrip_random_sequences():
    rng = random.Random(0xB7B)
    for _ in range(40):
        events = [random_event(rng) for _ in range(rng.randrange(500))]
        assert roundtrip_binary(events) == events
        assert roundtrip_text(events) == events


def test_file_dispatch_by_extension(tmp_path):
    rng = random.Random(3)
    events = [random_event(rng) for _ in range(64)]
    bpath = tmp_path / "a.btr"
    tpath = tmp_path / "a.btt"
    save_trace(events, bpath)
    save_trace(events, tpath)
    assert load_trace(bpath) == events
    assert load_trace(tpath) == events
    # binary is the default for unknown suffixes
    opath = tmp_path / "a.bin"
    save_trace(events, opath)
    assert load_trace(opath) == events


def test_offset_width_examples():
    assert offset_width(0x1000, 0x1010) == 5  # |delta| = 16
    assert offset_width(0x1000, 0x1000) == 1  # self-branch still occupies a bucket
    assert offset_width(0x1000, 0x1001) == 1
    assert offset_width(0x1000, 0x0FFF) == 1
    assert offset_width(0, 1 << 56) == 57


def base_spec(**kw):
    d = dict(
        static_branch_count=200,
        kind_mix={
            BranchKind.COND_DIRECT: 0.55,
            BranchKind.UNCOND_DIRECT: 0.10,
            BranchKind.DIRECT_CALL: 0.12,
            BranchKind.INDIRECT_JUMP: 0.04,
            BranchKind.INDIRECT_CALL: 0.03,
            BranchKind.RETURN: 0.16,
        },
        offset_bits_histogram={8: 0.3, 12: 0.4, 16: 0.2, 24: 0.1},
        event_count=5000,
        seed=7,
    )
    d.update(kw)
    return SyntheticSpec(**d)


def test_generator_deterministic():
    a = gen_synthetic(base_spec())
    b = gen_synthetic(base_spec())
    assert trace_bytes(a) == trace_bytes(b)
    c = gen_synthetic(base_spec(seed=8))
    assert trace_bytes(a) != trace_bytes(c)


def test_generator_event_count_exact():
    for n in (1, 17, 1000):
        assert len(gen_synthetic(base_spec(event_count=n))) == n


def test_generator_calls_balanced():
    events = gen_synthetic(base_spec(event_count=20000, seed=11))
    depth = 0
    stack = []
    for ev in events:
        if ev.kind.is_call:
            depth += 1
            stack.append((ev.pc + 4) & ADDR_MASK)
            assert depth <= base_spec().call_depth_max
        elif ev.kind == BranchKind.RETURN:
            assert depth > 0, "return without open call"
            depth -= 1
            assert ev.target == stack.pop()
    assert depth == 0, "trace ends with open calls"


def test_generator_unique_pcs_near_static_count():
    spec = base_spec(static_branch_count=300, event_count=30000, seed=5)
    stats = trace_stats(gen_synthetic(spec))
    assert abs(stats.unique_pcs - spec.static_branch_count) <= 0.05 * spec.static_branch_count


def test_generator_offset_histogram_close():
    spec = base_spec(static_branch_count=400, event_count=40000, seed=9)
    stats = trace_stats(gen_synthetic(spec))
    assert tv_distance(stats.total_offset_hist(), spec.offset_bits_histogram) <= 0.05


def test_generator_realizes_every_requested_kind():
    events = gen_synthetic(base_spec(event_count=20000, seed=2))
    kinds = {ev.kind for ev in events}
    assert kinds == set(BranchKind)


def test_generator_rejects_orphan_returns():
    with pytest.raises(InfeasibleSpecError):
        gen_synthetic(
            base_spec(
                kind_mix={BranchKind.COND_DIRECT: 0.5, BranchKind.RETURN: 0.5}
            )
        )


def test_spec_validation():
    with pytest.raises(InfeasibleSpecError):
        base_spec(static_branch_count=0).validate()
    with pytest.raises(InfeasibleSpecError):
        base_spec(event_count=0).validate()
    with pytest.raises(InfeasibleSpecError):
        base_spec(offset_bits_histogram={99: 1.0}).validate()
    with pytest.raises(InfeasibleSpecError):
        base_spec(offset_bits_histogram={8: 0.0}).validate()
    with pytest.raises(InfeasibleSpecError):
        base_spec(kind_mix={BranchKind.COND_DIRECT: -1.0}).validate()


def test_stats_additive_over_concatenation():
    rng = random.Random(21)
    a = [random_event(rng) for _ in range(700)]
    b = [random_event(rng) for _ in range(300)]
    sa, sb, sab = trace_stats(a), trace_stats(b), trace_stats(a + b)
    assert sab.event_count == sa.event_count + sb.event_count
    for kind in BranchKind:
        assert sab.kind_counts.get(kind, 0) == sa.kind_counts.get(
            kind, 0
        ) + sb.kind_counts.get(kind, 0)
    total = sab.total_offset_hist()
    merged = sa.total_offset_hist()
    for w, n in sb.total_offset_hist().items():
        merged[w] = merged.get(w, 0) + n
    assert total == merged


def test_stats_unique_counts():
    events = [
        TraceEvent(0x10, 0, BranchKind.COND_DIRECT, True, 0x20),
        TraceEvent(0x10, 0, BranchKind.COND_DIRECT, False, 0x20),
        TraceEvent(0x30, 0, BranchKind.COND_DIRECT, False, 0x40),
    ]
    stats = trace_stats(events)
    assert stats.unique_pcs == 2
    assert stats.unique_taken_pcs == 1
