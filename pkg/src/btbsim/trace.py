"""Branch trace format, synthetic workload generator, and trace statistics.

A trace carries branch instructions only.  Each record stores the number of
non-branch instructions executed since the previous branch (the ``gap``), so
the full dynamic instruction stream is recoverable for queue-occupancy and
width accounting without storing every instruction.

Two on-disk encodings are supported:

* ``.btr`` -- binary: 8-byte magic ``BTBTRC01`` followed by little-endian
  24-byte records: pc (8 bytes, upper 7 bits zero), target (8 bytes, upper
  7 bits zero), gap (4 bytes), kind (1 byte), taken (1 byte), 2 reserved
  zero bytes.
* ``.btt`` -- text: one event per line, ``<hex pc> <gap> <kind> <T|N>
  <hex target>``.
"""

import enum
import io
import random
import struct
from dataclasses import dataclass, field

ADDR_BITS = 57
ADDR_MASK = (1 << ADDR_BITS) - 1
GAP_MAX = (1 << 32) - 1

MAGIC = b"BTBTRC01"
_RECORD = struct.Struct("<QQIBB2x")

# Return addresses assume fixed-size instructions: a call at pc returns
# to pc + INSTR_BYTES.
INSTR_BYTES = 4


class TraceError(Exception):
    """Malformed trace stream or record."""


class InfeasibleSpecError(ValueError):
    """A SyntheticSpec that cannot be realized (e.g. returns without calls)."""


class BranchKind(enum.IntEnum):
    COND_DIRECT = 0
    UNCOND_DIRECT = 1
    DIRECT_CALL = 2
    INDIRECT_JUMP = 3
    INDIRECT_CALL = 4
    RETURN = 5

    @property
    def is_call(self):
        return self in (BranchKind.DIRECT_CALL, BranchKind.INDIRECT_CALL)

    @property
    def is_indirect(self):
        return self in (BranchKind.INDIRECT_JUMP, BranchKind.INDIRECT_CALL)

    @property
    def decode_resolved(self):
        """Target becomes known at decode.

        Indirect branches resolve at execute; returns resolve at decode only
        when the return address stack supplies the right target.
        """
        return self in (
            BranchKind.COND_DIRECT,
            BranchKind.UNCOND_DIRECT,
            BranchKind.DIRECT_CALL,
        )


KIND_NAMES = {
    BranchKind.COND_DIRECT: "conditional",
    BranchKind.UNCOND_DIRECT: "jump",
    BranchKind.DIRECT_CALL: "call",
    BranchKind.INDIRECT_JUMP: "ijump",
    BranchKind.INDIRECT_CALL: "icall",
    BranchKind.RETURN: "return",
}
KINDS_BY_NAME = {v: k for k, v in KIND_NAMES.items()}


@dataclass(frozen=True)
class TraceEvent:
    """One dynamic branch instance.

    gap counts the non-branch instructions executed since the previous
    branch.  taken is True for every kind except COND_DIRECT, where it
    carries the ground-truth direction.
    """

    pc: int
    gap: int
    kind: BranchKind
    taken: bool
    target: int

    def validate(self):
        if not 0 <= self.pc <= ADDR_MASK:
            raise TraceError(f"pc 0x{self.pc:x} out of {ADDR_BITS}-bit range")
        if not 0 <= self.target <= ADDR_MASK:
            raise TraceError(f"target 0x{self.target:x} out of {ADDR_BITS}-bit range")
        if not 0 <= self.gap <= GAP_MAX:
            raise TraceError(f"gap {self.gap} out of 32-bit range")
        if self.kind != BranchKind.COND_DIRECT and not self.taken:
            raise TraceError(f"{KIND_NAMES[self.kind]} events must be taken")


def offset_width(pc, target):
    """Magnitude bits needed for |target - pc|; a self-branch counts as 1."""
    return max(1, abs(target - pc).bit_length())


# ---------------------------------------------------------------------------
# binary / text encodings


def write_trace(events, stream):
    stream.write(MAGIC)
    for ev in events:
        ev.validate()
        stream.write(_RECORD.pack(ev.pc, ev.target, ev.gap, int(ev.kind), int(ev.taken)))


def read_trace(stream):
    head = stream.read(len(MAGIC))
    if head != MAGIC:
        raise TraceError(f"bad magic {head!r}, expected {MAGIC!r}")
    events = []
    while True:
        raw = stream.read(_RECORD.size)
        if not raw:
            break
        if len(raw) != _RECORD.size:
            raise TraceError(f"truncated record at event {len(events)}")
        pc, target, gap, kind_code, taken = _RECORD.unpack(raw)
        if pc > ADDR_MASK or target > ADDR_MASK:
            raise TraceError(f"address out of range at event {len(events)}")
        if kind_code > 5:
            raise TraceError(f"unknown kind code {kind_code} at event {len(events)}")
        events.append(TraceEvent(pc, gap, BranchKind(kind_code), bool(taken), target))
    return events


def write_trace_text(events, stream):
    for ev in events:
        ev.validate()
        stream.write(
            f"0x{ev.pc:x} {ev.gap} {KIND_NAMES[ev.kind]} "
            f"{'T' if ev.taken else 'N'} 0x{ev.target:x}\n"
        )


def read_trace_text(stream):
    events = []
    for lineno, line in enumerate(stream, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise TraceError(f"line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            pc = int(parts[0], 16)
            gap = int(parts[1])
            kind = KINDS_BY_NAME[parts[2]]
            taken = {"T": True, "N": False}[parts[3]]
            target = int(parts[4], 16)
        except (ValueError, KeyError) as exc:
            raise TraceError(f"line {lineno}: {exc}") from exc
        ev = TraceEvent(pc, gap, kind, taken, target)
        ev.validate()
        events.append(ev)
    return events


def save_trace(events, path):
    path = str(path)
    if path.endswith(".btt"):
        with open(path, "w") as fh:
            write_trace_text(events, fh)
    else:
        with open(path, "wb") as fh:
            write_trace(events, fh)


def load_trace(path):
    path = str(path)
    if path.endswith(".btt"):
        with open(path) as fh:
            return read_trace_text(fh)
    with open(path, "rb") as fh:
        return read_trace(fh)


def trace_bytes(events):
    buf = io.BytesIO()
    write_trace(events, buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# synthetic workloads


@dataclass
class SyntheticSpec:
    """Parameters for a reproducible synthetic branch workload.

    kind_mix maps BranchKind to a non-negative weight; offset_bits_histogram
    maps magnitude bit-widths (1..57) to weights.  Call and return weights
    should roughly match; returns are only ever emitted to close an open
    call, so the realized return fraction tracks the call fraction.
    """

    static_branch_count: int
    kind_mix: dict
    offset_bits_histogram: dict
    event_count: int
    seed: int
    call_depth_max: int = 8
    indirect_target_fanout: int = 4
    taken_rate: float = 0.6
    gap_max: int = 10

    def validate(self):
        if self.static_branch_count <= 0:
            raise InfeasibleSpecError("static_branch_count must be positive")
        if self.event_count <= 0:
            raise InfeasibleSpecError("event_count must be positive")
        if self.call_depth_max <= 0 or self.indirect_target_fanout <= 0:
            raise InfeasibleSpecError("depth and fanout must be positive")
        if any(w < 0 for w in self.kind_mix.values()) or not any(
            w > 0 for w in self.kind_mix.values()
        ):
            raise InfeasibleSpecError("kind_mix needs non-negative weights, one positive")
        for width, w in self.offset_bits_histogram.items():
            if not 1 <= width <= ADDR_BITS:
                raise InfeasibleSpecError(f"offset width {width} outside 1..{ADDR_BITS}")
            if w < 0:
                raise InfeasibleSpecError("offset weights must be non-negative")
        if not any(w > 0 for w in self.offset_bits_histogram.values()):
            raise InfeasibleSpecError("offset_bits_histogram needs a positive weight")
        ret_w = self.kind_mix.get(BranchKind.RETURN, 0.0)
        call_w = self.kind_mix.get(BranchKind.DIRECT_CALL, 0.0) + self.kind_mix.get(
            BranchKind.INDIRECT_CALL, 0.0
        )
        if ret_w > 0 and call_w == 0:
            raise InfeasibleSpecError("return weight positive but call weight zero")


def _apportion(total, weights, costs=None):
    """Largest-remainder split of `total` cost units across weight keys.

    costs[k] is the units one instance of k consumes (default 1 each).
    Deterministic: ties break on repr(key).
    """
    costs = costs or {k: 1 for k in weights}
    denom = sum(w * costs[k] for k, w in weights.items())
    shares = {k: total * w / denom for k, w in weights.items()}
    counts = {k: int(s) for k, s in shares.items()}
    left = total - sum(counts[k] * costs[k] for k in counts)
    while left > 0:
        order = sorted(
            (k for k in weights if costs[k] <= left),
            key=lambda k: (counts[k] - shares[k], repr(k)),
        )
        if not order:
            break
        counts[order[0]] += 1
        left -= costs[order[0]]
    return counts


@dataclass
class _StaticBranch:
    pc: int
    kind: BranchKind
    targets: list  # direct kinds: one; indirect: fanout alternatives
    return_pc: int = 0  # calls only: pc of the matching return branch


def _pick_delta(rng, width):
    """A magnitude needing exactly `width` bits."""
    if width == 1:
        return 1
    return rng.randrange(1 << (width - 1), 1 << width)


def gen_synthetic(spec):
    """Generate a deterministic branch trace matching `spec`.

    Static branches are laid out with offsets drawn from the requested
    histogram.  Each call site owns a private callee whose single return
    branch is positioned so that the return offset also follows the
    histogram; calls nest up to call_depth_max and every call is closed
    before the trace ends.
    """
    spec.validate()
    rng = random.Random(spec.seed)

    # Returns are never free-standing: each call site owns one return branch,
    # so a call costs two static pcs and the return weight only shapes the
    # dynamic schedule below.
    static_mix = {
        k: w for k, w in spec.kind_mix.items() if k != BranchKind.RETURN and w > 0
    }
    costs = {k: 2 if k.is_call else 1 for k in static_mix}
    kind_counts = _apportion(spec.static_branch_count, static_mix, costs)
    ncalls = kind_counts.get(BranchKind.DIRECT_CALL, 0) + kind_counts.get(
        BranchKind.INDIRECT_CALL, 0
    )

    n_offsets = ncalls  # one offset per return branch
    for kind, n in kind_counts.items():
        n_offsets += n * (spec.indirect_target_fanout if kind.is_indirect else 1)
    width_pool = []
    for width, n in _apportion(n_offsets, spec.offset_bits_histogram).items():
        width_pool.extend([width] * n)
    rng.shuffle(width_pool)
    widths = iter(width_pool)

    def next_width():
        try:
            return next(widths)
        except StopIteration:
            return rng.choice(list(spec.offset_bits_histogram))

    used_pcs = set()

    def fresh_pc():
        while True:
            pc = rng.getrandbits(ADDR_BITS - 9) << 2  # headroom for +/- deltas
            if pc not in used_pcs:
                used_pcs.add(pc)
                return pc

    def offset_from(anchor):
        """anchor +/- a freshly sampled delta, kept inside the address space."""
        delta = _pick_delta(rng, next_width())
        down_ok = delta <= anchor
        up_ok = anchor + delta <= ADDR_MASK
        if down_ok and up_ok:
            return anchor - delta if rng.random() < 0.5 else anchor + delta
        if down_ok:
            return anchor - delta
        if up_ok:
            return anchor + delta
        return ADDR_MASK  # widest reachable point keeps the top bucket

    pools = {k: [] for k in BranchKind}
    for kind in sorted(kind_counts, key=int):
        fanout = spec.indirect_target_fanout if kind.is_indirect else 1
        for _ in range(kind_counts[kind]):
            pc = fresh_pc()
            targets = [offset_from(pc) for _ in range(fanout)]
            br = _StaticBranch(pc, kind, targets)
            if kind.is_call:
                # one callee per call site: the return target is fixed, so
                # the return branch pc is placed to hit a sampled width
                ret_target = pc + INSTR_BYTES
                rpc = offset_from(ret_target)
                while rpc in used_pcs:
                    rpc = (rpc + 2) % (ADDR_MASK + 1)
                used_pcs.add(rpc)
                br.return_pc = rpc
            pools[kind].append(br)

    emit_kinds = sorted((k for k, n in kind_counts.items() if n > 0), key=int)
    emit_weights = [spec.kind_mix[k] for k in emit_kinds]
    ret_weight = spec.kind_mix.get(BranchKind.RETURN, 0.0)
    total_weight = sum(emit_weights) + ret_weight

    events = []
    call_stack = []  # (call pc, return branch)

    def emit(pc, kind, taken, target):
        events.append(
            TraceEvent(pc, rng.randrange(spec.gap_max + 1), kind, taken, target)
        )

    def emit_return():
        call_pc, ret_br = call_stack.pop()
        emit(ret_br.return_pc, BranchKind.RETURN, True, call_pc + INSTR_BYTES)

    while len(events) < spec.event_count:
        remaining = spec.event_count - len(events)
        if remaining <= len(call_stack):
            # close every open call before the budget runs out
            emit_return()
            continue
        r = rng.random() * total_weight
        if call_stack and r < ret_weight:
            emit_return()
            continue
        kind = rng.choices(emit_kinds, weights=emit_weights)[0]
        if kind.is_call and (
            len(call_stack) >= spec.call_depth_max
            or remaining <= len(call_stack) + 1
        ):
            kind = BranchKind.COND_DIRECT if pools[BranchKind.COND_DIRECT] else kind
            if kind.is_call:
                continue
        pool = pools[kind]
        if not pool:
            continue
        br = pool[rng.randrange(len(pool))]
        if kind.is_indirect:
            target = br.targets[rng.randrange(len(br.targets))]
        else:
            target = br.targets[0]
        if kind == BranchKind.COND_DIRECT:
            emit(br.pc, kind, rng.random() < spec.taken_rate, target)
        else:
            emit(br.pc, kind, True, target)
            if kind.is_call:
                call_stack.append((br.pc, br))
    return events


# ---------------------------------------------------------------------------
# statistics


@dataclass
class TraceStats:
    event_count: int = 0
    kind_counts: dict = field(default_factory=dict)
    unique_pcs: int = 0
    unique_taken_pcs: int = 0
    # kind -> {width -> dynamic count}
    offset_hist: dict = field(default_factory=dict)

    def total_offset_hist(self):
        total = {}
        for hist in self.offset_hist.values():
            for width, n in hist.items():
                total[width] = total.get(width, 0) + n
        return total


def trace_stats(events):
    stats = TraceStats()
    pcs = set()
    taken_pcs = set()
    for ev in events:
        stats.event_count += 1
        stats.kind_counts[ev.kind] = stats.kind_counts.get(ev.kind, 0) + 1
        pcs.add(ev.pc)
        if ev.taken:
            taken_pcs.add(ev.pc)
        width = offset_width(ev.pc, ev.target)
        hist = stats.offset_hist.setdefault(ev.kind, {})
        hist[width] = hist.get(width, 0) + 1
    stats.unique_pcs = len(pcs)
    stats.unique_taken_pcs = len(taken_pcs)
    return stats


def tv_distance(hist_a, hist_b):
    """Total-variation distance between two weight dicts (normalized)."""
    sa = sum(hist_a.values())
    sb = sum(hist_b.values())
    if sa == 0 or sb == 0:
        return 1.0 if sa != sb else 0.0
    keys = set(hist_a) | set(hist_b)
    return 0.5 * sum(
        abs(hist_a.get(k, 0) / sa - hist_b.get(k, 0) / sb) for k in keys
    )
