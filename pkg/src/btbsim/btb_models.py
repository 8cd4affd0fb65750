"""Branch-target-buffer organizations behind one lookup/insert/update interface.

Five organizations are modeled:

* ``MicroBtb`` -- four direct-mapped banks addressed through a per-bank
  skewing function, with multi-branch compressed entries (offset-coded
  targets) next to uncompressed single-branch entries.
* ``BaselineBtb`` -- classic set-associative BTB with true LRU.
* ``SkewedBtb`` -- per-way skewed indexing with random replacement.
* ``FdipXBtb`` -- several BTB tables partitioned by target-offset width.
* ``IdealBtb`` -- unbounded map; a branch can only miss before its first
  insert.

Entries keep a shadow ``owner`` pc so callers can tell a genuine hit from
a tag alias (false hit); the shadow is bookkeeping only and is excluded
from storage accounting.
"""

from dataclasses import dataclass, field

from .trace import ADDR_BITS, ADDR_MASK, BranchKind

M64 = (1 << 64) - 1
TAG28_MASK = (1 << 28) - 1

# Shared 2-bit entry type code.  Direct jumps and calls predict identically
# (fixed target); likewise indirect jumps and calls; returns are flagged so
# the front end can source the target from its return-address stack.
KC_COND = 0
KC_DIRECT = 1
KC_INDIRECT = 2
KC_RETURN = 3

KIND_CODE = {
    BranchKind.COND_DIRECT: KC_COND,
    BranchKind.UNCOND_DIRECT: KC_DIRECT,
    BranchKind.DIRECT_CALL: KC_DIRECT,
    BranchKind.INDIRECT_JUMP: KC_INDIRECT,
    BranchKind.INDIRECT_CALL: KC_INDIRECT,
    BranchKind.RETURN: KC_RETURN,
}


class Xorshift64Star:
    """xorshift64* generator; all replacement randomness flows from here."""

    __slots__ = ("state",)

    def __init__(self, seed):
        self.state = (seed & M64) or 0x9E3779B97F4A7C15

    def next(self):
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & M64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & M64

    def below(self, n):
        return self.next() % n


# ---------------------------------------------------------------------------
# offset coding and index functions


def empty_field(w):
    """The EMPTY half sentinel: direction=backward, magnitude=0."""
    return 1 << w


def encode_offset(pc, target, w):
    """Pack target-pc into a (w+1)-bit field: direction bit then magnitude.

    Returns None when |target - pc| needs more than w magnitude bits.  A
    zero delta encodes as forward so the result is never the EMPTY sentinel.
    """
    delta = target - pc
    mag = abs(delta)
    if mag >= 1 << w:
        return None
    return ((1 << w) | mag) if delta < 0 else mag


def decode_target(pc, enc, w):
    mag = enc & ((1 << w) - 1)
    assert enc != empty_field(w), "EMPTY sentinel is not a branch"
    if enc >> w:
        return (pc - mag) & ADDR_MASK
    return (pc + mag) & ADDR_MASK


def _rotl(v, r, s):
    r %= s
    if r == 0:
        return v
    mask = (1 << s) - 1
    return ((v << r) | (v >> (s - r))) & mask


def skew_index(pc, bank, s):
    """Per-bank set index from three s-bit slices of the pc.

    bank 0 degenerates to plain modulo indexing of the xor-folded pc; higher
    banks rotate the upper slices so same-set conflicts in one bank spread
    across sets in the others.
    """
    mask = (1 << s) - 1
    x1 = pc & mask
    x2 = (pc >> s) & mask
    x3 = (pc >> (2 * s)) & mask
    return x1 ^ _rotl(x2, bank, s) ^ _rotl(x3, (2 * bank) % s, s)


def tag_lower28(pc):
    return pc & TAG28_MASK


@dataclass(frozen=True)
class LookupResult:
    hit: bool
    target: int = 0
    kind_code: int = 0
    is_return: bool = False
    owner: int = 0  # shadow pc of the resident branch; alias when != probe pc


MISS = LookupResult(False)


@dataclass
class EvictionReport:
    """Branches displaced by one insert (shadow pcs)."""

    displaced: list = field(default_factory=list)

    @property
    def count(self):
        return len(self.displaced)


# ---------------------------------------------------------------------------
# MicroBtb

# compressed variant id -> (slots per entry, magnitude bits per offset field,
# tag chunk bits).  Variant 0 is the uncompressed single-branch form.
VARIANT_SHAPES = {1: (2, 15, 28), 2: (4, 7, 14), 3: (8, 3, 7)}


class MbtbEntry:
    """One bank entry: either a full-target branch or compressed co-residents.

    Offset fields hold (w+1)-bit values; empty_field(w) marks a free half.
    owners mirrors the occupied slots for alias detection.
    """

    __slots__ = ("variant", "kind_code", "tags", "fields", "target", "owners")

    def __init__(self, variant, kind_code):
        self.variant = variant
        self.kind_code = kind_code
        if variant == 0:
            self.tags = [0]
            self.fields = None
            self.target = 0
            self.owners = [0]
        else:
            slots, w, _ = VARIANT_SHAPES[variant]
            self.tags = [0] * slots
            self.fields = [empty_field(w)] * slots
            self.target = None
            self.owners = [0] * slots

    def occupied_slots(self):
        if self.variant == 0:
            return [0]
        w = VARIANT_SHAPES[self.variant][1]
        sentinel = empty_field(w)
        return [i for i, f in enumerate(self.fields) if f != sentinel]

    def empty_slot(self):
        w = VARIANT_SHAPES[self.variant][1]
        sentinel = empty_field(w)
        for i, f in enumerate(self.fields):
            if f == sentinel:
                return i
        return None


@dataclass
class MbtbCensus:
    entries_occupied: int
    branches_resident: int
    by_variant: dict


class MicroBtb:
    """Four direct-mapped skewed banks of compressed multi-branch entries.

    variant_mode selects how many entry forms exist: 2 (uncompressed +
    2-branch), 3 (adds 4-branch), or 4 (adds 8-branch).  The skewed and
    compress switches isolate each mechanism: skewed=False indexes every
    bank with the same low pc bits, compress=False stores every branch
    uncompressed.
    """

    BANKS = 4

    def __init__(
        self,
        sets_per_bank=1024,
        variant_mode=2,
        skewed=True,
        compress=True,
        seed=1,
        access_latency=2,
    ):
        if sets_per_bank & (sets_per_bank - 1):
            raise ValueError("sets_per_bank must be a power of two")
        if variant_mode not in (2, 3, 4):
            raise ValueError("variant_mode must be 2, 3, or 4")
        self.sets = sets_per_bank
        self.s = sets_per_bank.bit_length() - 1
        if 3 * self.s > ADDR_BITS:
            raise ValueError("index width too large for the address space")
        self.variant_mode = variant_mode
        self.skewed = skewed
        self.compress = compress
        self.access_latency = access_latency
        self.rng = Xorshift64Star(seed)
        self.banks = [[None] * self.sets for _ in range(self.BANKS)]

    @property
    def entries(self):
        return self.BANKS * self.sets

    def storage_bits(self):
        # 56 tag + 32 offset + 2 kind bits, plus 1 variant bit in 2-variant
        # mode and 2 in the larger modes
        per_entry = 91 if self.variant_mode == 2 else 92
        return self.entries * per_entry

    def _index(self, pc, bank):
        if self.skewed:
            return skew_index(pc, bank, self.s)
        return pc & (self.sets - 1)

    def _candidates(self, pc):
        return [(b, self._index(pc, b)) for b in range(self.BANKS)]

    def _chunk(self, pc, variant):
        if variant == 0:
            return tag_lower28(pc)
        return tag_lower28(pc) & ((1 << VARIANT_SHAPES[variant][2]) - 1)

    def _find(self, pc):
        """First (bank, set, entry, slot) whose tag matches, else None."""
        for bank, idx in self._candidates(pc):
            e = self.banks[bank][idx]
            if e is None:
                continue
            if e.variant == 0:
                if e.tags[0] == tag_lower28(pc):
                    return bank, idx, e, 0
                continue
            chunk = self._chunk(pc, e.variant)
            for i in e.occupied_slots():
                if e.tags[i] == chunk:
                    return bank, idx, e, i
        return None

    def _choose_variant(self, pc, target, kind_code):
        if not self.compress:
            return 0
        allowed = range(1, self.variant_mode)  # mode 2 -> {1}, mode 4 -> {1,2,3}
        if kind_code == KC_RETURN:
            # returns carry no stored target, so pack them densest
            return max(allowed)
        mag = abs(target - pc)
        best = 0
        for v in allowed:  # ascending id = descending width; keep smallest fit
            if mag < 1 << VARIANT_SHAPES[v][1]:
                best = v
        return best

    def _fill_slot(self, entry, slot, pc, target, kind_code):
        if entry.variant == 0:
            entry.tags[0] = tag_lower28(pc)
            entry.target = target
            entry.owners[0] = pc
            return
        w = VARIANT_SHAPES[entry.variant][1]
        if kind_code == KC_RETURN:
            enc = 0  # placeholder offset; lookups answer IsReturn instead
        else:
            enc = encode_offset(pc, target, w)
            assert enc is not None, "variant chosen without room for the offset"
        entry.tags[slot] = self._chunk(pc, entry.variant)
        entry.fields[slot] = enc
        entry.owners[slot] = pc

    def lookup(self, pc):
        found = self._find(pc)
        if found is None:
            return MISS
        _, _, e, slot = found
        if e.kind_code == KC_RETURN:
            return LookupResult(True, 0, e.kind_code, True, e.owners[slot])
        if e.variant == 0:
            target = e.target
        else:
            target = decode_target(pc, e.fields[slot], VARIANT_SHAPES[e.variant][1])
        return LookupResult(True, target, e.kind_code, False, e.owners[slot])

    def insert(self, pc, target, kind):
        kind_code = KIND_CODE[kind]
        found = self._find(pc)
        if found is not None:
            return self._update_resident(found, pc, target)
        return self._place(pc, target, kind_code)

    def _place(self, pc, target, kind_code, force_variant=None):
        cv = force_variant if force_variant is not None else self._choose_variant(
            pc, target, kind_code
        )
        cands = self._candidates(pc)
        if cv > 0:
            for bank, idx in cands:
                e = self.banks[bank][idx]
                if (
                    e is not None
                    and e.variant == cv
                    and e.kind_code == kind_code
                    and e.empty_slot() is not None
                ):
                    self._fill_slot(e, e.empty_slot(), pc, target, kind_code)
                    return EvictionReport()
        for bank, idx in cands:
            if self.banks[bank][idx] is None:
                fresh = MbtbEntry(cv, kind_code)
                self._fill_slot(fresh, 0, pc, target, kind_code)
                self.banks[bank][idx] = fresh
                return EvictionReport()
        bank, idx = cands[self.rng.below(self.BANKS)]
        victim = self.banks[bank][idx]
        displaced = [victim.owners[i] for i in victim.occupied_slots()]
        fresh = MbtbEntry(cv, kind_code)
        self._fill_slot(fresh, 0, pc, target, kind_code)
        self.banks[bank][idx] = fresh
        return EvictionReport(displaced)

    def _update_resident(self, found, pc, target):
        bank, idx, e, slot = found
        if e.kind_code == KC_RETURN:
            return EvictionReport()  # target lives on the RAS, nothing stored
        if e.variant == 0:
            e.target = target
            e.owners[slot] = pc
            return EvictionReport()
        w = VARIANT_SHAPES[e.variant][1]
        enc = encode_offset(pc, target, w)
        if enc is not None:
            e.fields[slot] = enc
            e.owners[slot] = pc
            return EvictionReport()
        # outgrew the resident width: drop this half, keep co-residents,
        # and reinsert uncompressed
        if len(e.occupied_slots()) == 1:
            self.banks[bank][idx] = None
        else:
            e.fields[slot] = empty_field(w)
            e.owners[slot] = 0
        kind_code = e.kind_code
        return self._place(pc, target, kind_code, force_variant=0)

    def update(self, pc, target):
        found = self._find(pc)
        if found is None:
            raise LookupError(f"update for pc 0x{pc:x} which does not hit")
        return self._update_resident(found, pc, target)

    def census(self):
        by_variant = {}
        branches = 0
        occupied = 0
        for bank in self.banks:
            for e in bank:
                if e is None:
                    continue
                occupied += 1
                n = len(e.occupied_slots())
                branches += n
                by_variant[e.variant] = by_variant.get(e.variant, 0) + 1
        return MbtbCensus(occupied, branches, by_variant)

    def resident_branches(self):
        return self.census().branches_resident


# ---------------------------------------------------------------------------
# conventional organizations


class _FullEntry:
    __slots__ = ("tag", "target", "kind_code", "owner")

    def __init__(self, tag, target, kind_code, owner):
        self.tag = tag
        self.target = target
        self.kind_code = kind_code
        self.owner = owner


def _full_result(entry):
    if entry.kind_code == KC_RETURN:
        return LookupResult(True, 0, KC_RETURN, True, entry.owner)
    return LookupResult(True, entry.target, entry.kind_code, False, entry.owner)


class BaselineBtb:
    """Set-associative BTB, true LRU, 32-bit tag above the index bits.

    Indexing is modulo so set counts need not be powers of two (the sweep
    includes capacities like 6144 entries).
    """

    BITS_PER_ENTRY = 93  # 32 tag + 57 target + 2 kind + 2 LRU

    def __init__(self, sets=2048, ways=4, seed=1, access_latency=2):
        if sets < 1 or ways < 1:
            raise ValueError("sets and ways must be positive")
        self.sets = sets
        self.ways = ways
        self.access_latency = access_latency
        self.table = [[] for _ in range(sets)]  # per set, most recent first

    def _tag(self, pc):
        return (pc // self.sets) & 0xFFFFFFFF

    def lookup(self, pc):
        ways = self.table[pc % self.sets]
        tag = self._tag(pc)
        for i, e in enumerate(ways):
            if e.tag == tag:
                ways.insert(0, ways.pop(i))
                return _full_result(e)
        return MISS

    def insert(self, pc, target, kind):
        ways = self.table[pc % self.sets]
        tag = self._tag(pc)
        for i, e in enumerate(ways):
            if e.tag == tag:
                e.target = target
                e.kind_code = KIND_CODE[kind]
                e.owner = pc
                ways.insert(0, ways.pop(i))
                return EvictionReport()
        e = _FullEntry(tag, target, KIND_CODE[kind], pc)
        ways.insert(0, e)
        if len(ways) > self.ways:
            victim = ways.pop()
            return EvictionReport([victim.owner])
        return EvictionReport()

    def update(self, pc, target):
        ways = self.table[pc % self.sets]
        tag = self._tag(pc)
        for e in ways:
            if e.tag == tag:
                e.target = target
                e.owner = pc
                return EvictionReport()
        raise LookupError(f"update for pc 0x{pc:x} which does not hit")

    def storage_bits(self):
        return self.sets * self.ways * self.BITS_PER_ENTRY

    def resident_branches(self):
        return sum(len(ways) for ways in self.table)


class SkewedBtb:
    """Per-way skewed BTB: way w is a direct-mapped bank indexed by
    skew_index(pc, w, s); random replacement across ways."""

    BITS_PER_ENTRY = 91  # 32 tag + 57 target + 2 kind

    def __init__(self, sets=2048, ways=4, seed=1, access_latency=2):
        if sets & (sets - 1):
            raise ValueError("sets must be a power of two")
        self.sets = sets
        self.ways = ways
        self.s = sets.bit_length() - 1
        self.access_latency = access_latency
        self.rng = Xorshift64Star(seed)
        self.table = [[None] * sets for _ in range(ways)]

    def _tag(self, pc):
        return (pc >> self.s) & 0xFFFFFFFF

    def _slots(self, pc):
        return [(w, skew_index(pc, w, self.s)) for w in range(self.ways)]

    def lookup(self, pc):
        tag = self._tag(pc)
        for w, idx in self._slots(pc):
            e = self.table[w][idx]
            if e is not None and e.tag == tag:
                return _full_result(e)
        return MISS

    def insert(self, pc, target, kind):
        tag = self._tag(pc)
        slots = self._slots(pc)
        for w, idx in slots:
            e = self.table[w][idx]
            if e is not None and e.tag == tag:
                e.target = target
                e.kind_code = KIND_CODE[kind]
                e.owner = pc
                return EvictionReport()
        for w, idx in slots:
            if self.table[w][idx] is None:
                self.table[w][idx] = _FullEntry(tag, target, KIND_CODE[kind], pc)
                return EvictionReport()
        w, idx = slots[self.rng.below(self.ways)]
        victim = self.table[w][idx]
        self.table[w][idx] = _FullEntry(tag, target, KIND_CODE[kind], pc)
        return EvictionReport([victim.owner])

    def update(self, pc, target):
        tag = self._tag(pc)
        for w, idx in self._slots(pc):
            e = self.table[w][idx]
            if e is not None and e.tag == tag:
                e.target = target
                e.owner = pc
                return EvictionReport()
        raise LookupError(f"update for pc 0x{pc:x} which does not hit")

    def storage_bits(self):
        return self.sets * self.ways * self.BITS_PER_ENTRY

    def resident_branches(self):
        return sum(1 for bank in self.table for e in bank if e is not None)


class _OffsetEntry:
    __slots__ = ("tag", "enc", "target", "kind_code", "owner")

    def __init__(self, tag, enc, target, kind_code, owner):
        self.tag = tag
        self.enc = enc  # offset field, or None in the full-target table
        self.target = target
        self.kind_code = kind_code
        self.owner = owner


# (entries, offset field bits, bits per entry); the last table stores a
# full 57-bit target and takes every branch the narrower tables cannot
FDIPX_DEFAULT_TABLES = ((6144, 8, 29), (6144, 13, 34), (6144, 23, 44), (896, 57, 77))


class FdipXBtb:
    """Multiple BTB tables partitioned by offset width, 4-way LRU each.

    A branch lives in the smallest table whose offset field holds its
    target delta (one bit of the field is the direction); the widest table
    stores the full target and has no width limit.

    Storage note: summing the default tables gives 726,400 bits (88.67 KB).
    Quoted totals of 66.92 KB for this arrangement imply narrower tag or
    offset fields than the per-table parameters support, so storage_bits
    reports the computed figure rather than the quoted one.
    """

    WAYS = 4

    def __init__(self, tables=FDIPX_DEFAULT_TABLES, seed=1, access_latency=2):
        self.spec = list(tables)
        self.access_latency = access_latency
        self.tables = []
        for entries, _, _ in self.spec:
            if entries % self.WAYS:
                raise ValueError("table entries must divide evenly into ways")
            self.tables.append([[] for _ in range(entries // self.WAYS)])

    def _geometry(self, t):
        entries, offset_bits, bits_per_entry = self.spec[t]
        sets = entries // self.WAYS
        # whatever the offset and bookkeeping bits leave behind is tag
        tag_bits = bits_per_entry - offset_bits - 4  # 2 kind + 2 LRU
        return sets, offset_bits, tag_bits

    def _addr(self, pc, t):
        sets, _, tag_bits = self._geometry(t)
        return pc % sets, (pc // sets) & ((1 << tag_bits) - 1)

    def _class_for(self, pc, target):
        mag = abs(target - pc)
        for t in range(len(self.spec) - 1):
            _, offset_bits, _ = self._geometry(t)
            if mag < 1 << (offset_bits - 1):  # one field bit is the direction
                return t
        return len(self.spec) - 1

    def _result(self, pc, t, e):
        if e.kind_code == KC_RETURN:
            return LookupResult(True, 0, KC_RETURN, True, e.owner)
        if e.enc is None:
            return LookupResult(True, e.target, e.kind_code, False, e.owner)
        w = self._geometry(t)[1] - 1
        return LookupResult(True, decode_target(pc, e.enc, w), e.kind_code, False, e.owner)

    def _find(self, pc):
        for t in range(len(self.spec)):
            idx, tag = self._addr(pc, t)
            ways = self.tables[t][idx]
            for i, e in enumerate(ways):
                if e.tag == tag:
                    return t, idx, i
        return None

    def lookup(self, pc):
        found = self._find(pc)
        if found is None:
            return MISS
        t, idx, i = found
        ways = self.tables[t][idx]
        e = ways[i]
        ways.insert(0, ways.pop(i))
        return self._result(pc, t, e)

    def insert(self, pc, target, kind):
        found = self._find(pc)
        t = self._class_for(pc, target)
        if found is not None:
            old_t, idx, i = found
            if old_t == t:
                ways = self.tables[t][idx]
                e = ways.pop(i)
                self._write(e, pc, target, kind, t)
                ways.insert(0, e)
                return EvictionReport()
            self.tables[old_t][idx].pop(i)  # width changed: move tables
        return self._alloc(pc, target, kind, t)

    def _write(self, e, pc, target, kind, t):
        _, offset_bits, _ = self._geometry(t)
        if t == len(self.spec) - 1:
            e.enc = None
            e.target = target
        else:
            e.enc = encode_offset(pc, target, offset_bits - 1)
            e.target = 0
        e.kind_code = KIND_CODE[kind]
        e.owner = pc

    def _alloc(self, pc, target, kind, t):
        idx, tag = self._addr(pc, t)
        e = _OffsetEntry(tag, None, 0, 0, 0)
        self._write(e, pc, target, kind, t)
        ways = self.tables[t][idx]
        ways.insert(0, e)
        if len(ways) > self.WAYS:
            victim = ways.pop()
            return EvictionReport([victim.owner])
        return EvictionReport()

    def update(self, pc, target):
        found = self._find(pc)
        if found is None:
            raise LookupError(f"update for pc 0x{pc:x} which does not hit")
        t, idx, i = found
        e = self.tables[t][idx][i]
        return self.insert(pc, target, _kind_from_code(e.kind_code))

    def storage_bits(self):
        return sum(entries * bits for entries, _, bits in self.spec)

    def resident_branches(self):
        return sum(len(ways) for table in self.tables for ways in table)


def _kind_from_code(code):
    return {
        KC_COND: BranchKind.COND_DIRECT,
        KC_DIRECT: BranchKind.UNCOND_DIRECT,
        KC_INDIRECT: BranchKind.INDIRECT_JUMP,
        KC_RETURN: BranchKind.RETURN,
    }[code]


class IdealBtb:
    """Unbounded BTB: a branch misses only before its first insert."""

    def __init__(self, seed=1, access_latency=2):
        self.access_latency = access_latency
        self.table = {}

    def lookup(self, pc):
        e = self.table.get(pc)
        if e is None:
            return MISS
        target, kind_code = e
        if kind_code == KC_RETURN:
            return LookupResult(True, 0, KC_RETURN, True, pc)
        return LookupResult(True, target, kind_code, False, pc)

    def insert(self, pc, target, kind):
        self.table[pc] = (target, KIND_CODE[kind])
        return EvictionReport()

    def update(self, pc, target):
        if pc not in self.table:
            raise LookupError(f"update for pc 0x{pc:x} which does not hit")
        self.table[pc] = (target, self.table[pc][1])
        return EvictionReport()

    def storage_bits(self):
        return 0

    def resident_branches(self):
        return len(self.table)


# ---------------------------------------------------------------------------
# spec-style operation aliases and the organization factory


def mbtb_lookup(state, pc):
    return state.lookup(pc)


def mbtb_insert(state, pc, target, kind, rng=None):
    return state.insert(pc, target, kind)


def mbtb_update_indirect(state, pc, new_target, rng=None):
    return state.update(pc, new_target)


def storage_bits(org):
    return org.storage_bits()


def storage_kb(org):
    return org.storage_bits() / 8 / 1024


ORG_BUILDERS = {
    "baseline": BaselineBtb,
    "skewed": SkewedBtb,
    "mbtb": MicroBtb,
    "fdipx": FdipXBtb,
    "ideal": IdealBtb,
}


def make_org(name, **params):
    try:
        builder = ORG_BUILDERS[name]
    except KeyError:
        raise ValueError(
            f"unknown organization {name!r}; expected one of {sorted(ORG_BUILDERS)}"
        ) from None
    return builder(**params)
