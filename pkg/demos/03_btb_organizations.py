# Side-by-side look at the BTB organizations: what they cost in bits and
# how many taken branches each loses on the same trace.

from btbsim.btb_models import (
    BaselineBtb,
    FdipXBtb,
    IdealBtb,
    MicroBtb,
    SkewedBtb,
)
from btbsim.trace import BranchKind, SyntheticSpec, gen_synthetic

SPEC = SyntheticSpec(
    static_branch_count=6000,
    kind_mix={
        BranchKind.COND_DIRECT: 0.65,
        BranchKind.UNCOND_DIRECT: 0.20,
        BranchKind.DIRECT_CALL: 0.06,
        BranchKind.RETURN: 0.06,
        BranchKind.INDIRECT_JUMP: 0.03,
    },
    offset_bits_histogram={7: 0.40, 11: 0.30, 14: 0.20, 30: 0.10},
    event_count=150_000,
    seed=4,
)


def drive(org, events):
    """Miss-and-fill loop: lookup every taken branch, insert on miss."""
    misses = 0
    for ev in events:
        if not ev.taken:
            continue
        if not org.lookup(ev.pc).hit:
            misses += 1
            org.insert(ev.pc, ev.target, ev.kind)
    return misses


def main():
    orgs = [
        ("mbtb 4K v2", MicroBtb(sets_per_bank=1024, variant_mode=2, seed=1)),
        ("mbtb 4K v2 noskew", MicroBtb(sets_per_bank=1024, variant_mode=2,
                                       skewed=False, seed=1)),
        ("baseline 8K 4w", BaselineBtb(sets=2048, ways=4)),
        ("skewed 8K 4w", SkewedBtb(sets=2048, ways=4, seed=1)),
        ("fdip-x", FdipXBtb()),
        ("ideal", IdealBtb()),
    ]

    events = gen_synthetic(SPEC)
    taken = sum(1 for ev in events if ev.taken)
    print(f"{len(events)} events, {taken} taken\n")
    print(f"{'organization':<20}{'storage':>12}{'misses':>10}{'miss rate':>11}")
    print("-" * 53)
    for name, org in orgs:
        misses = drive(org, events)
        bits = org.storage_bits()
        kb = f"{bits / 8192:.1f} KB" if bits else "unbounded"
        print(f"{name:<20}{kb:>12}{misses:>10}{misses / taken:>10.1%}")

    print("\nnote the modulo-indexed baseline and the unskewed mbtb: this")
    print("generator emits 4-byte aligned pcs, so with a power-of-two set")
    print("count their two low index bits never vary and 3/4 of their sets")
    print("sit idle.  The skew hash folds high address bits into the index")
    print("and shrugs off the alignment.")

    # what compression buys: resident census of the packed organization
    mbtb = MicroBtb(sets_per_bank=1024, variant_mode=2, seed=1)
    drive(mbtb, events)
    census = mbtb.census()
    print(f"\nmbtb census after the run: {census.branches_resident} branches "
          f"in {census.entries_occupied} occupied entries "
          f"({census.branches_resident / census.entries_occupied:.2f} per entry), "
          f"4096 entry frames total")


if __name__ == "__main__":
    main()
