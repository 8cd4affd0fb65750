"""How far away do branch targets land? Measures offset widths on a synthetic trace."""

from btbsim.harness import analyze_offsets
from btbsim.trace import BranchKind, SyntheticSpec, gen_synthetic

# mass concentrated at short offsets, with a long tail; calls reach further
SPEC = SyntheticSpec(
    static_branch_count=4000,
    kind_mix={
        BranchKind.COND_DIRECT: 0.62,
        BranchKind.UNCOND_DIRECT: 0.18,
        BranchKind.DIRECT_CALL: 0.08,
        BranchKind.RETURN: 0.08,
        BranchKind.INDIRECT_JUMP: 0.04,
    },
    offset_bits_histogram={6: 0.30, 10: 0.30, 14: 0.20, 20: 0.12, 34: 0.08},
    event_count=80_000,
    seed=11,
)

# the compressed entry layouts give each packed branch a magnitude field of
# 15, 7, or 3 bits (2, 4, 8 branches per entry); 28 bits covers variant-0
# style reach.  The question each column answers: what fraction of dynamic
# branches would fit?
WIDTHS = (3, 7, 14, 15, 28)


def main():
    events = gen_synthetic(SPEC)
    table = analyze_offsets(events)
    rows = {}
    for kind, width, frac in table:
        rows.setdefault(kind, {})[width] = frac

    header = "kind".ljust(14) + "".join(f"<=2^{w:<4}" for w in WIDTHS)
    print(header)
    print("-" * len(header))
    for kind, fracs in rows.items():
        cells = "".join(f"{fracs[w]:7.1%} " for w in WIDTHS)
        print(kind.ljust(14) + cells)

    overall = [f for _, w, f in table if w == 14]
    print(f"\nat a 14-bit field, per-kind coverage spans "
          f"{min(overall):.1%} .. {max(overall):.1%}")
    print("a mostly-local workload like this one is what makes offset")
    print("compression pay: one 91-bit entry can hold 2, 4, or 8 branches")
    print("instead of 1 whenever the offsets above fit the field.")


if __name__ == "__main__":
    main()
