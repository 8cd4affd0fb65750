"""Step the decoupled front-end and read the metrics it produces.

The pipeline: a prediction stage walks the trace and deposits fetch
blocks into the FTQ; the instruction cache drains the FTQ into the
decode queue after a fixed latency; decode hands instructions to a
backend proxy that retires them.  A branch the BTBs do not know about
is discovered late, and everything fetched past it is thrown away.
That discovery cost is what separates the organizations.
"""

from btbsim.btb_models import IdealBtb, MicroBtb
from btbsim.frontend_sim import FrontendConfig, run_frontend
from btbsim.trace import BranchKind, SyntheticSpec, gen_synthetic

SPEC = SyntheticSpec(
    static_branch_count=2500,
    kind_mix={
        BranchKind.COND_DIRECT: 0.55,
        BranchKind.UNCOND_DIRECT: 0.20,
        BranchKind.DIRECT_CALL: 0.09,
        BranchKind.RETURN: 0.09,
        BranchKind.INDIRECT_JUMP: 0.07,
    },
    offset_bits_histogram={8: 0.5, 12: 0.3, 26: 0.2},
    event_count=60_000,
    seed=19,
)


def show(tag, report):
    print(f"{tag:<22} cycles={report.cycles:<8} ipc={report.ipc_proxy:5.2f} "
          f"mpki={report.mpki:7.2f} scki={report.scki:7.2f} "
          f"false_hits={report.false_hits}")


def main():
    events = gen_synthetic(SPEC)

    ideal = run_frontend(events, IdealBtb(), warmup_events=10_000)
    small = run_frontend(
        events, MicroBtb(sets_per_bank=128, variant_mode=2, seed=2),
        warmup_events=10_000,
    )
    show("ideal tables", ideal)
    show("mbtb 512-entry", small)

    # where the lost cycles go, by branch kind: indirect branches resolve
    # at execute, everything else at decode, so their penalty is larger
    print("\nresolution latency of missed branches (mbtb run):")
    for kind, stats in sorted(small.latency.items(), key=lambda kv: int(kv[0])):
        if stats.count == 0:
            continue
        print(f"  {kind.name:<14} n={stats.count:<6} "
              f"avg={stats.total / stats.count:5.1f} cycles "
              f"(fetch {stats.fetch_queue / stats.count:.1f}, "
              f"decode {stats.decode_queue / stats.count:.1f}, "
              f"execute {stats.execute / stats.count:.1f})")

    # slower second-level lookups stretch every redirect
    print("\nsecond-level BTB latency sensitivity:")
    for lat in (1, 3, 6):
        cfg = FrontendConfig(l2btb_latency=lat)
        rep = run_frontend(
            events, MicroBtb(sets_per_bank=128, variant_mode=2, seed=2),
            config=cfg, warmup_events=10_000,
        )
        show(f"  l2 latency {lat}", rep)


if __name__ == "__main__":
    main()
