"""Cycle-stepped decoupled front-end driven by a branch trace.

Pipeline: prediction (L1 BTB, then L2 BTB on L1 miss) -> FTQ -> fixed-latency
ideal instruction cache -> decode queue -> merged decode/dispatch -> in-order
retire through a ROB-occupancy backend proxy.  Only branch behavior is
modeled in detail; non-branch instructions are anonymous run-length filler.

Cycle phase order (each call to step_cycle):
  1. retire      -- in-order, up to retire_width, blocked by unresolved branches
  2. resolve     -- at most one pending execute-resolved branch; on its cycle:
                    flush younger state, redirect, insert into both BTBs
  3. decode      -- up to min(decode_width, dispatch_width) and ROB space;
                    calls push the RAS, returns pop it, BTB misses of
                    decode-resolved kinds redirect here
  4. fetch       -- FTQ blocks whose L1I latency elapsed move into the decode
                    queue, bounded by queue space only
  5. predict     -- form at most one fetch block; a predicted-taken branch
                    ends the block; a taken branch missing both BTBs leaves
                    prediction running down the sequential wrong path

The wrong path carries no architectural content (the trace is correct-path
only), so wrong-path instructions are pure filler: they occupy queue slots
and widths until the flush, and never touch the BTBs or the RAS.

Direction prediction is oracle-correct; only targets can be mispredicted.
"""

from collections import deque
from dataclasses import dataclass, field

from .btb_models import BaselineBtb
from .trace import INSTR_BYTES, BranchKind

CENSUS_PERIOD = 100_000  # retired instructions between resident-branch samples


class TraceExhaustedError(RuntimeError):
    """The trace ended before the requested events retired."""


@dataclass(frozen=True)
class FrontendConfig:
    ftq_blocks: int = 24
    instrs_per_block: int = 8
    decode_queue: int = 60
    decode_width: int = 6
    dispatch_width: int = 6
    retire_width: int = 6
    rob_size: int = 352
    l1i_latency: int = 4
    l1btb_sets: int = 64
    l1btb_ways: int = 2
    l1btb_latency: int = 1
    l2btb_latency: int = 2
    ras_depth: int = 32
    execute_resolve_delay: int = 12

    def validate(self):
        for name, value in self.__dict__.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")


@dataclass
class LatencyStats:
    """Resolution latency of BTB-mispredicted branches of one kind."""

    count: int = 0
    fetch_queue: int = 0
    decode_queue: int = 0
    execute: int = 0
    total: int = 0

    def add(self, fq, dq, ex):
        self.count += 1
        self.fetch_queue += fq
        self.decode_queue += dq
        self.execute += ex
        self.total += fq + dq + ex


@dataclass
class MetricsReport:
    retired_instructions: int = 0
    retired_events: int = 0
    cycles: int = 0
    l2btb_misses: int = 0  # taken branches missing both BTB levels
    all_branch_misses: int = 0
    false_hits: int = 0
    starved_cycles: int = 0
    evictions: int = 0
    mpki: float = 0.0
    scki: float = 0.0
    ipc_proxy: float = 0.0
    resident_samples: list = field(default_factory=list)
    resident_branches_mean: float = 0.0
    latency: dict = field(default_factory=dict)  # BranchKind -> LatencyStats

    def finalize(self):
        if self.retired_instructions:
            self.mpki = 1000.0 * self.l2btb_misses / self.retired_instructions
            self.scki = 1000.0 * self.starved_cycles / self.retired_instructions
        if self.cycles:
            self.ipc_proxy = self.retired_instructions / self.cycles
        if self.resident_samples:
            self.resident_branches_mean = sum(self.resident_samples) / len(
                self.resident_samples
            )
        return self


class _Branch:
    """One dynamic branch instance flowing through the pipe."""

    __slots__ = (
        "ev",
        "pred_hit",
        "pred_target",
        "pred_return",
        "redirects",
        "t0",
        "t1",
        "t2",
        "retirable",
    )

    def __init__(self, ev):
        self.ev = ev
        self.pred_hit = False
        self.pred_target = 0
        self.pred_return = False
        self.redirects = False  # resolution must re-steer prediction
        self.t0 = 0  # block formed
        self.t1 = 0  # entered decode queue
        self.t2 = 0  # decoded
        self.retirable = None  # cycle from which retire may take it


class _Block:
    __slots__ = ("formed", "items")

    def __init__(self, formed, items):
        self.formed = formed
        self.items = items  # list of ("f", count) | ("b", _Branch)


def _item_size(item):
    return item[1] if item[0] == "f" else 1


class FrontendSim:
    """Single-threaded simulator instance bound to one trace and one L2 BTB."""

    def __init__(self, trace, l2btb, config=None, seed=0):
        self.config = config or FrontendConfig()
        self.config.validate()
        self.trace = trace
        self.l2 = l2btb
        self.l1 = BaselineBtb(
            sets=self.config.l1btb_sets, ways=self.config.l1btb_ways, seed=seed
        )
        self.cycle = 0
        self.event_idx = 0  # next trace event for prediction
        self.gap_left = trace[0].gap if trace else 0
        self.wrong_path = False
        self.stalled_for_ras = None  # _Branch of the return we wait on
        self.pred_busy_until = 0
        self.ftq = deque()
        self.dq = deque()
        self.dq_size = 0
        self.rob = deque()
        self.rob_size = 0
        self.ras = deque()
        self.pending = None  # at most one execute-resolved branch in flight
        self.retired_events_total = 0
        self.retired_log = None  # set to a list to record retired events
        self.measuring = False
        self.measure_start_cycle = 0
        self.stop_cycle = 0
        self.report = MetricsReport()
        self.next_census = CENSUS_PERIOD

    # -- RAS ---------------------------------------------------------------

    def ras_push(self, addr):
        self.ras.append(addr)
        if len(self.ras) > self.config.ras_depth:
            self.ras.popleft()  # oldest entry lost

    def ras_pop(self):
        if not self.ras:
            return None
        return self.ras.pop()

    # -- prediction helpers --------------------------------------------------

    def _probe(self, pc):
        """L1 first; L2 only on L1 miss.  Returns (result, consulted_l2)."""
        res = self.l1.lookup(pc)
        if res.hit:
            return res, False
        return self.l2.lookup(pc), True

    def _predict_branch(self, ev, now):
        """Probe the hierarchy for one branch instance; classify the outcome."""
        res, consulted_l2 = self._probe(ev.pc)
        br = _Branch(ev)
        br.t0 = now
        if res.hit:
            br.pred_hit = True
            br.pred_return = res.is_return
            br.pred_target = res.target
            if res.owner != ev.pc and self.measuring:
                self.report.false_hits += 1
        else:
            if self.measuring:
                self.report.all_branch_misses += 1
                if ev.taken:
                    self.report.l2btb_misses += 1
        return br, consulted_l2

    def _form_block(self, now):
        cfg = self.config
        if self.wrong_path:
            self.ftq.append(_Block(now, [("f", cfg.instrs_per_block)]))
            return
        items = []
        count = 0
        consulted = False
        while count < cfg.instrs_per_block and self.event_idx < len(self.trace):
            if self.gap_left > 0:
                take = min(self.gap_left, cfg.instrs_per_block - count)
                items.append(("f", take))
                count += take
                self.gap_left -= take
                continue
            ev = self.trace[self.event_idx]
            br, used_l2 = self._predict_branch(ev, now)
            consulted = consulted or used_l2
            items.append(("b", br))
            count += 1
            self.event_idx += 1
            if self.event_idx < len(self.trace):
                self.gap_left = self.trace[self.event_idx].gap
            if br.pred_hit and br.pred_return:
                # target comes from the RAS at decode; hold prediction here
                self.stalled_for_ras = br
                break
            if ev.taken:
                if br.pred_hit and br.pred_target == ev.target:
                    break  # predicted taken: block ends, path stays correct
                # miss or wrong predicted target: we are now off-path
                br.redirects = True
                self.wrong_path = True
                if br.pred_hit:
                    break  # predictor steered the block to the wrong target
                # both BTBs missed: the predictor saw no branch at all and
                # keeps filling this block sequentially
                if count < cfg.instrs_per_block:
                    items.append(("f", cfg.instrs_per_block - count))
                    count = cfg.instrs_per_block
        if consulted:
            self.pred_busy_until = max(self.pred_busy_until, now + cfg.l2btb_latency)
        if items:
            self.ftq.append(_Block(now, items))

    # -- resolution ----------------------------------------------------------

    def _flush_younger(self, br):
        """Drop everything younger than the resolving branch.

        The branch is already in the ROB (decode put it there), so younger
        state is exactly: ROB entries behind it, the whole decode queue, and
        the whole FTQ -- decode is in-order, nothing older can trail it.
        """
        self.ftq.clear()
        self.dq.clear()
        self.dq_size = 0
        while self.rob and not (self.rob[-1][0] == "b" and self.rob[-1][1] is br):
            tail = self.rob.pop()
            self.rob_size -= _item_size(tail)
        assert self.rob, "resolving branch vanished from the ROB"

    def _resolve(self, br, now, execute_component):
        """Common redirect path: flush, re-steer, account, update BTBs."""
        self._flush_younger(br)
        self.wrong_path = False
        self.stalled_for_ras = None
        self.pred_busy_until = max(self.pred_busy_until, now + 1)
        ev = br.ev
        if ev.taken:
            rep = self.l2.insert(ev.pc, ev.target, ev.kind)
            self.l1.insert(ev.pc, ev.target, ev.kind)
            if self.measuring:
                self.report.evictions += rep.count
        if self.measuring:
            stats = self.report.latency.setdefault(ev.kind, LatencyStats())
            stats.add(br.t1 - br.t0, br.t2 - br.t1, execute_component)
        br.retirable = now + 1

    # -- cycle phases ----------------------------------------------------------

    def _phase_retire(self, now, limit_events):
        cfg = self.config
        budget = cfg.retire_width
        while budget > 0 and self.rob:
            item = self.rob[0]
            if item[0] == "f":
                _, n, rc = item
                if rc > now:
                    break
                take = min(n, budget)
                self._count_retired(take, 0)
                budget -= take
                self.rob_size -= take
                if take == n:
                    self.rob.popleft()
                else:
                    self.rob[0] = ("f", n - take, rc)
            else:
                br = item[1]
                if br.retirable is None or br.retirable > now:
                    break
                self.rob.popleft()
                self.rob_size -= 1
                budget -= 1
                if self.retired_log is not None:
                    self.retired_log.append(br.ev)
                self._count_retired(1, 1)
                if self.measuring and (
                    self.report.retired_events >= limit_events
                ):
                    return True
        return False

    def _count_retired(self, instrs, events):
        self.retired_events_total += events
        if self.measuring:
            self.report.retired_instructions += instrs
            self.report.retired_events += events
            if self.report.retired_instructions >= self.next_census:
                self.next_census += CENSUS_PERIOD
                self.report.resident_samples.append(self.l2.resident_branches())

    def _phase_resolve(self, now):
        if self.pending is None:
            return
        br, due = self.pending
        if now < due:
            return
        self.pending = None
        self._resolve(br, now, execute_component=now - br.t2)

    def _decode_branch(self, br, now):
        """Branch leaves the decode queue; returns True if decode must stop."""
        ev = br.ev
        br.t2 = now
        if ev.kind.is_call:
            self.ras_push((ev.pc + INSTR_BYTES))
        if ev.kind == BranchKind.RETURN:
            popped = self.ras_pop()
            ras_correct = popped == ev.target
            if br.pred_hit and br.pred_return and not br.redirects:
                if ras_correct:
                    # prediction was holding for this pop; resume, no flush
                    self.stalled_for_ras = None
                    self.pred_busy_until = max(self.pred_busy_until, now + 1)
                    br.retirable = now + 1
                    return False
                self.pending = (br, now + self.config.execute_resolve_delay)
                return False
            if br.redirects or not br.pred_hit:
                if ras_correct:
                    self._resolve(br, now, execute_component=0)
                    return True
                assert self.pending is None
                self.pending = (br, now + self.config.execute_resolve_delay)
                return False
            br.retirable = now + 1
            return False
        if br.pred_hit and br.pred_return:
            # alias: the entry claimed a return but this instruction is not
            # one; decode sees the real kind and re-steers immediately
            br.redirects = True
        if not br.redirects:
            br.retirable = now + 1
            return False
        if ev.kind.decode_resolved:
            self._resolve(br, now, execute_component=0)
            return True
        assert self.pending is None, "a second unresolved redirect appeared"
        self.pending = (br, now + self.config.execute_resolve_delay)
        return False

    def _phase_decode(self, now):
        cfg = self.config
        budget = min(cfg.decode_width, cfg.dispatch_width)
        delivered = 0
        while budget > 0 and self.dq and self.rob_size < cfg.rob_size:
            item = self.dq[0]
            if item[0] == "f":
                take = min(item[1], budget, cfg.rob_size - self.rob_size)
                self.dq_size -= take
                if take == item[1]:
                    self.dq.popleft()
                else:
                    self.dq[0] = ("f", item[1] - take)
                if self.rob and self.rob[-1][0] == "f" and self.rob[-1][2] == now + 1:
                    self.rob[-1] = ("f", self.rob[-1][1] + take, now + 1)
                else:
                    self.rob.append(("f", take, now + 1))
                self.rob_size += take
                budget -= take
                delivered += take
            else:
                br = item[1]
                self.dq.popleft()
                self.dq_size -= 1
                self.rob.append(("b", br))
                self.rob_size += 1
                budget -= 1
                delivered += 1
                if self._decode_branch(br, now):
                    break  # redirect flushed everything younger
        if delivered == 0 and self.measuring:
            self.report.starved_cycles += 1

    def _phase_fetch(self, now):
        cfg = self.config
        while self.ftq:
            blk = self.ftq[0]
            if now < blk.formed + cfg.l1i_latency:
                break
            while blk.items:
                item = blk.items[0]
                space = cfg.decode_queue - self.dq_size
                if space <= 0:
                    return
                if item[0] == "f":
                    take = min(item[1], space)
                    if self.dq and self.dq[-1][0] == "f":
                        self.dq[-1] = ("f", self.dq[-1][1] + take)
                    else:
                        self.dq.append(("f", take))
                    self.dq_size += take
                    if take == item[1]:
                        blk.items.pop(0)
                    else:
                        blk.items[0] = ("f", item[1] - take)
                else:
                    br = item[1]
                    br.t1 = now
                    self.dq.append(item)
                    self.dq_size += 1
                    blk.items.pop(0)
            self.ftq.popleft()

    def _phase_predict(self, now):
        if self.stalled_for_ras is not None or now < self.pred_busy_until:
            return
        if len(self.ftq) >= self.config.ftq_blocks:
            return
        if not self.wrong_path and self.event_idx >= len(self.trace):
            return
        self._form_block(now)

    def step_cycle(self, limit_events=None):
        """Advance one cycle; returns True when the retire target was reached."""
        now = self.cycle
        limit = self.report.retired_events + 1 if limit_events is None else limit_events
        done = self._phase_retire(now, limit)
        if done:
            self.stop_cycle = now
            self.cycle += 1
            return True
        self._phase_resolve(now)
        self._phase_decode(now)
        self._phase_fetch(now)
        self._phase_predict(now)
        self.cycle += 1
        return False

    def _pipeline_empty(self):
        return (
            not self.ftq
            and not self.dq
            and not self.rob
            and self.pending is None
            and self.stalled_for_ras is None
        )

    def run(self, warmup_events, measure_events):
        """Step until measure_events branch events retire past the warmup."""
        if warmup_events + measure_events > len(self.trace):
            raise TraceExhaustedError(
                f"trace has {len(self.trace)} events, "
                f"need {warmup_events + measure_events}"
            )
        if measure_events == 0:
            return self.report.finalize()
        if warmup_events == 0:
            self._begin_measurement()
        while True:
            if self.measuring:
                if self.step_cycle(measure_events):
                    break
            else:
                self.step_cycle(None)
                if self.retired_events_total >= warmup_events:
                    self._begin_measurement()
            if (
                self.event_idx >= len(self.trace)
                and self._pipeline_empty()
                and self.report.retired_events < measure_events
            ):
                raise TraceExhaustedError("pipeline drained before measure target")
        self.report.cycles = self.stop_cycle - self.measure_start_cycle + 1
        return self.report.finalize()

    def _begin_measurement(self):
        self.measuring = True
        self.measure_start_cycle = self.cycle
        self.next_census = CENSUS_PERIOD
        self.report = MetricsReport()

    def compute_metrics(self):
        return self.report.finalize()


def run_frontend(trace, l2btb, config=None, warmup_events=0, measure_events=None, seed=0):
    """Convenience wrapper: build a sim, run it, return the report."""
    if measure_events is None:
        measure_events = len(trace) - warmup_events
    sim = FrontendSim(trace, l2btb, config=config, seed=seed)
    report = sim.run(warmup_events, measure_events)
    if not report.resident_samples:
        report.resident_samples.append(l2btb.resident_branches())
        report.finalize()
    return report
