"""Near-memory sample distribution for one emulator node.

A node owns a sub-banked SIMO-FIFO: one write stream entering P
single-port banks of S rows each, and one read stream per outbound link,
offset by that link's buffer delay. Samples never move after being
written; every delay is realized by pointer arithmetic ("virtual
shifting"). The pieces modeled here:

* SimoFifo: the banked ring of P*S samples with a single write pointer,
* LDDC ring: per-bank read-pointer state machines; when a read pointer
  walks off the end of its bank, ownership of the output hands off to
  the next bank's LDDC within the same cycle,
* GDDC parsing: splits a scenario's delay set into ungrouped outputs and
  collision groups (outputs closer than one bank depth share a fetch),
* collision groups: the group header fetches from the FIFO and the
  sample is multicast into per-member real-time registers (RTR); member
  outputs read their RTR at their delay offset, so a single-port bank
  never serves two reads in one cycle,
* prefetch: during the tail of scenario N, each staged group's prefetch
  buffer (PB) is filled with the history its members will need at the
  start of scenario N+1; RTR and PB swap roles at the boundary, so the
  handoff costs zero cycles.

Two-phase cycle discipline: all reads happen first, then the single
write plus pointer increments. Instrumentation counts every bank access
so the single-port property is checked, not assumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import ConfigurationError, ContractViolation, DomainError
from .golden_model import SPEED_OF_LIGHT
from .numerics import ComplexSample, F16

__all__ = [
    "FifoGeometry",
    "PRESETS",
    "buffer_delay",
    "min_emulable_delay",
    "SimoFifo",
    "LddcState",
    "OutputDelaySpec",
    "LddcConfig",
    "CollisionGroup",
    "PrefetchEntry",
    "PrefetchPlan",
    "gddc_parse",
    "fifo_cycle",
    "pec_cycle",
    "Distributor",
]

ZERO = ComplexSample(F16(0), F16(0))


# ----------------------------------------------------------------------
# Geometry and delay arithmetic
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class FifoGeometry:
    """Bank layout and pipeline budget of one node's buffering fabric.

    Attributes
    ----------
    banks : int
        Number of single-port sub-banks (P).
    bank_depth : int
        Rows per sub-bank (S); rows [k*S, (k+1)*S) live in bank k.
    rtr_depth : int
        Depth of each collision-group register store; offsets inside a
        group must stay below this (the collision protection range).
    compute_latency : int
        Per-hop pipeline cycles outside the FIFO; at least 2 (one
        compute stage plus one delivery stage), the rest is absorbed by
        the output equalizer so every hop costs exactly
        buffer_delay + compute_latency cycles.
    """

    banks: int
    bank_depth: int
    rtr_depth: int
    compute_latency: int

    def __post_init__(self):
        if self.banks < 1 or self.bank_depth < 1:
            raise ConfigurationError("bank count and depth must be positive")
        if self.rtr_depth < 1:
            raise ConfigurationError("RTR depth must be positive")
        if self.compute_latency < 2:
            raise ConfigurationError(
                f"compute latency {self.compute_latency} below pipeline "
                "minimum of 2 cycles")

    @property
    def total_depth(self) -> int:
        return self.banks * self.bank_depth


PRESETS: Dict[str, FifoGeometry] = {
    # 16 banks of 1024, 256-sample collision protection
    "asic4": FifoGeometry(banks=16, bank_depth=1024, rtr_depth=256,
                          compute_latency=124),
    # shallower banks, collision support at the full updated depth
    "fpga9": FifoGeometry(banks=16, bank_depth=512, rtr_depth=512,
                          compute_latency=124),
    # wide layout for long-range many-object scenes
    "sim16": FifoGeometry(banks=64, bank_depth=1024, rtr_depth=1024,
                          compute_latency=124),
}


def buffer_delay(d: float, f: float, compute_latency: int) -> int:
    """Cycles a sample must wait in the FIFO for a d-metre path.

    The total path delay round(d*f/c) is split into FIFO residency and
    the fixed compute pipeline; a path too short to cover the pipeline
    cannot be emulated.
    """
    if d <= 0:
        raise DomainError(f"distance {d} m must be positive")
    total = round(d * f / SPEED_OF_LIGHT)
    delay = total - compute_latency
    if delay < 0:
        raise DomainError(
            f"distance {d} m is below minimum emulable range: path spans "
            f"{total} cycles but the pipeline alone takes {compute_latency}")
    return delay


def min_emulable_delay(bank_depth: int, compute_latency: int) -> int:
    """Smallest emulable total path delay, in samples.

    Below one bank depth of buffering, the read pointer would share the
    write pointer's single-port bank every cycle, so the floor is one
    full bank plus the compute pipeline.
    """
    return bank_depth + compute_latency


# ----------------------------------------------------------------------
# FIFO storage and LDDC ring state
# ----------------------------------------------------------------------

class SimoFifo:
    """P*S-sample ring: one write per cycle, reads at per-output offsets."""

    def __init__(self, geometry: FifoGeometry):
        self.geometry = geometry
        self.data: List[ComplexSample] = [ZERO] * geometry.total_depth
        self.write_ptr = 0  # global sample index, row = write_ptr mod P*S

    def row(self, index: int) -> int:
        return index % self.geometry.total_depth

    def bank_of(self, index: int) -> int:
        return self.row(index) // self.geometry.bank_depth

    def read(self, index: int) -> ComplexSample:
        return self.data[self.row(index)]

    def write(self, sample: ComplexSample) -> None:
        self.data[self.row(self.write_ptr)] = sample
        self.write_ptr += 1


@dataclass
class LddcState:
    """Read-pointer FSM for one bank; owns at most one fetch per cycle."""

    bank_id: int
    next_lddc: int
    read_ptr: int = 0
    active_outputs: set = field(default_factory=set)


@dataclass(frozen=True)
class OutputDelaySpec:
    """One outbound link's delay, as parsed by the GDDC."""

    output_id: object
    buffer_delay: int
    muted: bool = False       # delay under one bank depth: emit zeros
    wrap_zone: bool = False   # delay within one bank of the full ring


@dataclass(frozen=True)
class LddcConfig:
    """Fetch configuration for an ungrouped output or a group header."""

    output_id: object
    buffer_delay: int
    start_bank: int
    start_row: int
    muted: bool = False
    wrap_zone: bool = False


# ----------------------------------------------------------------------
# Collision groups and prefetch
# ----------------------------------------------------------------------

class _Store:
    """Dual-port register store of one RTR or PB."""

    def __init__(self, depth: int):
        self.depth = depth
        self.data: List[ComplexSample] = [ZERO] * depth

    def read(self, slot: int) -> ComplexSample:
        return self.data[slot % self.depth]

    def write(self, slot: int, sample: ComplexSample) -> None:
        self.data[slot % self.depth] = sample


class CollisionGroup:
    """Outputs whose delays collide within one bank depth.

    The header (smallest delay) fetches from the FIFO; the fetched
    sample is multicast into the group's live register store, and every
    other member reads that store at its own offset. ``pb`` is the store
    prefilled for the next scenario; roles swap at the boundary.
    """

    def __init__(self, gid: int, header_id, header_delay: int,
                 members: Sequence[Tuple[object, int]], rtr_depth: int,
                 role_parity: int = 0):
        self.gid = gid
        self.header_id = header_id
        self.header_delay = header_delay
        self.members = list(members)  # (output_id, offset), header excluded
        self.rtr_depth = rtr_depth
        self.rtr = _Store(rtr_depth)
        self.pb: Optional[_Store] = None
        self.role_parity = role_parity

    @property
    def max_offset(self) -> int:
        return max((o for _, o in self.members), default=0)


@dataclass(frozen=True)
class PrefetchEntry:
    """History one member needs staged before its scenario starts."""

    group_id: int
    member_id: object
    first_sample: int   # global stream index of the oldest staged sample
    count: int
    source: str         # "resident", "streaming", or "mixed"


@dataclass(frozen=True)
class PrefetchPlan:
    """Per-member staging ranges for the next scenario's groups."""

    entries: Tuple[PrefetchEntry, ...]
    window: int  # cycles before the boundary during which PBs fill


def _classify_source(first: int, count: int, scenario_start: int) -> str:
    # resident: already in the FIFO when the staging scenario began
    last = first + count - 1
    if last < scenario_start:
        return "resident"
    if first >= scenario_start:
        return "streaming"
    return "mixed"


def gddc_parse(scp, geometry: FifoGeometry, node_id=None, write_index: int = 0,
               scenario_start: int = 0, boundary: Optional[int] = None,
               ) -> Tuple[List[LddcConfig], List[CollisionGroup], PrefetchPlan]:
    """Parse one scenario's delay set into fetch configs and groups.

    Parameters
    ----------
    scp : packet or sequence
        Either a scenario packet exposing ``links`` with ``src``/``dst``/
        ``buffer_delay`` fields (filtered to ``node_id`` when given), or
        a plain sequence of (output_id, buffer_delay) pairs.
    geometry : FifoGeometry
    write_index : int
        Global write-pointer value at the scenario start, for start
        bank/row calculation.
    scenario_start, boundary : int
        Cycle bounds of the scenario that stages this config, used to
        classify prefetch sources; ``boundary`` is the cycle this config
        takes effect (defaults to ``scenario_start``, meaning no
        look-ahead, as for the first scenario of a run).

    Raises
    ------
    DomainError
        If a delay exceeds the ring, or a collision offset exceeds the
        protection range.
    """
    if hasattr(scp, "links"):
        pairs = [((e.src, e.dst), e.buffer_delay) for e in scp.links
                 if node_id is None or e.src == node_id]
    else:
        pairs = [(oid, int(d)) for oid, d in scp]
    total = geometry.total_depth
    s_depth = geometry.bank_depth

    for oid, d in pairs:
        if d < 0:
            raise DomainError(
                f"output {oid}: negative buffer delay {d} is below minimum "
                "emulable range")
        if d > total:
            raise DomainError(
                f"output {oid}: buffer delay {d} exceeds maximum emulation "
                f"range of {total} samples")

    # outputs below one bank depth never read (their fetch would share
    # the write pointer's bank every cycle), so they mute and take no
    # part in grouping; the rest sort ascending and group greedily from
    # the nearest output, absorbing everything within one bank depth of
    # the group header
    configs: List[LddcConfig] = []
    groups: List[CollisionGroup] = []
    live = []
    for oid, d in sorted(pairs, key=lambda p: (p[1], str(p[0]))):
        if d < s_depth:
            configs.append(LddcConfig(
                output_id=oid, buffer_delay=d, start_bank=0, start_row=0,
                muted=True))
        else:
            live.append((oid, d))
    i = 0
    while i < len(live):
        head_id, head_d = live[i]
        j = i + 1
        members: List[Tuple[object, int]] = []
        while j < len(live) and live[j][1] - head_d < s_depth:
            members.append((live[j][0], live[j][1] - head_d))
            j += 1
        configs.append(LddcConfig(
            output_id=head_id, buffer_delay=head_d,
            start_bank=((write_index - head_d) % total) // s_depth,
            start_row=((write_index - head_d) % total) % s_depth,
            wrap_zone=head_d > total - s_depth))
        if members:
            for mid, off in members:
                if off >= geometry.rtr_depth:
                    raise DomainError(
                        f"output {mid}: offset {off} from group header "
                        f"{head_id} is a collision beyond protection range "
                        f"({geometry.rtr_depth} samples)")
            groups.append(CollisionGroup(
                gid=len(groups), header_id=head_id, header_delay=head_d,
                members=members, rtr_depth=geometry.rtr_depth))
        i = j

    if boundary is None:
        boundary = scenario_start
    entries = []
    window = 0
    for g in groups:
        window = max(window, g.max_offset)
        for mid, off in g.members:
            if off == 0:
                continue
            first = boundary - g.header_delay - off
            entries.append(PrefetchEntry(
                group_id=g.gid, member_id=mid, first_sample=first, count=off,
                source=_classify_source(first, off, scenario_start)))
    plan = PrefetchPlan(entries=tuple(entries), window=window)
    return configs, groups, plan


def pec_cycle(group: CollisionGroup, multicast_in: ComplexSample,
              cycle: int) -> Dict[object, ComplexSample]:
    """One cycle of a group's register machinery.

    The header's fetched sample is written into the live store at slot
    ``cycle mod depth`` (write-first, so an offset-0 member sees this
    cycle's sample), then every member reads at its own offset.
    """
    group.rtr.write(cycle, multicast_in)
    return {mid: group.rtr.read(cycle - off) for mid, off in group.members}


# ----------------------------------------------------------------------
# One-node distribution machinery
# ----------------------------------------------------------------------

def _blank_counters() -> Dict[str, int]:
    return {
        "bank_reads": 0,
        "bank_writes": 0,
        "lddc_handoffs": 0,
        "grouped_outputs": 0,
        "muted_outputs": 0,
        "shared_bank_wrap": 0,
        "rtr_reads": 0,
        "rtr_writes": 0,
        "prefetch_resident": 0,
        "prefetch_streaming": 0,
    }


def fifo_cycle(fifo: SimoFifo, lddcs: Sequence[LddcState],
               configs: Sequence[LddcConfig],
               groups: Sequence[CollisionGroup],
               incoming: ComplexSample, cycle: int,
               counters: Optional[Dict[str, int]] = None,
               ) -> Dict[object, ComplexSample]:
    """Advance the node's buffering fabric one cycle.

    Phase 1 performs every read: each live fetch pulls one row (its
    bank's LDDC does the fetch), group members read their registers.
    Phase 2 writes the incoming sample and advances all pointers. Bank
    usage is audited: a single-port bank serving two accesses in one
    cycle is a contract violation unless the delay sits in the
    documented wrap zone (within one bank of the full ring), which is
    counted, not failed.
    """
    if counters is None:
        counters = _blank_counters()
    geo = fifo.geometry
    s_depth = geo.bank_depth
    out: Dict[object, ComplexSample] = {}
    by_id = {g.header_id: g for g in groups}

    write_bank = fifo.bank_of(fifo.write_ptr)
    read_banks = set()

    # phase 1: fetches, multicast, member register reads
    for cfg in configs:
        if cfg.muted:
            out[cfg.output_id] = ZERO
            counters["muted_outputs"] += 1
            continue
        pos = fifo.write_ptr - cfg.buffer_delay
        bank = fifo.bank_of(pos)
        if bank in read_banks:
            raise ContractViolation(
                f"single-port violation: bank {bank} read twice in cycle "
                f"{cycle}")
        read_banks.add(bank)
        if bank == write_bank:
            if not cfg.wrap_zone:
                raise ContractViolation(
                    f"single-port violation: bank {bank} read and written "
                    f"in cycle {cycle} outside the wrap zone")
            counters["shared_bank_wrap"] += 1
        counters["bank_reads"] += 1
        sample = fifo.read(pos)

        # LDDC bookkeeping: ownership follows the read row; crossing a
        # bank boundary hands the output to the ring neighbor
        st = lddcs[bank]
        row = fifo.row(pos) % s_depth
        st.read_ptr = row
        if cfg.output_id not in st.active_outputs:
            prev = lddcs[(bank - 1) % geo.banks]
            if cfg.output_id in prev.active_outputs:
                prev.active_outputs.discard(cfg.output_id)
                counters["lddc_handoffs"] += 1
            st.active_outputs.add(cfg.output_id)

        out[cfg.output_id] = sample
        g = by_id.get(cfg.output_id)
        if g is not None:
            counters["rtr_writes"] += 1
            counters["rtr_reads"] += len(g.members)
            out.update(pec_cycle(g, sample, cycle))

    # phase 2: the single write, pointer advance
    fifo.write(incoming)
    counters["bank_writes"] += 1
    return out


class Distributor:
    """Per-node orchestration of FIFO, LDDCs, groups, and prefetch.

    Drive it one cycle at a time with the node's written sample; it
    returns the delayed sample for every outbound link. Scenario
    sequencing: the first config loads with ``load_initial``; each later
    scenario must be staged with ``stage_next`` early enough for its
    prefetch window, and takes effect automatically at the boundary.
    """

    def __init__(self, geometry: FifoGeometry,
                 scenario_length: Optional[int] = None):
        self.geometry = geometry
        if scenario_length is not None and scenario_length < 1:
            raise ConfigurationError("scenario length must be positive")
        self.scenario_length = scenario_length
        self.fifo = SimoFifo(geometry)
        self.lddcs = [LddcState(bank_id=k, next_lddc=(k + 1) % geometry.banks)
                      for k in range(geometry.banks)]
        self.cycle_index = 0
        self.scenario_index = 0
        self.configs: List[LddcConfig] = []
        self.groups: List[CollisionGroup] = []
        self.counters = _blank_counters()
        self._staged = None       # (configs, groups, plan)
        self._next_boundary = scenario_length
        self._scenario_start = 0

    # -- configuration ------------------------------------------------

    def _check_window(self, plan: PrefetchPlan) -> None:
        if self.scenario_length is not None and \
                plan.window >= self.scenario_length:
            raise ConfigurationError(
                f"collision offsets span {plan.window} samples but the "
                f"scenario is only {self.scenario_length} cycles; prefetch "
                "cannot complete in one scenario")

    def load_initial(self, delays) -> None:
        """Configure scenario 0 (no look-ahead: members warm up muted)."""
        if self.cycle_index != 0:
            raise ContractViolation("initial config after cycle 0")
        configs, groups, plan = gddc_parse(
            delays, self.geometry, write_index=0,
            scenario_start=0, boundary=0)
        self._check_window(plan)
        self.configs, self.groups = configs, groups
        self.counters["grouped_outputs"] += sum(
            len(g.members) + 1 for g in groups)

    def stage_next(self, delays) -> None:
        """Stage the next scenario's config; must precede its prefetch."""
        if self.scenario_length is None:
            raise ConfigurationError(
                "staging requires a finite scenario length")
        boundary = self._next_boundary
        configs, groups, plan = gddc_parse(
            delays, self.geometry, write_index=boundary,
            scenario_start=self._scenario_start, boundary=boundary)
        self._check_window(plan)
        remaining = boundary - self.cycle_index
        if remaining < plan.window:
            raise ContractViolation(
                f"scenario {self.scenario_index + 1} staged {remaining} "
                f"cycles before its boundary; prefetch needs {plan.window}")
        self._staged = (configs, groups, plan)

    # -- per-cycle ----------------------------------------------------

    def _prefetch_step(self) -> None:
        if self._staged is None or self._next_boundary is None:
            return
        _, groups, _ = self._staged
        boundary = self._next_boundary
        t = self.cycle_index
        for g in groups:
            w = g.max_offset
            if w == 0 or t < boundary - w:
                continue
            if g.pb is None:
                g.pb = _Store(g.rtr_depth)
            src_index = t - g.header_delay
            sample = self.fifo.read(src_index) if src_index >= 0 else ZERO
            g.pb.write(t, sample)
            if src_index >= self._scenario_start:
                self.counters["prefetch_streaming"] += 1
            else:
                self.counters["prefetch_resident"] += 1

    def _swap_in_staged(self) -> None:
        if self._staged is None:
            raise ContractViolation(
                f"scenario boundary at cycle {self.cycle_index} reached "
                "with no staged configuration")
        configs, groups, _ = self._staged
        parity = (self.scenario_index + 1) & 1
        for g in groups:
            # role swap: the prefilled PB becomes the live store
            if g.pb is not None:
                g.rtr = g.pb
            g.pb = None
            g.role_parity = parity
        self.configs, self.groups = configs, groups
        self._staged = None
        self.scenario_index += 1
        self._scenario_start = self.cycle_index
        self._next_boundary += self.scenario_length
        # LDDC assignments reload with the new config; handoffs count
        # bank crossings within a scenario only
        for st in self.lddcs:
            st.active_outputs.clear()
        self.counters["grouped_outputs"] += sum(
            len(g.members) + 1 for g in groups)

    def cycle(self, incoming: ComplexSample) -> Dict[object, ComplexSample]:
        """One two-phase cycle; returns every output's delayed sample."""
        if self._next_boundary is not None and \
                self.cycle_index == self._next_boundary:
            self._swap_in_staged()
        out = fifo_cycle(self.fifo, self.lddcs, self.configs, self.groups,
                         incoming, self.cycle_index, self.counters)
        self._prefetch_step()
        self.cycle_index += 1
        return out
