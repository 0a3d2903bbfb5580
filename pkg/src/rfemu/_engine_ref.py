"""Reference cycle engine: the complete emulation core in pure Python.

Composes the quantized datapath operators with per-node FIFO
distributors into the full node-and-link pipeline. Every transmitter
and passive object is a producer node that writes exactly one source
stream into its SIMO FIFO per cycle; every directed link reads that
stream at its own integer delay, applies its fractional-delay filter,
the lumped gain stage, and the Doppler rotation, then rides the
equalizer pipeline to the consumer, which folds its inputs through a
balanced quantized adder tree one cycle later.

Cycle structure (one pass per sample clock):

1. scenario boundary: staged gains/taps/delays swap in atomically;
2. Doppler commit (every 256 cycles): phase accumulators advance by
   the active scenario's step and the rotation coefficients refresh;
3. consumers read the samples delivered during the previous cycle:
   passive nodes form their combined input ``v``, receivers capture;
4. producers write their source sample (generator output or ``v``)
   and the distributors return every outbound link's delayed sample;
5. each link filters, scales, rotates, and advances its equalizer,
   delivering one sample toward its consumer's next cycle.

The compiled backend (``rfemu._core.CycleEngine``) implements the same
pipeline fused into C loops; both must agree bit for bit, counters
included. This module is the executable definition of that contract.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .controlpath import Distributor, FifoGeometry
from .datapath import (
    DOPPLER_UPDATE_PERIOD,
    DrfgConfig,
    FdcTaps,
    StageGains,
    apply_output_stage,
    doppler_coefficient,
    doppler_phase_step,
    drfg_step,
    fdc_apply,
    receiver_accumulate,
)
from .errors import ConfigurationError
from .numerics import ComplexSample, F16, f16_bits_to_double_array
from .scenario import (
    ROLES,
    ScenarioConfigPacket,
    ScenarioState,
    su_apply,
    su_commit,
)

__all__ = ["EngineConfig", "CaptureStream", "RunResult", "CycleEngine"]

_PHASE_MASK = 0xFFFFFFFF


# ======================================================================
# run description and result containers
# ======================================================================

@dataclass(frozen=True)
class EngineConfig:
    """Complete description of one emulation run, backend-agnostic.

    Parameters
    ----------
    geometry : FifoGeometry
        Buffering preset shared by every producer node.
    roles : tuple of str
        Role per node index: 'transmitter', 'passive', or 'receiver'.
    drfg : tuple of DrfgConfig or None
        Source generator per node; required exactly on transmitters.
    links : tuple of (int, int)
        Directed (src, dst) node-index pairs; this order is the wire
        order of every scenario packet and of the adder trees.
    scps : tuple of ScenarioConfigPacket
        One packet per scenario, links aligned with ``links``. At least
        ``ceil(n_cycles / scenario_length)`` packets must be supplied.
    scenario_length : int
        Cycles per scenario (the update interval).
    n_cycles : int
        Total cycles to run.
    sample_rate_hz : float
        Sample clock; sets the Doppler accumulator update rate.
    """

    geometry: FifoGeometry
    roles: Tuple[str, ...]
    drfg: Tuple[Optional[DrfgConfig], ...]
    links: Tuple[Tuple[int, int], ...]
    scps: Tuple[ScenarioConfigPacket, ...]
    scenario_length: int
    n_cycles: int
    sample_rate_hz: float

    def __post_init__(self):
        n = len(self.roles)
        for role in self.roles:
            if role not in ROLES:
                raise ConfigurationError(f"unknown node role {role!r}")
        if len(self.drfg) != n:
            raise ConfigurationError(
                f"{len(self.drfg)} generator slots for {n} nodes")
        for i, (role, gen) in enumerate(zip(self.roles, self.drfg)):
            if role == "transmitter" and gen is None:
                raise ConfigurationError(
                    f"node {i} is a transmitter but has no generator")
            if role != "transmitter" and gen is not None:
                raise ConfigurationError(
                    f"node {i} ({role}) cannot carry a generator")
        for k, (src, dst) in enumerate(self.links):
            if not (0 <= src < n and 0 <= dst < n):
                raise ConfigurationError(
                    f"link {k}: node index out of range")
            if src == dst:
                raise ConfigurationError(f"link {k}: self-link {src}->{dst}")
            if self.roles[src] == "receiver":
                raise ConfigurationError(
                    f"link {k}: receivers cannot be sources")
            if self.roles[dst] == "transmitter":
                raise ConfigurationError(
                    f"link {k}: transmitters cannot be destinations")
        if self.scenario_length < 1:
            raise ConfigurationError("scenario length must be positive")
        if self.n_cycles < 1:
            raise ConfigurationError("cycle count must be positive")
        if self.sample_rate_hz <= 0:
            raise ConfigurationError("sample rate must be positive")
        needed = self.scenarios_needed
        if len(self.scps) < needed:
            raise ConfigurationError(
                f"{self.n_cycles} cycles at {self.scenario_length} per "
                f"scenario need {needed} packets, got {len(self.scps)}")
        for s, scp in enumerate(self.scps):
            if len(scp.links) != len(self.links):
                raise ConfigurationError(
                    f"scenario {s}: {len(scp.links)} links, expected "
                    f"{len(self.links)}")
            for k, ln in enumerate(scp.links):
                if (ln.src, ln.dst) != self.links[k]:
                    raise ConfigurationError(
                        f"scenario {s} link {k}: ({ln.src}, {ln.dst}) does "
                        f"not match the run's link order {self.links[k]}")

    @property
    def scenarios_needed(self) -> int:
        """Scenario packets consumed by a full run."""
        return -(-self.n_cycles // self.scenario_length)


@dataclass
class CaptureStream:
    """One receiver's captured I/Q stream, stored as raw F16 bits."""

    re_bits: np.ndarray
    im_bits: np.ndarray

    def __len__(self) -> int:
        return len(self.re_bits)

    @property
    def complex(self) -> np.ndarray:
        """The stream decoded to complex128, exact per sample."""
        return (f16_bits_to_double_array(self.re_bits)
                + 1j * f16_bits_to_double_array(self.im_bits))


@dataclass
class RunResult:
    """Everything a finished run produced.

    ``captures`` maps receiver node index to its bit-exact stream;
    ``counters`` aggregates the instrumentation of every producer's
    distributor plus engine-level counts. Two backends running the
    same ``EngineConfig`` must produce equal captures and counters.
    """

    n_cycles: int
    backend: str
    captures: Dict[int, CaptureStream] = field(default_factory=dict)
    counters: Dict[str, int] = field(default_factory=dict)


# ======================================================================
# per-link derived parameters (one table per scenario)
# ======================================================================

@dataclass(frozen=True)
class _LinkParams:
    delay: int
    taps: FdcTaps
    gains: StageGains
    alpha: F16
    g_r: F16
    phase_step: int


def _derive_params(cfg: EngineConfig) -> list:
    update_rate = cfg.sample_rate_hz / DOPPLER_UPDATE_PERIOD
    tables = []
    for scp in cfg.scps:
        table = []
        for ln in scp.links:
            table.append(_LinkParams(
                delay=ln.buffer_delay,
                taps=FdcTaps(ln.taps),
                gains=StageGains(g_t=ln.g_t, beta_rho=ln.beta_rho),
                alpha=ln.alpha,
                g_r=ln.g_r,
                phase_step=doppler_phase_step(
                    ln.doppler_mhz * 1e6, update_rate),
            ))
        tables.append(table)
    return tables


# ======================================================================
# the engine
# ======================================================================

class CycleEngine:
    """Pure-Python cycle engine; the bit-level reference behavior."""

    backend = "pure"

    def __init__(self, config: EngineConfig):
        self.config = config

    def run(self) -> RunResult:
        """Execute the configured run and return its captures."""
        cfg = self.config
        geo = cfg.geometry
        n_nodes = len(cfg.roles)
        n_links = len(cfg.links)
        sl = cfg.scenario_length
        n_used = cfg.scenarios_needed
        eq_len = geo.compute_latency - 2
        zero = ComplexSample(F16(0), F16(0))

        params = _derive_params(cfg)
        cur = params[0]

        producers = [i for i in range(n_nodes) if cfg.roles[i] != "receiver"]
        receivers = [i for i in range(n_nodes) if cfg.roles[i] == "receiver"]
        outlinks = {i: [k for k in range(n_links) if cfg.links[k][0] == i]
                    for i in producers}
        inlinks = {i: [k for k in range(n_links) if cfg.links[k][1] == i]
                   for i in range(n_nodes)}

        dists = {}
        for i in producers:
            d = Distributor(geo, scenario_length=sl)
            d.load_initial([(k, cur[k].delay) for k in outlinks[i]])
            dists[i] = d

        state = ScenarioState(cycle=0, boundary=sl, scenario_length=sl,
                              current=cfg.scps[0])

        # per-link pipeline state, all cold
        windows = [[zero, zero, zero, zero] for _ in range(n_links)]
        eq_rings = [[zero] * eq_len for _ in range(n_links)]
        eq_ptr = [0] * n_links
        delivered = [zero] * n_links      # arrivals from the previous cycle
        phase = [0] * n_links
        coeff = [doppler_coefficient(0)] * n_links

        captures = {
            i: CaptureStream(np.zeros(cfg.n_cycles, dtype=np.uint16),
                             np.zeros(cfg.n_cycles, dtype=np.uint16))
            for i in receivers
        }

        scen = 0
        commits = 0
        for u in range(cfg.n_cycles):
            # -- 1. scenario boundary: atomic parameter swap ------------
            if u == (scen + 1) * sl:
                state = su_commit(replace(state, cycle=u))
                scen += 1
                cur = params[scen]

            # -- 2. Doppler commit ---------------------------------------
            if u > 0 and u % DOPPLER_UPDATE_PERIOD == 0:
                for k in range(n_links):
                    phase[k] = (phase[k] + cur[k].phase_step) & _PHASE_MASK
                    coeff[k] = doppler_coefficient(phase[k])
                commits += 1

            # -- 3. consumers read last cycle's deliveries ---------------
            src = {}
            for i in producers:
                if cfg.roles[i] == "transmitter":
                    src[i] = drfg_step(cfg.drfg[i], u)
                else:
                    ks = inlinks[i]
                    src[i] = receiver_accumulate(
                        [delivered[k] for k in ks],
                        [cur[k].alpha for k in ks])
            for i in receivers:
                ks = inlinks[i]
                r = receiver_accumulate(
                    [delivered[k] for k in ks],
                    [cur[k].g_r for k in ks])
                captures[i].re_bits[u] = r.re.bits
                captures[i].im_bits[u] = r.im.bits

            # -- 4+5. producers write, links filter/scale/rotate ----------
            for i in producers:
                outs = dists[i].cycle(src[i])
                for k in outlinks[i]:
                    win = windows[k]
                    win.insert(0, outs[k])
                    win.pop()
                    p = cur[k]
                    y = fdc_apply(win, p.taps)
                    z = apply_output_stage(y, y, p.gains, coeff[k])
                    if eq_len:
                        ring = eq_rings[k]
                        ptr = eq_ptr[k]
                        z, ring[ptr] = ring[ptr], z
                        eq_ptr[k] = (ptr + 1) % eq_len
                    delivered[k] = z

            # -- stage the next scenario right after its predecessor -----
            if u % sl == 0 and scen + 1 < n_used:
                nxt = params[scen + 1]
                for i in producers:
                    dists[i].stage_next(
                        [(k, nxt[k].delay) for k in outlinks[i]])
                state = su_apply(replace(state, cycle=u),
                                 cfg.scps[scen + 1])

        counters = {"cycles": cfg.n_cycles, "doppler_commits": commits,
                    "scenarios": scen + 1}
        for d in dists.values():
            for key, val in d.counters.items():
                counters[key] = counters.get(key, 0) + val
        return RunResult(n_cycles=cfg.n_cycles, backend=self.backend,
                         captures=captures, counters=counters)
