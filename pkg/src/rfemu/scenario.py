"""Scenario programming pipeline.

Turns a physical scene description into the per-scenario configuration
packets the emulation core consumes: the frame generator propagates
object kinematics at a fixed interval, the solver converts each frame's
geometry into per-link delays, gains, filter taps, and Doppler shifts,
and the packet codec serializes them for the programming interface.
Double-buffered staging (gains switch atomically at scenario boundaries,
never stalling the sample stream) is enforced by ScenarioState.

Scene files are TOML::

    sample_rate_hz = 518e6      # required
    carrier_hz = 10e9           # optional, default 10 GHz
    scenario_length = 4096      # samples per scenario, required
    frame_interval = 1e-3       # seconds, optional

    [path_loss]                 # optional; amplitude ~ (ref_d/d)^exponent
    exponent = 1.0
    reference_distance = 1.0
    reference_gain = 1.0

    [[objects]]
    id = "tx"
    role = "transmitter"        # transmitter | passive | receiver
    position = [0.0, 0.0, 0.0]  # metres
    velocity = [0.0, 0.0, 0.0]  # m/s, optional
    acceleration = [0.0, 0.0, 0.0]   # m/s^2, optional
    orientation = [1.0, 0.0, 0.0, 0.0]  # quaternion (w, x, y, z), optional
    angular_rate = [0.0, 0.0, 0.0]      # rad/s body rates, optional
    antenna = {g_t = 1.0, g_r = 1.0}    # linear amplitude gains, optional
    rcs = {alpha = 1.0, beta = 1.0}     # linear; tables via azimuth_deg

    [[links]]                   # optional; default: every valid pair
    src = "tx"
    dst = "obj1"

    [[excludes]]                # drop pairs from the default graph
    src = "tx"
    dst = "rx"

Azimuth-resolved gains use parallel arrays, e.g.
``rcs = {azimuth_deg = [0, 90, 180, 270], beta = [1.0, 0.5, 0.1, 0.5]}``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

try:
    import tomllib
except ImportError:  # pragma: no cover
    import tomli as tomllib

from .controlpath import FifoGeometry, PRESETS, min_emulable_delay
from .datapath import lagrange4_taps
from .errors import ConfigurationError, ContractViolation, DomainError, \
    PacketParseError
from .golden_model import (
    SPEED_OF_LIGHT, AntennaPattern, GainTable, PathLossModel, RcsProfile,
    closing_speed, direction_angles, doppler_shift_hz,
)
from .numerics import F16, MiniF10, quantize_f10, quantize_f16

__all__ = [
    "ObjectSpec",
    "Scene",
    "ObjectState",
    "Frame",
    "LinkConfig",
    "ScenarioConfigPacket",
    "frame_generate",
    "solve_frame",
    "scp_encode",
    "scp_decode",
    "ScenarioState",
    "su_apply",
    "su_commit",
    "SCP_MAGIC",
    "SCP_VERSION",
]

ROLES = ("transmitter", "passive", "receiver")
DEFAULT_CARRIER_HZ = 10e9
DEFAULT_FRAME_INTERVAL = 1e-3

SCP_MAGIC = b"DPCM"
SCP_VERSION = 1
_HEADER = struct.Struct("<4sHIH")
_LINK = struct.Struct("<HHIH4H4Hd")


# ----------------------------------------------------------------------
# Scene description
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ObjectSpec:
    """One RF object: kinematic initial state plus gain profiles."""

    id: str
    role: str
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    orientation: np.ndarray        # unit quaternion (w, x, y, z)
    angular_rate: np.ndarray       # body rates, rad/s
    rcs: RcsProfile
    antenna: AntennaPattern

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigurationError(
                f"object {self.id}: role {self.role!r} not one of {ROLES}")


@dataclass(frozen=True)
class Scene:
    """Objects, carrier and sampling parameters, and the link graph."""

    objects: Tuple[ObjectSpec, ...]
    sample_rate_hz: float
    scenario_length: int
    carrier_hz: float = DEFAULT_CARRIER_HZ
    frame_interval: float = DEFAULT_FRAME_INTERVAL
    path_loss: PathLossModel = field(default_factory=PathLossModel)
    links: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("object ids must be unique")
        roles = [o.role for o in self.objects]
        if "transmitter" not in roles or "receiver" not in roles:
            raise ConfigurationError(
                "scene needs at least one transmitter and one receiver")
        if self.sample_rate_hz <= 0 or self.scenario_length < 1:
            raise ConfigurationError(
                "sample rate must be positive and scenario length >= 1")
        if self.frame_interval <= 0:
            raise ConfigurationError("frame interval must be positive")
        if not self.links:
            object.__setattr__(self, "links", self.default_links())
        by_id = {o.id: o for o in self.objects}
        for src, dst in self.links:
            if src not in by_id or dst not in by_id:
                raise ConfigurationError(f"link {src}->{dst}: unknown object")
            if by_id[src].role == "receiver":
                raise ConfigurationError(
                    f"link {src}->{dst}: receivers have no outputs")
            if by_id[dst].role == "transmitter":
                raise ConfigurationError(
                    f"link {src}->{dst}: transmitters have no inputs")
            if src == dst:
                raise ConfigurationError(f"link {src}->{dst}: self loop")

    def default_links(self) -> Tuple[Tuple[str, str], ...]:
        out = []
        for src in self.objects:
            if src.role == "receiver":
                continue
            for dst in self.objects:
                if dst is src or dst.role == "transmitter":
                    continue
                out.append((src.id, dst.id))
        return tuple(out)

    def object_index(self, oid: str) -> int:
        for k, o in enumerate(self.objects):
            if o.id == oid:
                return k
        raise ConfigurationError(f"unknown object id {oid!r}")

    def __getitem__(self, oid: str) -> ObjectSpec:
        for o in self.objects:
            if o.id == oid:
                return o
        raise ConfigurationError(f"unknown object id {oid!r}")

    @classmethod
    def from_toml(cls, path) -> "Scene":
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "Scene":
        try:
            sample_rate = float(raw["sample_rate_hz"])
            scen_len = int(raw["scenario_length"])
        except KeyError as exc:
            raise ConfigurationError(
                f"scene is missing required key {exc.args[0]!r}") from None
        objects = tuple(_parse_object(o) for o in raw.get("objects", []))
        pl = raw.get("path_loss", {})
        scene = cls(
            objects=objects,
            sample_rate_hz=sample_rate,
            scenario_length=scen_len,
            carrier_hz=float(raw.get("carrier_hz", DEFAULT_CARRIER_HZ)),
            frame_interval=float(raw.get("frame_interval",
                                         DEFAULT_FRAME_INTERVAL)),
            path_loss=PathLossModel(
                exponent=float(pl.get("exponent", 1.0)),
                reference_distance=float(pl.get("reference_distance", 1.0)),
                reference_gain=float(pl.get("reference_gain", 1.0))),
            links=tuple((e["src"], e["dst"]) for e in raw.get("links", [])),
        )
        excludes = {(e["src"], e["dst"]) for e in raw.get("excludes", [])}
        if excludes:
            scene = replace(scene, links=tuple(
                l for l in scene.links if l not in excludes))
        return scene


def _vec3(raw, default=(0.0, 0.0, 0.0), name="vector"):
    v = np.asarray(raw if raw is not None else default, dtype=float)
    if v.shape != (3,):
        raise ConfigurationError(f"{name} must have 3 components")
    return v


def _gain_table(spec, key, default):
    if spec is None or key not in spec:
        return GainTable.constant(default)
    vals = spec[key]
    if isinstance(vals, (int, float)):
        return GainTable.constant(float(vals))
    az = np.deg2rad(np.asarray(spec["azimuth_deg"], dtype=float))
    return GainTable(az, np.asarray(vals, dtype=float))


def _parse_object(raw: dict) -> ObjectSpec:
    try:
        oid, role = raw["id"], raw["role"]
    except KeyError as exc:
        raise ConfigurationError(
            f"object is missing required key {exc.args[0]!r}") from None
    q = np.asarray(raw.get("orientation", (1.0, 0.0, 0.0, 0.0)), dtype=float)
    if q.shape != (4,):
        raise ConfigurationError(f"object {oid}: orientation needs 4 parts")
    n = float(np.linalg.norm(q))
    if n == 0.0:
        raise ConfigurationError(f"object {oid}: zero quaternion")
    rcs_raw = raw.get("rcs")
    ant_raw = raw.get("antenna")
    return ObjectSpec(
        id=oid, role=role,
        position=_vec3(raw.get("position"), name=f"object {oid} position"),
        velocity=_vec3(raw.get("velocity"), name=f"object {oid} velocity"),
        acceleration=_vec3(raw.get("acceleration"),
                           name=f"object {oid} acceleration"),
        orientation=q / n,
        angular_rate=_vec3(raw.get("angular_rate"),
                           name=f"object {oid} angular_rate"),
        rcs=RcsProfile(alpha=_gain_table(rcs_raw, "alpha", 1.0),
                       beta=_gain_table(rcs_raw, "beta", 1.0)),
        antenna=AntennaPattern(g_t=_gain_table(ant_raw, "g_t", 1.0),
                               g_r=_gain_table(ant_raw, "g_r", 1.0)),
    )


# ----------------------------------------------------------------------
# Frames
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ObjectState:
    """Kinematic state of one object at a frame timestamp."""

    position: np.ndarray
    velocity: np.ndarray
    orientation: np.ndarray


@dataclass(frozen=True)
class Frame:
    """Snapshot of every object's kinematics at one timestamp."""

    timestamp: float
    states: Dict[str, ObjectState]


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def _quat_from_rotvec(rv: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(rv))
    if angle == 0.0:
        return np.array([1.0, 0.0, 0.0, 0.0])
    axis = rv / angle
    return np.concatenate(([math.cos(angle / 2)],
                           axis * math.sin(angle / 2)))


def frame_generate(scene: Scene, n_frames: int) -> List[Frame]:
    """Propagate scene kinematics to uniformly spaced frames.

    Positions follow p + v*t + a*t^2/2 in closed form; orientations
    integrate each object's constant body rate.
    """
    if n_frames < 1:
        raise ConfigurationError("need at least one frame")
    frames = []
    for k in range(n_frames):
        t = k * scene.frame_interval
        states = {}
        for o in scene.objects:
            q = _quat_mul(o.orientation, _quat_from_rotvec(o.angular_rate * t))
            states[o.id] = ObjectState(
                position=o.position + o.velocity * t
                + 0.5 * o.acceleration * t * t,
                velocity=o.velocity + o.acceleration * t,
                orientation=q / np.linalg.norm(q))
        frames.append(Frame(timestamp=t, states=states))
    return frames


# ----------------------------------------------------------------------
# Link solving
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class LinkConfig:
    """Wire parameters of one directed link for one scenario.

    ``src``/``dst`` are object indices in scene order. The producer-side
    gain is pre-multiplied by the path loss: ``g_t`` carries the antenna
    gain times rho for transmitter sources, ``beta_rho`` the reflectivity
    times rho for passive sources; the inactive one is zero. Doppler is
    stored in MHz (positive for closing geometry).
    """

    src: int
    dst: int
    buffer_delay: int
    mu_q16: int
    taps: Tuple[MiniF10, MiniF10, MiniF10, MiniF10]
    alpha: F16
    beta_rho: F16
    g_t: F16
    g_r: F16
    doppler_mhz: float

    @property
    def mu(self) -> float:
        return self.mu_q16 / 65536.0


@dataclass(frozen=True)
class ScenarioConfigPacket:
    """Everything the emulator needs for one scenario, all links."""

    scenario_id: int
    links: Tuple[LinkConfig, ...]


def solve_frame(frame: Frame, scene: Scene,
                geometry: FifoGeometry = PRESETS["asic4"],
                scenario_id: int = 0, strict: bool = True,
                ) -> ScenarioConfigPacket:
    """Solve one frame's geometry into a scenario configuration packet.

    Each link's path length becomes a sample delay split at Q0.16 into
    the integer buffer residency (less the compute pipeline) and the
    fractional part realized by the interpolation taps; gains are looked
    up at the line-of-sight angles in each object's local frame and the
    producer side is lumped with the path loss.

    With ``strict`` set (the default), a link shorter than the minimum
    emulable range raises; otherwise it is solved anyway and the core
    will mute it.
    """
    fs = scene.sample_rate_hz
    L = geometry.compute_latency
    min_total = min_emulable_delay(geometry.bank_depth, L)
    links = []
    for src_id, dst_id in scene.links:
        src, dst = scene[src_id], scene[dst_id]
        a, b = frame.states[src_id], frame.states[dst_id]
        d = float(np.linalg.norm(b.position - a.position))
        if d <= 0.0:
            raise DomainError(
                f"link {src_id}->{dst_id}: objects are coincident")
        q = round(d * fs / SPEED_OF_LIGHT * 65536)
        total, mu_q16 = q >> 16, q & 0xFFFF
        if strict and total < min_total:
            raise DomainError(
                f"link {src_id}->{dst_id}: distance {d:.3f} m spans {total} "
                f"samples, below minimum emulable range of {min_total} "
                f"({min_total * SPEED_OF_LIGHT / fs:.1f} m at this rate)")
        theta_out = direction_angles(a.position, b.position, a.orientation)
        theta_in = direction_angles(b.position, a.position, b.orientation)
        rho = scene.path_loss.rho_at_distance(d)
        if src.role == "transmitter":
            g_t = quantize_f16(src.antenna.g_t(theta_out) * rho)
            beta_rho = F16(0)
        else:
            g_t = F16(0)
            beta_rho = quantize_f16(src.rcs.beta(theta_out) * rho)
        if dst.role == "receiver":
            alpha, g_r = F16(0), quantize_f16(dst.antenna.g_r(theta_in))
        else:
            alpha, g_r = quantize_f16(dst.rcs.alpha(theta_in)), F16(0)
        fc = closing_speed(a.position, a.velocity, b.position, b.velocity)
        links.append(LinkConfig(
            src=scene.object_index(src_id), dst=scene.object_index(dst_id),
            buffer_delay=max(total - L, 0), mu_q16=mu_q16,
            taps=tuple(quantize_f10(t)
                       for t in lagrange4_taps(mu_q16 / 65536.0)),
            alpha=alpha, beta_rho=beta_rho, g_t=g_t, g_r=g_r,
            doppler_mhz=doppler_shift_hz(scene.carrier_hz, fc) / 1e6))
    return ScenarioConfigPacket(scenario_id=scenario_id, links=tuple(links))


# ----------------------------------------------------------------------
# Packet codec
# ----------------------------------------------------------------------

def scp_encode(scp: ScenarioConfigPacket) -> bytes:
    """Serialize a packet to its little-endian wire form."""
    if not 0 <= scp.scenario_id <= 0xFFFFFFFF:
        raise ConfigurationError("scenario id out of u32 range")
    if len(scp.links) > 0xFFFF:
        raise ConfigurationError("too many links for one packet")
    out = [_HEADER.pack(SCP_MAGIC, SCP_VERSION, scp.scenario_id,
                        len(scp.links))]
    for ln in scp.links:
        if not 0 <= ln.buffer_delay <= 0xFFFFFFFF:
            raise ConfigurationError(
                f"link {ln.src}->{ln.dst}: buffer delay out of u32 range")
        if not 0 <= ln.mu_q16 <= 0xFFFF:
            raise ConfigurationError(
                f"link {ln.src}->{ln.dst}: mu out of Q0.16 range")
        out.append(_LINK.pack(
            ln.src, ln.dst, ln.buffer_delay, ln.mu_q16,
            *(t.bits for t in ln.taps),
            ln.alpha.bits, ln.beta_rho.bits, ln.g_t.bits, ln.g_r.bits,
            ln.doppler_mhz))
    return b"".join(out)


def scp_decode(data: bytes) -> ScenarioConfigPacket:
    """Parse a packet; malformed input raises with the failing offset."""
    if len(data) < _HEADER.size:
        raise PacketParseError(
            f"truncated header: {len(data)} of {_HEADER.size} bytes",
            len(data))
    magic, version, scenario_id, n = _HEADER.unpack_from(data, 0)
    if magic != SCP_MAGIC:
        raise PacketParseError(f"bad magic {magic!r}", 0)
    if version != SCP_VERSION:
        raise PacketParseError(f"unsupported version {version}", 4)
    expected = _HEADER.size + n * _LINK.size
    if len(data) < expected:
        raise PacketParseError(
            f"truncated links: {len(data)} of {expected} bytes", len(data))
    if len(data) > expected:
        raise PacketParseError(
            f"{len(data) - expected} trailing bytes", expected)
    links = []
    for k in range(n):
        off = _HEADER.size + k * _LINK.size
        (src, dst, delay, mu_q16, t0, t1, t2, t3,
         a_bits, br_bits, gt_bits, gr_bits, dop) = _LINK.unpack_from(data, off)
        for label, bits in (("tap", t0), ("tap", t1), ("tap", t2),
                            ("tap", t3)):
            if bits > 0x3FF:
                raise PacketParseError(f"{label} bits exceed 10 bits", off)
        links.append(LinkConfig(
            src=src, dst=dst, buffer_delay=delay, mu_q16=mu_q16,
            taps=(MiniF10(t0), MiniF10(t1), MiniF10(t2), MiniF10(t3)),
            alpha=F16(a_bits), beta_rho=F16(br_bits),
            g_t=F16(gt_bits), g_r=F16(gr_bits), doppler_mhz=dop))
    return ScenarioConfigPacket(scenario_id=scenario_id, links=tuple(links))


# ----------------------------------------------------------------------
# Scenario-update staging
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioState:
    """Double-buffered configuration state of the emulation core.

    ``current`` drives the stream now; ``staged`` waits for the next
    boundary. Staging must happen while the previous scenario is still
    running, so the swap never stalls the stream.
    """

    cycle: int
    boundary: int
    scenario_length: int
    current: ScenarioConfigPacket
    staged: Optional[ScenarioConfigPacket] = None


def su_apply(state: ScenarioState, scp: ScenarioConfigPacket,
             ) -> ScenarioState:
    """Stage a packet for the upcoming boundary.

    Raises if the boundary has already passed (late staging would stall
    the stream waiting for configuration).
    """
    if state.cycle >= state.boundary:
        raise ContractViolation(
            f"scenario {scp.scenario_id} staged at cycle {state.cycle}, "
            f"after its boundary at {state.boundary}")
    return replace(state, staged=scp)


def su_commit(state: ScenarioState) -> ScenarioState:
    """Adopt the staged packet at a boundary; atomic, never stalls."""
    if state.cycle != state.boundary:
        raise ContractViolation(
            f"commit at cycle {state.cycle} but boundary is "
            f"{state.boundary}")
    if state.staged is None:
        raise ContractViolation(
            f"boundary at cycle {state.boundary} reached with no staged "
            "configuration")
    return replace(state, current=state.staged, staged=None,
                   boundary=state.boundary + state.scenario_length)
