"""DC-grid dispatch simulation.

One broadcasting generator puts v_dc plus the modulated frames on the bus,
the signal passes the impairment channel and every load runs its own
receiver. A load obeys CRC-clean messages carrying its address: it draws
the commanded current for the commanded duration starting at the frame's
valid-data instant, then falls back to its idle current.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .channel import ImpairmentConfig, apply_impairments
from .dsp import SampleRateConfig, make_pulse_shape
from .link import count_bit_errors, match_frames
from .rx.receiver import Receiver, ReceiverConfig
from .tx import (FRAME_CHIPS, PAYLOAD_BITS, SYNC_CHIPS, EnergyPacketMessage, PowerSignalConfig,
                 assemble_info, inject_power_signal, message_frame)

log = logging.getLogger(__name__)


class ScenarioError(ValueError):
    """Invalid scenario: carries the offending field path when known."""

    def __init__(self, message: str, field_path: str = ""):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}" if field_path else message)


class CommandOverlapWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LoadSpec:
    name: str
    address: int
    code: int
    initial_current: float = 0.0


@dataclass(frozen=True)
class TxEntry:
    time: float
    message: EnergyPacketMessage
    code: int


@dataclass
class GridScenario:
    loads: list
    tx_schedule: list = field(default_factory=list)
    sim_duration: float = 0.3
    v_dc: float = 15.0
    mod_index: float = 0.02
    impairments: dict = field(default_factory=dict)
    seed: int = 0
    rates: SampleRateConfig = field(default_factory=SampleRateConfig)
    receiver: dict = field(default_factory=dict)
    name: str = "scenario"

    def __post_init__(self):
        self.loads = [ld if isinstance(ld, LoadSpec) else LoadSpec(*ld) for ld in self.loads]
        addrs = [ld.address for ld in self.loads]
        if len(set(addrs)) != len(addrs):
            raise ScenarioError("load addresses must be unique", "loads")
        names = [ld.name for ld in self.loads]
        if len(set(names)) != len(names):
            raise ScenarioError("load names must be unique", "loads")
        by_addr = {ld.address: ld for ld in self.loads}
        sched = []
        for i, ent in enumerate(self.tx_schedule):
            if not isinstance(ent, TxEntry):
                t, msg, *rest = ent
                code = rest[0] if rest else None
                if code is None:
                    if msg.dest_address not in by_addr:
                        raise ScenarioError("no load with this address and no explicit code",
                                            f"tx_schedule[{i}]")
                    code = by_addr[msg.dest_address].code
                ent = TxEntry(float(t), msg, int(code))
            if not 0 <= ent.time < self.sim_duration:
                raise ScenarioError("time outside [0, sim_duration)", f"tx_schedule[{i}].time")
            sched.append(ent)
        self.tx_schedule = sorted(sched, key=lambda e: e.time)
        check_frame_overlap(self.tx_schedule, self.rates)

    @property
    def frame_duration(self) -> float:
        return FRAME_CHIPS * self.rates.tc

    def impairment_config(self) -> ImpairmentConfig:
        return ImpairmentConfig.from_dict(self.impairments, duration=self.sim_duration,
                                          seed=self.seed)

    def receiver_config(self) -> ReceiverConfig:
        return ReceiverConfig(rates=self.rates, **self.receiver)

    def to_dict(self) -> dict:
        d = {"name": self.name, "v_dc": self.v_dc, "mod_index": self.mod_index,
             "sim_duration": self.sim_duration, "seed": int(self.seed),
             "rates": {"chip_rate": self.rates.chip_rate, "fc_carrier": self.rates.fc_carrier,
                       "sps_passband": self.rates.sps_passband},
             "loads": [{"name": ld.name, "address": ld.address, "code": ld.code,
                        "initial_current": ld.initial_current} for ld in self.loads],
             "tx_schedule": [{"time": e.time, "code": e.code,
                              "message": {"dest_address": e.message.dest_address,
                                          "current_setpoint": e.message.current_setpoint,
                                          "duration": e.message.duration}}
                             for e in self.tx_schedule],
             "impairments": dict(self.impairments)}
        if self.receiver:
            d["receiver"] = dict(self.receiver)
        return d

    def digest(self) -> str:
        """sha256 of the canonical JSON form."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


def check_frame_overlap(schedule, rates: SampleRateConfig):
    span = FRAME_CHIPS * rates.tc
    for a, b in zip(schedule, schedule[1:]):
        if b.time < a.time + span:
            raise ScenarioError(f"frame at {b.time:.6f} s overlaps the frame at {a.time:.6f} s "
                                f"(frames last {span * 1e3:.3f} ms)", "tx_schedule")


def _schema(name: str) -> dict:
    return json.loads(resources.files("psdm.schemas").joinpath(name).read_text())


def scenario_from_dict(d: dict, seed: int | None = None) -> GridScenario:
    """Validate against the scenario schema and build a GridScenario."""
    validator = jsonschema.Draft202012Validator(_schema("scenario.schema.json"))
    errors = sorted(validator.iter_errors(d), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        raise ScenarioError(err.message, path.lstrip(".") or "<root>")
    try:
        rates = SampleRateConfig(**d.get("rates", {}))
    except ValueError as exc:
        raise ScenarioError(str(exc), "rates") from None
    loads = [LoadSpec(ld["name"], ld["address"], ld["code"], float(ld.get("initial_current", 0.0)))
             for ld in d["loads"]]
    sched = []
    for i, ent in enumerate(d.get("tx_schedule", [])):
        try:
            msg = EnergyPacketMessage(**ent["message"])
        except ValueError as exc:
            raise ScenarioError(str(exc), f"tx_schedule[{i}].message") from None
        sched.append((ent["time"], msg, ent.get("code")))
    imp = dict(d.get("impairments", {}))
    scen = GridScenario(loads=loads, tx_schedule=sched, sim_duration=float(d["sim_duration"]),
                        v_dc=float(d.get("v_dc", 15.0)), mod_index=float(d.get("mod_index", 0.02)),
                        impairments=imp, seed=int(d.get("seed", 0) if seed is None else seed),
                        rates=rates, receiver=dict(d.get("receiver", {})),
                        name=d.get("name", "scenario"))
    try:
        scen.impairment_config()
    except ValueError as exc:
        raise ScenarioError(str(exc), "impairments") from None
    return scen


def load_scenario(path, seed: int | None = None) -> GridScenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}", str(path)) from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"malformed JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})",
                            str(path)) from None
    if not isinstance(d, dict):
        raise ScenarioError("scenario must be a JSON object", "<root>")
    return scenario_from_dict(d, seed)


def save_scenario(scen: GridScenario, path):
    Path(path).write_text(json.dumps(scen.to_dict(), indent=2) + "\n")


def builtin_scenario(name: str) -> Path:
    """Path of a scenario file shipped with the package (``fig12``, ``loopback``...)."""
    p = resources.files("psdm.scenarios").joinpath(f"{name}.json")
    if not p.is_file():
        raise FileNotFoundError(f"no built-in scenario {name!r}")
    return Path(str(p))


class LoadController:
    """Idle current plus timed setpoint commands; the latest command wins.

    Works on sample indices so pulse lengths are exact: a command of
    ``duration`` ms activated at sample k holds samples
    ``[k, k + round(duration * fs / 1000))``.
    """

    def __init__(self, idle_current: float, fs: float, name: str = ""):
        self.idle = float(idle_current)
        self.fs = fs
        self.name = name
        self.setpoint = self.idle
        self.end = -1

    def pulse_samples(self, msg: EnergyPacketMessage) -> int:
        return int(round(msg.duration * 1e-3 * self.fs))

    def step(self, k: int, msg: EnergyPacketMessage | None = None) -> float:
        """Current drawn at sample ``k``; ``msg`` activates at this sample."""
        if msg is not None:
            if k < self.end:
                warnings.warn(f"load {self.name}: command at sample {k} overrides an active pulse",
                              CommandOverlapWarning, stacklevel=2)
            self.setpoint = msg.current_setpoint * 1e-3
            self.end = k + self.pulse_samples(msg)
        return self.setpoint if k < self.end else self.idle

    def render(self, n: int, commands) -> np.ndarray:
        """Vectorized equivalent of calling :meth:`step` for k = 0..n-1.

        ``commands`` is an iterable of ``(activation_sample, message)``.
        """
        cur = np.full(n, self.idle)
        end = -1
        for k, msg in sorted(commands, key=lambda c: c[0]):
            if k >= n:
                continue
            if k < end:
                warnings.warn(f"load {self.name}: command at sample {k} overrides an active pulse",
                              CommandOverlapWarning, stacklevel=2)
            end = k + self.pulse_samples(msg)
            cur[k:] = self.idle
            cur[k:end] = msg.current_setpoint * 1e-3
        return cur


@dataclass
class LoadEvent:
    load: str
    time: float              # frame-sync detection instant
    activation_time: float   # valid-data instant, current switches here
    message: EnergyPacketMessage
    detection: object = field(repr=False, default=None)


@dataclass
class ScenarioTrace:
    time: np.ndarray
    bus_voltage: np.ndarray
    load_currents: dict
    detections: list
    total_current: np.ndarray
    failed: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict, repr=False)
    frame_report: list = field(default_factory=list)

    @property
    def fs(self) -> float:
        return 1.0 / (self.time[1] - self.time[0])

    @property
    def bit_errors(self) -> int:
        return sum(r["bit_errors"] for r in self.frame_report)

    @property
    def ber(self) -> float:
        n = len(self.frame_report) * PAYLOAD_BITS
        return self.bit_errors / n if n else 0.0

    @property
    def all_decoded(self) -> bool:
        return all(r["decoded"] for r in self.frame_report)

    def energies(self) -> dict:
        span = (self.time[0], self.time[-1] + 1 / self.fs)
        return {name: packet_energy(self, name, span) for name in self.load_currents}

    def summary(self) -> dict:
        return {
            "detections": [{"load": ev.load, "time_s": ev.time,
                            "activation_time_s": ev.activation_time,
                            "message": ev.message.to_dict()} for ev in self.detections],
            "failed_frames": {k: len(v) for k, v in self.failed.items()},
            "frames": self.frame_report,
            "frames_expected": len(self.frame_report),
            "frames_decoded": sum(r["decoded"] for r in self.frame_report),
            "bit_errors": self.bit_errors,
            "ber": self.ber,
            "energy_j": self.energies(),
            "pulses": current_pulses(self),
        }


def packet_energy(trace: ScenarioTrace, load: str, interval) -> float:
    """Sum of v_bus * i_load * dt over samples with t in [t0, t1)."""
    t0, t1 = interval
    if t1 < t0:
        raise ValueError("interval end precedes start")
    sel = (trace.time >= t0) & (trace.time < t1)
    dt = 1.0 / trace.fs
    return float(np.sum(trace.bus_voltage[sel] * trace.load_currents[load][sel]) * dt)


def current_pulses(trace: ScenarioTrace) -> dict:
    """Contiguous runs where each load's current departs from its initial value."""
    out = {}
    for name, cur in trace.load_currents.items():
        changed = np.flatnonzero(np.diff(cur)) + 1
        edges = np.concatenate(([0], changed, [len(cur)]))
        runs = []
        for a, b in zip(edges[:-1], edges[1:]):
            if cur[a] != cur[0]:
                runs.append({"start_s": float(trace.time[a]), "duration_s": (b - a) / trace.fs,
                             "samples": int(b - a), "current_a": float(cur[a])})
        out[name] = runs
    return out


def build_bus_signal(scen: GridScenario):
    """Clean transmitted bus voltage for the scenario's schedule."""
    rates = scen.rates
    pulse = make_pulse_shape(0.5, 8, rates.sps_passband)
    frames = [(e.time, message_frame(e.message, e.code)) for e in scen.tx_schedule]
    info = assemble_info(frames, rates, pulse, scen.sim_duration)
    return inject_power_signal(info, PowerSignalConfig(scen.v_dc, scen.mod_index))


def _fit(x: np.ndarray, n: int, pad: float) -> np.ndarray:
    if len(x) >= n:
        return x[:n]
    return np.concatenate((x, np.full(n - len(x), pad)))


def run_scenario(scen: GridScenario) -> ScenarioTrace:
    rates = scen.rates
    fs = rates.fs_passband
    n = int(round(scen.sim_duration * fs))
    bus = build_bus_signal(scen)
    rx_in = apply_impairments(bus, scen.impairment_config(), rates.chip_rate)
    time = np.arange(n) / fs
    rcfg = scen.receiver_config()

    currents, events, failed, diags = {}, [], {}, {}
    for ld in scen.loads:
        good, diag = Receiver(ld.code, rcfg).process(rx_in)
        diags[ld.name] = diag
        failed[ld.name] = list(diag.failed)
        cmds = []
        for det in good:
            if det.message.dest_address != ld.address:
                continue
            k = int(math.ceil(det.time * fs - 1e-6))
            events.append(LoadEvent(ld.name, det.sync_time, k / fs, det.message, det))
            cmds.append((k, det.message))
        ctrl = LoadController(ld.initial_current, fs, ld.name)
        currents[ld.name] = ctrl.render(n, cmds)
    events.sort(key=lambda e: (e.time, e.load))
    total = np.sum(np.vstack(list(currents.values())), axis=0)

    trace = ScenarioTrace(time=time, bus_voltage=_fit(rx_in.samples, n, scen.v_dc),
                          load_currents=currents, detections=events, total_current=total,
                          failed=failed, diagnostics=diags)
    trace.frame_report = _frame_report(scen, trace)
    return trace


def _frame_report(scen: GridScenario, trace: ScenarioTrace) -> list:
    """Per scheduled frame with a listening load: decoded? bit errors?"""
    tc = scen.rates.tc
    rows = []
    for ent in scen.tx_schedule:
        ld = next((x for x in scen.loads if x.address == ent.message.dest_address), None)
        if ld is None or ld.code != ent.code:
            continue
        (m,) = match_frames([(ent.time, ent.message, ent.code)], ent.code,
                            trace.diagnostics[ld.name], tc)
        errs, _ = count_bit_errors([m])
        rows.append({"load": ld.name, "tx_time_s": ent.time,
                     "expected_sync_s": ent.time + SYNC_CHIPS * tc,
                     "sync_error_chips": m["sync_error_chips"],
                     "decoded": m["message"] == ent.message, "bit_errors": errs})
    return rows
