"""Scenario files: what gets simulated, as plain dataclasses plus JSON.

A scenario document carries the schema tag ``scenario/1``.  Loading is strict:
unknown keys, missing keys or out-of-range values raise ScenarioError with the
offending key path, so a typo in a hand-written file fails loudly instead of
silently running a different experiment.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources

from . import d2d, phy, regulator
from .energy import PowerProfile

SCENARIO_SCHEMA = "scenario/1"

DEFAULT_CHANNELS_HZ = [868_100_000, 868_300_000, 868_500_000]
DEFAULT_RX2_FREQ_HZ = 869_525_000
DEFAULT_RX2_DR = 3


class ScenarioError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class RadioSpec:
    pl0_db: float = 127.5
    d0_m: float = 1000.0
    exponent: float = 2.9
    capture_threshold_db: float = 6.0
    d2d_frame_loss_prob: float = 0.0


@dataclass
class DeviceSpec:
    eid: str
    position: tuple[float, float] = (0.0, 0.0)
    dev_addr: int | None = None
    period_s: float = 300.0
    phase_s: float = 0.0
    jitter_frac: float = 0.01
    dr: int = 0
    tx_power_dbm: int = 14
    app_payload_bytes: int = 12
    channels_hz: list[int] = field(default_factory=lambda: list(DEFAULT_CHANNELS_HZ))
    max_uplinks: int | None = None
    prejoined: bool = True


@dataclass
class GatewaySpec:
    eid: str
    position: tuple[float, float] = (0.0, 0.0)
    channels_hz: list[int] = field(default_factory=lambda: list(DEFAULT_CHANNELS_HZ))
    tx_power_dbm: int = 14


@dataclass
class TransferSpec:
    source: str
    dest: str
    total_bytes: int
    at_s: float = 0.0
    port: int = 1


@dataclass
class D2DDirectiveSpec:
    at_s: float
    initiator: str
    scanner: str
    freq_hz: int
    dr: int
    power_dbm: int = 14
    t1_initiator_s: float = 15.0
    t1_scanner_s: float = 0.0
    t2_s: float = 30.0
    exchange: d2d.ExchangeParams = field(default_factory=d2d.ExchangeParams)


@dataclass
class Scenario:
    name: str
    end_time_s: float
    description: str = ""
    seed: int = 0
    rx2_freq_hz: int = DEFAULT_RX2_FREQ_HZ
    rx2_dr: int = DEFAULT_RX2_DR
    receive_delay1_s: float = 1.0
    receive_delay2_s: float = 2.0
    preamble_detect_symbols: int = 8
    backhaul_delay_s: float = 0.05
    duty_cycle_enforced: bool = True
    duty_cycle_applies_to_d2d: bool = True
    join_success_prob: float = 1.0
    radio: RadioSpec = field(default_factory=RadioSpec)
    bands: tuple[regulator.SubBand, ...] | None = None
    sensitivity_dbm: dict[int, float] | None = None
    profile: PowerProfile | None = None
    devices: list[DeviceSpec] = field(default_factory=list)
    gateways: list[GatewaySpec] = field(default_factory=list)
    transfers: list[TransferSpec] = field(default_factory=list)
    d2d_directives: list[D2DDirectiveSpec] = field(default_factory=list)

    @property
    def effective_bands(self) -> tuple[regulator.SubBand, ...]:
        return self.bands if self.bands is not None else regulator.DEFAULT_BANDS

    # -- validation -------------------------------------------------------

    def validate(self) -> "Scenario":
        if not self.name:
            raise ScenarioError("name", "must be a non-empty string")
        if not self.end_time_s > 0:
            raise ScenarioError("end_time_s", "must be positive")
        if self.bands is not None:
            try:
                regulator.validate_bands(self.bands)
            except regulator.RegulatorError as exc:
                raise ScenarioError("bands", str(exc)) from exc
        if self.sensitivity_dbm is not None:
            for dr in self.sensitivity_dbm:
                if not 0 <= dr <= 7:
                    raise ScenarioError("sensitivity_dbm", f"DR{dr} is not defined")
        if not 0 <= self.rx2_dr <= 7:
            raise ScenarioError("rx2_dr", f"DR{self.rx2_dr} is not defined")
        self._check_freq("rx2_freq_hz", self.rx2_freq_hz)
        if self.receive_delay1_s <= 0:
            raise ScenarioError("receive_delay1_s", "must be positive")
        if self.receive_delay2_s <= self.receive_delay1_s:
            raise ScenarioError("receive_delay2_s", "second window must open after the first")
        if self.preamble_detect_symbols < 1:
            raise ScenarioError("preamble_detect_symbols", "must be at least 1")
        if self.backhaul_delay_s < 0:
            raise ScenarioError("backhaul_delay_s", "must be non-negative")
        if not 0.0 <= self.join_success_prob <= 1.0:
            raise ScenarioError("join_success_prob", "must lie in [0, 1]")
        if not 0.0 <= self.radio.d2d_frame_loss_prob < 1.0:
            raise ScenarioError("radio.d2d_frame_loss_prob", "must lie in [0, 1)")

        eids: set[str] = set()
        for i, dev in enumerate(self.devices):
            path = f"devices[{i}]"
            if not dev.eid:
                raise ScenarioError(f"{path}.eid", "must be a non-empty string")
            if dev.eid in eids:
                raise ScenarioError(f"{path}.eid", f"duplicate id {dev.eid!r}")
            eids.add(dev.eid)
            if not all(math.isfinite(v) for v in dev.position):
                raise ScenarioError(f"{path}.position", "must be finite")
            if not dev.period_s > 0:
                raise ScenarioError(f"{path}.period_s", "must be positive")
            if not 0.0 <= dev.jitter_frac < 0.5:
                raise ScenarioError(f"{path}.jitter_frac", "must lie in [0, 0.5)")
            if not 0 <= dev.dr <= 7:
                raise ScenarioError(f"{path}.dr", f"DR{dev.dr} is not defined")
            try:
                phy.check_tx_power(dev.tx_power_dbm)
            except phy.PhyError as exc:
                raise ScenarioError(f"{path}.tx_power_dbm", str(exc)) from exc
            limit = phy.data_rate(dev.dr).max_app_payload_bytes
            if not 0 <= dev.app_payload_bytes <= limit:
                raise ScenarioError(
                    f"{path}.app_payload_bytes",
                    f"{dev.app_payload_bytes} exceeds the DR{dev.dr} limit of {limit}")
            if not dev.channels_hz:
                raise ScenarioError(f"{path}.channels_hz", "needs at least one channel")
            for j, freq in enumerate(dev.channels_hz):
                self._check_freq(f"{path}.channels_hz[{j}]", freq)
            if dev.max_uplinks is not None and dev.max_uplinks < 0:
                raise ScenarioError(f"{path}.max_uplinks", "must be non-negative")
            if dev.prejoined and dev.dev_addr is None:
                raise ScenarioError(f"{path}.dev_addr", "a pre-joined device needs an address")
        addrs = [d.dev_addr for d in self.devices if d.dev_addr is not None]
        if len(addrs) != len(set(addrs)):
            raise ScenarioError("devices", "device addresses must be unique")

        for i, gw in enumerate(self.gateways):
            path = f"gateways[{i}]"
            if not gw.eid:
                raise ScenarioError(f"{path}.eid", "must be a non-empty string")
            if gw.eid in eids:
                raise ScenarioError(f"{path}.eid", f"duplicate id {gw.eid!r}")
            eids.add(gw.eid)
            if not all(math.isfinite(v) for v in gw.position):
                raise ScenarioError(f"{path}.position", "must be finite")
            if not gw.channels_hz:
                raise ScenarioError(f"{path}.channels_hz", "needs at least one channel")
            for j, freq in enumerate(gw.channels_hz):
                self._check_freq(f"{path}.channels_hz[{j}]", freq)

        device_ids = {d.eid for d in self.devices}
        for i, tr in enumerate(self.transfers):
            path = f"transfers[{i}]"
            for endpoint in ("source", "dest"):
                if getattr(tr, endpoint) not in device_ids:
                    raise ScenarioError(f"{path}.{endpoint}",
                                        f"unknown device {getattr(tr, endpoint)!r}")
            if tr.source == tr.dest:
                raise ScenarioError(f"{path}.dest", "source and dest must differ")
            if not tr.total_bytes > 0:
                raise ScenarioError(f"{path}.total_bytes", "must be positive")
            if tr.at_s < 0:
                raise ScenarioError(f"{path}.at_s", "must be non-negative")

        for i, dd in enumerate(self.d2d_directives):
            path = f"d2d_directives[{i}]"
            for endpoint in ("initiator", "scanner"):
                if getattr(dd, endpoint) not in device_ids:
                    raise ScenarioError(f"{path}.{endpoint}",
                                        f"unknown device {getattr(dd, endpoint)!r}")
            if dd.initiator == dd.scanner:
                raise ScenarioError(f"{path}.scanner", "initiator and scanner must differ")
            if dd.at_s < 0:
                raise ScenarioError(f"{path}.at_s", "must be non-negative")
            self._check_freq(f"{path}.freq_hz", dd.freq_hz)
            if not 0 <= dd.dr <= 7:
                raise ScenarioError(f"{path}.dr", f"DR{dd.dr} is not defined")
            try:
                # a throwaway encode runs the wire-level range checks
                d2d.encode_setup(d2d.D2DSetupCommand(
                    role=d2d.Role.SCANNER, freq_hz=dd.freq_hz, dr=dd.dr,
                    power_dbm=dd.power_dbm, t1_s=dd.t1_scanner_s, t2_s=dd.t2_s,
                    peer_addr=0))
                d2d.encode_setup(d2d.D2DSetupCommand(
                    role=d2d.Role.INITIATOR, freq_hz=dd.freq_hz, dr=dd.dr,
                    power_dbm=dd.power_dbm, t1_s=dd.t1_initiator_s, t2_s=dd.t2_s,
                    peer_addr=0))
            except (d2d.D2DCodecError, d2d.D2DProtocolError) as exc:
                raise ScenarioError(path, str(exc)) from exc
        return self

    def _check_freq(self, path: str, freq_hz: int) -> None:
        try:
            regulator.classify(freq_hz, self.effective_bands)
        except regulator.RegulatorError as exc:
            raise ScenarioError(path, str(exc)) from exc

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["schema"] = SCENARIO_SCHEMA
        for dev in doc["devices"]:
            dev["position"] = list(dev["position"])
        for gw in doc["gateways"]:
            gw["position"] = list(gw["position"])
        if self.bands is None:
            doc.pop("bands")
        else:
            doc["bands"] = [dict(ident=b.ident, low_hz=b.low_hz, high_hz=b.high_hz,
                                 duty_cycle_limit=b.duty_cycle_limit,
                                 max_erp_dbm=b.max_erp_dbm) for b in self.bands]
        if self.sensitivity_dbm is None:
            doc.pop("sensitivity_dbm")
        else:
            doc["sensitivity_dbm"] = {str(k): v for k, v in self.sensitivity_dbm.items()}
        if self.profile is None:
            doc.pop("profile")
        else:
            doc["profile"] = self.profile.to_dict()
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        if not isinstance(doc, dict):
            raise ScenarioError("$", "scenario document must be a JSON object")
        schema = doc.get("schema")
        if schema != SCENARIO_SCHEMA:
            raise ScenarioError("schema", f"expected {SCENARIO_SCHEMA!r}, got {schema!r}")
        top = dict(doc)
        top.pop("schema")
        scn = cls(
            name=_take(top, "name", str, "$"),
            end_time_s=_take_number(top, "end_time_s", "$"),
            description=_take(top, "description", str, "$", ""),
            seed=_take(top, "seed", int, "$", 0),
            rx2_freq_hz=_take(top, "rx2_freq_hz", int, "$", DEFAULT_RX2_FREQ_HZ),
            rx2_dr=_take(top, "rx2_dr", int, "$", DEFAULT_RX2_DR),
            receive_delay1_s=_take_number(top, "receive_delay1_s", "$", 1.0),
            receive_delay2_s=_take_number(top, "receive_delay2_s", "$", 2.0),
            preamble_detect_symbols=_take(top, "preamble_detect_symbols", int, "$", 8),
            backhaul_delay_s=_take_number(top, "backhaul_delay_s", "$", 0.05),
            duty_cycle_enforced=_take(top, "duty_cycle_enforced", bool, "$", True),
            duty_cycle_applies_to_d2d=_take(top, "duty_cycle_applies_to_d2d", bool, "$", True),
            join_success_prob=_take_number(top, "join_success_prob", "$", 1.0),
            radio=_parse_radio(top.pop("radio", {})),
            bands=_parse_bands(top.pop("bands", None)),
            sensitivity_dbm=_parse_sensitivity(top.pop("sensitivity_dbm", None)),
            profile=_parse_profile(top.pop("profile", None)),
            devices=[_parse_device(d, f"devices[{i}]")
                     for i, d in enumerate(top.pop("devices", []))],
            gateways=[_parse_gateway(g, f"gateways[{i}]")
                      for i, g in enumerate(top.pop("gateways", []))],
            transfers=[_parse_transfer(t, f"transfers[{i}]")
                       for i, t in enumerate(top.pop("transfers", []))],
            d2d_directives=[_parse_directive(d, f"d2d_directives[{i}]")
                            for i, d in enumerate(top.pop("d2d_directives", []))],
        )
        if top:
            raise ScenarioError(sorted(top)[0], "unknown key")
        return scn.validate()

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError("$", f"not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


# -- parsing helpers -----------------------------------------------------

_MISSING = object()


def _take(doc: dict, key: str, typ, path: str, default=_MISSING):
    if key not in doc:
        if default is _MISSING:
            raise ScenarioError(_join(path, key), "missing required key")
        return default
    value = doc.pop(key)
    if typ is int and isinstance(value, bool):
        raise ScenarioError(_join(path, key), "expected an integer, got a boolean")
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, typ):
        raise ScenarioError(_join(path, key), f"expected {typ.__name__}, got {type(value).__name__}")
    return value


def _take_number(doc: dict, key: str, path: str, default=_MISSING) -> float:
    return _take(doc, key, float, path, default)


def _join(path: str, key: str) -> str:
    return key if path == "$" else f"{path}.{key}"


def _parse_position(doc: dict, path: str) -> tuple[float, float]:
    raw = doc.pop("position", [0.0, 0.0])
    if (not isinstance(raw, (list, tuple)) or len(raw) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw)):
        raise ScenarioError(f"{path}.position", "expected [x_m, y_m]")
    return (float(raw[0]), float(raw[1]))


def _parse_channels(doc: dict, path: str) -> list[int]:
    raw = doc.pop("channels_hz", list(DEFAULT_CHANNELS_HZ))
    if not isinstance(raw, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in raw):
        raise ScenarioError(f"{path}.channels_hz", "expected a list of integer frequencies")
    return list(raw)


def _parse_radio(doc: dict) -> RadioSpec:
    if not isinstance(doc, dict):
        raise ScenarioError("radio", "expected an object")
    doc = dict(doc)
    spec = RadioSpec(
        pl0_db=_take_number(doc, "pl0_db", "radio", 127.5),
        d0_m=_take_number(doc, "d0_m", "radio", 1000.0),
        exponent=_take_number(doc, "exponent", "radio", 2.9),
        capture_threshold_db=_take_number(doc, "capture_threshold_db", "radio", 6.0),
        d2d_frame_loss_prob=_take_number(doc, "d2d_frame_loss_prob", "radio", 0.0),
    )
    if doc:
        raise ScenarioError(_join("radio", sorted(doc)[0]), "unknown key")
    return spec


def _parse_bands(raw) -> tuple[regulator.SubBand, ...] | None:
    if raw is None:
        return None
    if not isinstance(raw, list) or not raw:
        raise ScenarioError("bands", "expected a non-empty list of sub-band objects")
    bands = []
    for i, item in enumerate(raw):
        path = f"bands[{i}]"
        if not isinstance(item, dict):
            raise ScenarioError(path, "expected an object")
        item = dict(item)
        try:
            band = regulator.SubBand(
                ident=_take(item, "ident", str, path),
                low_hz=_take(item, "low_hz", int, path),
                high_hz=_take(item, "high_hz", int, path),
                duty_cycle_limit=_take_number(item, "duty_cycle_limit", path),
                max_erp_dbm=_take_number(item, "max_erp_dbm", path, 14.0),
            )
        except regulator.RegulatorError as exc:
            raise ScenarioError(path, str(exc)) from exc
        if item:
            raise ScenarioError(_join(path, sorted(item)[0]), "unknown key")
        bands.append(band)
    return tuple(bands)


def _parse_sensitivity(raw) -> dict[int, float] | None:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ScenarioError("sensitivity_dbm", "expected an object of DR index to dBm")
    out = {}
    for key, value in raw.items():
        try:
            dr = int(key)
        except (TypeError, ValueError):
            raise ScenarioError("sensitivity_dbm", f"bad DR key {key!r}") from None
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ScenarioError("sensitivity_dbm", f"DR{dr}: expected a number")
        out[dr] = float(value)
    return out


def _parse_profile(raw) -> PowerProfile | None:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ScenarioError("profile", "expected an object")
    try:
        return PowerProfile.from_dict(raw)
    except (KeyError, TypeError) as exc:
        raise ScenarioError("profile", f"bad power profile: {exc}") from exc


def _parse_device(doc: dict, path: str) -> DeviceSpec:
    if not isinstance(doc, dict):
        raise ScenarioError(path, "expected an object")
    doc = dict(doc)
    dev_addr = doc.pop("dev_addr", None)
    if dev_addr is not None and (not isinstance(dev_addr, int) or isinstance(dev_addr, bool)):
        raise ScenarioError(f"{path}.dev_addr", "expected an integer or null")
    max_uplinks = doc.pop("max_uplinks", None)
    if max_uplinks is not None and (not isinstance(max_uplinks, int) or isinstance(max_uplinks, bool)):
        raise ScenarioError(f"{path}.max_uplinks", "expected an integer or null")
    spec = DeviceSpec(
        eid=_take(doc, "eid", str, path),
        position=_parse_position(doc, path),
        dev_addr=dev_addr,
        period_s=_take_number(doc, "period_s", path, 300.0),
        phase_s=_take_number(doc, "phase_s", path, 0.0),
        jitter_frac=_take_number(doc, "jitter_frac", path, 0.01),
        dr=_take(doc, "dr", int, path, 0),
        tx_power_dbm=_take(doc, "tx_power_dbm", int, path, 14),
        app_payload_bytes=_take(doc, "app_payload_bytes", int, path, 12),
        channels_hz=_parse_channels(doc, path),
        max_uplinks=max_uplinks,
        prejoined=_take(doc, "prejoined", bool, path, True),
    )
    if doc:
        raise ScenarioError(_join(path, sorted(doc)[0]), "unknown key")
    return spec


def _parse_gateway(doc: dict, path: str) -> GatewaySpec:
    if not isinstance(doc, dict):
        raise ScenarioError(path, "expected an object")
    doc = dict(doc)
    spec = GatewaySpec(
        eid=_take(doc, "eid", str, path),
        position=_parse_position(doc, path),
        channels_hz=_parse_channels(doc, path),
        tx_power_dbm=_take(doc, "tx_power_dbm", int, path, 14),
    )
    if doc:
        raise ScenarioError(_join(path, sorted(doc)[0]), "unknown key")
    return spec


def _parse_transfer(doc: dict, path: str) -> TransferSpec:
    if not isinstance(doc, dict):
        raise ScenarioError(path, "expected an object")
    doc = dict(doc)
    spec = TransferSpec(
        source=_take(doc, "source", str, path),
        dest=_take(doc, "dest", str, path),
        total_bytes=_take(doc, "total_bytes", int, path),
        at_s=_take_number(doc, "at_s", path, 0.0),
        port=_take(doc, "port", int, path, 1),
    )
    if doc:
        raise ScenarioError(_join(path, sorted(doc)[0]), "unknown key")
    return spec


def _parse_exchange(doc: dict, path: str) -> d2d.ExchangeParams:
    if not isinstance(doc, dict):
        raise ScenarioError(path, "expected an object")
    doc = dict(doc)
    try:
        params = d2d.ExchangeParams(
            data_packets=_take(doc, "data_packets", int, path, 10),
            data_payload_bytes=_take(doc, "data_payload_bytes", int, path, 240),
            ack_payload_bytes=_take(doc, "ack_payload_bytes", int, path, 10),
            turnaround_s=_take_number(doc, "turnaround_s", path, 0.05),
            guard_s=_take_number(doc, "guard_s", path, d2d.NO_REPLY_GUARD_S),
            retry_limit=_take(doc, "retry_limit", int, path, d2d.DEFAULT_RETRY_LIMIT),
            command_latency_s=_take_number(doc, "command_latency_s", path, 0.0),
        )
    except d2d.D2DProtocolError as exc:
        raise ScenarioError(path, str(exc)) from exc
    if doc:
        raise ScenarioError(_join(path, sorted(doc)[0]), "unknown key")
    return params


def _parse_directive(doc: dict, path: str) -> D2DDirectiveSpec:
    if not isinstance(doc, dict):
        raise ScenarioError(path, "expected an object")
    doc = dict(doc)
    spec = D2DDirectiveSpec(
        at_s=_take_number(doc, "at_s", path),
        initiator=_take(doc, "initiator", str, path),
        scanner=_take(doc, "scanner", str, path),
        freq_hz=_take(doc, "freq_hz", int, path),
        dr=_take(doc, "dr", int, path),
        power_dbm=_take(doc, "power_dbm", int, path, 14),
        t1_initiator_s=_take_number(doc, "t1_initiator_s", path, 15.0),
        t1_scanner_s=_take_number(doc, "t1_scanner_s", path, 0.0),
        t2_s=_take_number(doc, "t2_s", path, 30.0),
        exchange=_parse_exchange(doc.pop("exchange", {}), f"{path}.exchange"),
    )
    if doc:
        raise ScenarioError(_join(path, sorted(doc)[0]), "unknown key")
    return spec


# -- bundled scenarios ---------------------------------------------------

def bundled_names() -> list[str]:
    root = resources.files(__package__) / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_bundled(name: str) -> Scenario:
    path = resources.files(__package__) / "scenarios" / f"{name}.json"
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ScenarioError("$", f"no bundled scenario named {name!r}; "
                                 f"available: {', '.join(bundled_names())}") from None
    return Scenario.from_json(text)


def make_duty_audit(num_devices: int = 50, end_time_s: float = 86_400.0,
                    period_s: float = 150.0, app_payload_bytes: int = 51,
                    dr: int = 0) -> Scenario:
    """A regulatory stress scenario: devices offering more airtime than the
    1% sub-bands allow, so every ledger runs pinned at its budget."""
    devices = []
    for i in range(num_devices):
        angle = 2 * math.pi * i / num_devices
        devices.append(DeviceSpec(
            eid=f"dev{i:03d}",
            dev_addr=0x0200_0000 + i,
            position=(2000.0 * math.cos(angle), 2000.0 * math.sin(angle)),
            period_s=period_s,
            phase_s=period_s * i / num_devices,
            jitter_frac=0.01,
            dr=dr,
            app_payload_bytes=app_payload_bytes,
        ))
    return Scenario(
        name="duty-audit",
        description=(f"{num_devices} devices offering one {app_payload_bytes}-byte "
                     f"uplink every {period_s:g} s at DR{dr}; the duty-cycle "
                     "gate throttles them to the sub-band budgets"),
        end_time_s=end_time_s,
        devices=devices,
    ).validate()
