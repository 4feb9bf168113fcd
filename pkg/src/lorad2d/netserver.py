"""Gateway and network server.

The gateway is a dumb pipe: it decodes whatever its channels carry and hands
frames to the server after a fixed backhaul delay.  Downlinks go back out
through a gateway, which can serve one transmission at a time and keeps its
own duty-cycle ledger.

The network server owns addressing, frame-counter deduplication, per-device
downlink queues, relaying of application payloads between devices, and the
planning of D2D sessions.  A queued downlink is placed into the first receive
window of the next uplink where it fits (payload small enough for the window's
data rate, gateway idle, duty budget available), falling back to the second
window, otherwise it stays queued for a later uplink.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import d2d, phy, regulator
from .mac import (JOIN_ACCEPT_PHY_BYTES, JoinAccept, JoinRequest,
                  LoRaWANDownlink, LoRaWANUplink, MacTimings)


class PlanError(ValueError):
    """A D2D plan request that can never work (bad link or participants)."""


class InfeasiblePlanError(PlanError):
    """Setup delivery timing cannot guarantee the scanner listens first."""


class DownlinkError(ValueError):
    """A queued payload that fits no receive window at any time."""


@dataclass
class DeviceRecord:
    eid: str
    dev_addr: int | None
    dr: int
    app_payload_bytes: int
    period_s: float
    jitter_frac: float
    joined: bool = True


@dataclass
class TransferState:
    source_addr: int
    dest_addr: int
    total_bytes: int
    port: int = 1
    bytes_relayed: int = 0
    chunks_relayed: int = 0
    started_us: int | None = None


@dataclass
class _QueuedDownlink:
    port: int
    app_bytes: int
    payload: bytes | None = None


class Gateway:
    def __init__(self, engine, medium, *, eid: str, position: tuple[float, float],
                 channels_hz: list[int], tx_power_dbm: int, backhaul_delay_s: float,
                 bands, duty_enforced: bool):
        self.engine = engine
        self.medium = medium
        self.eid = eid
        self.position = position
        self.channels_hz = frozenset(channels_hz)
        self.tx_power_dbm = tx_power_dbm
        self.backhaul_us = round(backhaul_delay_s * 1e6)
        self.duty = regulator.DutyLedger(bands=bands, enforced=duty_enforced)
        self.busy_until_us = 0
        self.server = None
        self.counters = {"uplinks_decoded": 0, "downlinks_transmitted": 0}
        medium.register_position(eid, position)
        medium.listen_gateway(self, self.channels_hz)

    def on_frame_decoded(self, tx: phy.Transmission) -> None:
        self.counters["uplinks_decoded"] += 1
        self.engine.schedule(self.engine.now_us + self.backhaul_us,
                             self._forward, tx, kind="backhaul", target=self.eid)

    def _forward(self, tx: phy.Transmission) -> None:
        self.server.on_uplink(tx, self)

    def can_transmit(self, freq_hz: int, start_us: int, toa_us: int) -> bool:
        if start_us < self.busy_until_us:
            return False
        return self.duty.next_allowed_us(freq_hz, start_us, toa_us) <= start_us

    def transmit(self, frame, *, freq_hz: int, dr: int, phy_payload_bytes: int,
                 start_us: int, kind: str) -> phy.Transmission:
        toa = phy.time_on_air_us(dr, phy_payload_bytes)
        self.duty.record_transmission(freq_hz, start_us, toa)
        tx = phy.Transmission(
            start_us=start_us, duration_us=toa, freq_hz=freq_hz, dr=dr,
            tx_power_dbm=self.tx_power_dbm, phy_payload_bytes=phy_payload_bytes,
            source=self.eid, kind=kind, frame=frame,
        )
        self.busy_until_us = tx.end_us
        self.medium.begin_tx(tx, owner=self)
        return tx

    def on_own_tx_start(self, tx: phy.Transmission) -> None:
        pass

    def on_own_tx_end(self, tx: phy.Transmission) -> None:
        self.counters["downlinks_transmitted"] += 1


class NetworkServer:
    def __init__(self, engine, *, timings: MacTimings, rx2_freq_hz: int, rx2_dr: int,
                 join_success_prob: float = 1.0, bands=regulator.DEFAULT_BANDS):
        self.engine = engine
        self.timings = timings
        self.rx2_freq_hz = rx2_freq_hz
        self.rx2_dr = rx2_dr
        self.join_success_prob = join_success_prob
        self.bands = bands
        self.devices: dict[int, DeviceRecord] = {}
        self.by_eid: dict[str, DeviceRecord] = {}
        self.seen: set[tuple[int, int]] = set()
        self.queues: dict[int, list[_QueuedDownlink]] = {}
        self.fcnt_down: dict[int, int] = {}
        self.transfers: list[TransferState] = []
        self.uplinks_by_addr: dict[int, int] = {}
        self.next_dev_addr = 0x0100_0001
        self.rng = engine.rng.stream("netserver")
        self.counters = {
            "uplinks": 0, "dedup_drops": 0, "downlinks_scheduled": 0,
            "downlinks_rw1": 0, "downlinks_rw2": 0, "downlinks_deferred": 0,
            "setups_sent": 0, "joins_accepted": 0, "joins_dropped": 0,
        }

    # -- registration --------------------------------------------------------

    def register_device(self, record: DeviceRecord) -> None:
        self.by_eid[record.eid] = record
        if record.joined and record.dev_addr is not None:
            self.devices[record.dev_addr] = record
            self.queues.setdefault(record.dev_addr, [])
            self.fcnt_down.setdefault(record.dev_addr, 0)

    def add_transfer(self, source_addr: int, dest_addr: int, total_bytes: int,
                     port: int = 1) -> TransferState:
        for addr in (source_addr, dest_addr):
            if addr not in self.devices:
                raise PlanError(f"transfer endpoint 0x{addr:08x} is not a joined device")
        state = TransferState(source_addr, dest_addr, total_bytes, port)
        self.transfers.append(state)
        return state

    # -- uplink path -----------------------------------------------------------

    def on_uplink(self, tx: phy.Transmission, gw: Gateway) -> None:
        frame = tx.frame
        if isinstance(frame, JoinRequest):
            self._on_join_request(tx, gw)
            return
        if not isinstance(frame, LoRaWANUplink) or frame.dev_addr not in self.devices:
            return
        key = (frame.dev_addr, frame.fcnt)
        if key in self.seen:
            self.counters["dedup_drops"] += 1
            return
        self.seen.add(key)
        self.counters["uplinks"] += 1
        self.uplinks_by_addr[frame.dev_addr] = self.uplinks_by_addr.get(frame.dev_addr, 0) + 1
        self._relay(frame)
        self._try_place_downlink(frame.dev_addr, tx, gw)

    def _relay(self, frame: LoRaWANUplink) -> None:
        if frame.app_bytes <= 0:
            return
        for tr in self.transfers:
            if tr.source_addr != frame.dev_addr or tr.bytes_relayed >= tr.total_bytes:
                continue
            n = min(frame.app_bytes, tr.total_bytes - tr.bytes_relayed)
            tr.bytes_relayed += n
            tr.chunks_relayed += 1
            if tr.started_us is None:
                tr.started_us = self.engine.now_us
            self.enqueue_downlink(tr.dest_addr, tr.port, n)

    # -- downlink path -----------------------------------------------------------

    def enqueue_downlink(self, dev_addr: int, port: int, app_bytes: int,
                         payload: bytes | None = None) -> None:
        if dev_addr not in self.devices:
            raise DownlinkError(f"0x{dev_addr:08x} is not a joined device")
        record = self.devices[dev_addr]
        if (not self._fits(self.rx2_dr, app_bytes)
                and not self._fits(record.dr, app_bytes)):
            raise DownlinkError(
                f"{app_bytes} application bytes fit neither receive window "
                f"(uplink DR{record.dr}, RX2 DR{self.rx2_dr})")
        self.queues[dev_addr].append(_QueuedDownlink(port, app_bytes, payload))

    @staticmethod
    def _fits(dr: int, app_bytes: int) -> bool:
        desc = phy.data_rate(dr)
        return app_bytes + phy.FRAME_OVERHEAD_BYTES <= desc.max_mac_payload_bytes

    def _window_plan(self, uplink: phy.Transmission):
        """The two candidate (start, freq, dr) placements after an uplink."""
        end = uplink.end_us
        return (
            (1, end + self.timings.rd1_us, uplink.freq_hz, uplink.dr),
            (2, end + self.timings.rd2_us, self.rx2_freq_hz, self.rx2_dr),
        )

    def _try_place_downlink(self, dev_addr: int, uplink: phy.Transmission,
                            gw: Gateway) -> None:
        queue = self.queues.get(dev_addr)
        if not queue:
            return
        item = queue[0]
        phy_bytes = item.app_bytes + phy.FRAME_OVERHEAD_BYTES
        for window, start, freq, dr in self._window_plan(uplink):
            if not self._fits(dr, item.app_bytes):
                continue
            toa = phy.time_on_air_us(dr, phy_bytes)
            if not gw.can_transmit(freq, start, toa):
                continue
            queue.pop(0)
            fcnt = self.fcnt_down[dev_addr]
            self.fcnt_down[dev_addr] = fcnt + 1
            frame = LoRaWANDownlink(dev_addr, fcnt, item.port, item.app_bytes,
                                    window, item.payload)
            gw.transmit(frame, freq_hz=freq, dr=dr, phy_payload_bytes=phy_bytes,
                        start_us=start, kind="downlink")
            self.counters["downlinks_scheduled"] += 1
            self.counters["downlinks_rw1" if window == 1 else "downlinks_rw2"] += 1
            self.engine.trace("downlink_scheduled", "ns", dev_addr=dev_addr,
                              window=window, port=item.port, bytes=item.app_bytes)
            return
        self.counters["downlinks_deferred"] += 1

    # -- join ---------------------------------------------------------------

    def _on_join_request(self, tx: phy.Transmission, gw: Gateway) -> None:
        eid = tx.frame.eid
        if self.rng.uniform() >= self.join_success_prob:
            self.counters["joins_dropped"] += 1
            return
        record = self.by_eid.get(eid)
        if record is None:
            return
        if record.dev_addr is None:
            record.dev_addr = self.next_dev_addr
            self.next_dev_addr += 1
        accept = JoinAccept(eid, record.dev_addr)
        placed = False
        for window, start, freq, dr in self._window_plan(tx):
            toa = phy.time_on_air_us(dr, JOIN_ACCEPT_PHY_BYTES)
            if gw.can_transmit(freq, start, toa):
                gw.transmit(accept, freq_hz=freq, dr=dr,
                            phy_payload_bytes=JOIN_ACCEPT_PHY_BYTES,
                            start_us=start, kind="join_accept")
                placed = True
                break
        if not placed:
            self.counters["joins_dropped"] += 1
            return
        record.joined = True
        self.devices[record.dev_addr] = record
        self.queues.setdefault(record.dev_addr, [])
        self.fcnt_down.setdefault(record.dev_addr, 0)
        self.counters["joins_accepted"] += 1

    # -- D2D planning ------------------------------------------------------------

    def _worst_setup_delivery_s(self, record: DeviceRecord) -> float:
        """Upper bound on trigger-to-setup-delivery, assuming no losses."""
        wait = record.period_s * (1.0 + record.jitter_frac)
        toa_up = phy.time_on_air(record.dr, record.app_payload_bytes + phy.FRAME_OVERHEAD_BYTES)
        setup_phy = d2d.SETUP_WIRE_BYTES + phy.FRAME_OVERHEAD_BYTES
        rw1 = self.timings.receive_delay1_s + phy.time_on_air(record.dr, setup_phy)
        rw2 = self.timings.receive_delay2_s + phy.time_on_air(self.rx2_dr, setup_phy)
        return wait + toa_up + max(rw1, rw2)

    def _best_setup_delivery_s(self, record: DeviceRecord) -> float:
        toa_up = phy.time_on_air(record.dr, record.app_payload_bytes + phy.FRAME_OVERHEAD_BYTES)
        setup_phy = d2d.SETUP_WIRE_BYTES + phy.FRAME_OVERHEAD_BYTES
        rw1 = self.timings.receive_delay1_s + phy.time_on_air(record.dr, setup_phy)
        rw2 = self.timings.receive_delay2_s + phy.time_on_air(self.rx2_dr, setup_phy)
        return toa_up + min(rw1, rw2)

    def plan_d2d(self, *, initiator_addr: int, scanner_addr: int, freq_hz: int,
                 dr: int, power_dbm: int, t1_initiator_s: float, t1_scanner_s: float,
                 t2_s: float,
                 exchange: d2d.ExchangeParams | None = None,
                 ) -> list[tuple[int, d2d.D2DSetupCommand]]:
        """Build the pair of setup commands for a session, scanner first.

        Raises PlanError for invalid participants or link parameters, and
        InfeasiblePlanError when the T1 split cannot guarantee that the
        scanner is listening before the initiator's first transmission, or
        when the scanner's window may close before that transmission.
        """
        if initiator_addr == scanner_addr:
            raise PlanError("initiator and scanner must be distinct devices")
        for addr in (initiator_addr, scanner_addr):
            if addr not in self.devices:
                raise PlanError(f"0x{addr:08x} is not a joined device")
        if not 0 <= dr <= 7:
            raise PlanError(f"DR{dr} is not a valid data rate")
        try:
            regulator.classify(freq_hz, self.bands)
            phy.check_tx_power(power_dbm)
        except (regulator.RegulatorError, phy.PhyError) as exc:
            raise PlanError(str(exc)) from exc
        initiator = self.devices[initiator_addr]
        scanner = self.devices[scanner_addr]

        gap = t1_initiator_s - t1_scanner_s
        needed = (self._worst_setup_delivery_s(scanner)
                  - self._best_setup_delivery_s(initiator))
        if gap < needed:
            raise InfeasiblePlanError(
                f"T1 gap {gap:.3f} s cannot cover worst-case setup skew "
                f"{needed:.3f} s; the scanner may still be asleep when the "
                "initiator first transmits")
        if exchange is None:
            exchange = d2d.ExchangeParams()
        data_toa_s = phy.time_on_air(
            dr, exchange.data_payload_bytes + phy.FRAME_OVERHEAD_BYTES)
        latest_first_tx = (self._worst_setup_delivery_s(initiator) + t1_initiator_s
                           + data_toa_s)
        earliest_deadline = self._best_setup_delivery_s(scanner) + t2_s
        if latest_first_tx > earliest_deadline:
            raise InfeasiblePlanError(
                f"scanner window (T2 {t2_s:.1f} s) may close "
                f"{latest_first_tx - earliest_deadline:.3f} s before the "
                "initiator's first frame lands")

        commands = []
        for addr, role, t1 in ((scanner_addr, d2d.Role.SCANNER, t1_scanner_s),
                               (initiator_addr, d2d.Role.INITIATOR, t1_initiator_s)):
            peer = initiator_addr if role is d2d.Role.SCANNER else scanner_addr
            commands.append((addr, d2d.D2DSetupCommand(
                role=role, freq_hz=freq_hz, dr=dr, power_dbm=power_dbm,
                t1_s=t1, t2_s=t2_s, peer_addr=peer)))
        return commands

    def execute_d2d(self, **kwargs) -> None:
        """Plan a session and queue both setup commands (scanner's first)."""
        for addr, cmd in self.plan_d2d(**kwargs):
            self.enqueue_downlink(addr, d2d.SETUP_PORT, d2d.SETUP_WIRE_BYTES,
                                  payload=d2d.encode_setup(cmd))
            self.counters["setups_sent"] += 1
        self.engine.trace("d2d_planned", "ns",
                          **{k: v for k, v in kwargs.items() if k != "exchange"})
