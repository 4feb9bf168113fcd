"""Class A end device: Aloha uplinks, two receive windows, D2D suspension.

A device cycles uplink -> RX1 -> RX2 -> sleep.  Uplinks follow a nominal grid
(phase + k * period) with a uniform per-uplink start jitter; the grid does not
drift.  Channel choice is uniform over the device's enabled channels and the
sub-band duty ledger can push a start later.  A setup command received on the
dedicated port suspends normal operation and hands the radio to a D2D session;
when the session ends the device resumes the grid without rejoining.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from . import d2d, phy, regulator
from .energy import EnergyLedger

UPLINK_PORT = 1
JOIN_REQUEST_PHY_BYTES = 23
JOIN_ACCEPT_PHY_BYTES = 17


class MacState(Enum):
    NOT_JOINED = "not_joined"
    JOINING = "joining"
    SLEEP = "sleep"
    TX = "tx"
    WAIT_RW1 = "wait_rw1"
    RX1 = "rx1"
    WAIT_RW2 = "wait_rw2"
    RX2 = "rx2"
    D2D_SUSPENDED = "d2d_suspended"


@dataclass(frozen=True)
class LoRaWANUplink:
    dev_addr: int
    fcnt: int
    port: int
    app_bytes: int


@dataclass(frozen=True)
class LoRaWANDownlink:
    dev_addr: int
    fcnt: int
    port: int
    app_bytes: int
    window: int                  # 1 or 2, which receive window carried it
    payload: bytes | None = None


@dataclass(frozen=True)
class JoinRequest:
    eid: str


@dataclass(frozen=True)
class JoinAccept:
    eid: str
    assigned_addr: int


@dataclass
class MacTimings:
    receive_delay1_s: float = 1.0
    receive_delay2_s: float = 2.0
    preamble_detect_symbols: int = 8

    @property
    def rd1_us(self) -> int:
        return round(self.receive_delay1_s * 1e6)

    @property
    def rd2_us(self) -> int:
        return round(self.receive_delay2_s * 1e6)


class EndDevice:
    def __init__(self, engine, medium, *, eid: str, dev_addr: int | None,
                 position: tuple[float, float], period_s: float, phase_s: float,
                 jitter_frac: float, dr: int, tx_power_dbm: int,
                 app_payload_bytes: int, channels_hz: list[int],
                 rx2_freq_hz: int, rx2_dr: int, timings: MacTimings,
                 bands, duty_enforced: bool, duty_applies_to_d2d: bool,
                 max_uplinks: int | None = None, prejoined: bool = True,
                 d2d_params: d2d.ExchangeParams | None = None,
                 detailed_energy: bool = True):
        self.engine = engine
        self.medium = medium
        self.eid = eid
        self.position = position
        self.dev_addr = dev_addr if prejoined else None
        self.period_us = round(period_s * 1e6)
        self.phase_us = round(phase_s * 1e6)
        self.jitter_frac = jitter_frac
        self.uplink_dr = dr
        self.tx_power_dbm = phy.check_tx_power(tx_power_dbm)
        self.app_payload_bytes = app_payload_bytes
        self.channels_hz = list(channels_hz)
        self.rx2_freq_hz = rx2_freq_hz
        self.rx2_dr = rx2_dr
        self.timings = timings
        self.max_uplinks = max_uplinks
        self.prejoined = prejoined
        self.d2d_params = d2d_params or d2d.ExchangeParams()
        self.duty = regulator.DutyLedger(bands=bands, enforced=duty_enforced)
        self.duty_applies_to_d2d = duty_applies_to_d2d

        self.mac_state = MacState.SLEEP if prejoined else MacState.NOT_JOINED
        self.fcnt_up = 0
        self.fcnt_down = -1
        self.pending_d2d: d2d.D2DSetupCommand | None = None
        self.session: d2d.D2DSession | None = None
        self.session_history: list[d2d.D2DSession] = []

        self.ledger = EnergyLedger(detailed=detailed_energy)
        self.rng = engine.rng.stream(f"dev:{eid}")
        self.counters: dict[str, int] = {
            "uplinks_sent": 0, "downlinks_rw1": 0, "downlinks_rw2": 0,
            "ignored_frames": 0, "malformed_setups": 0, "join_attempts": 0,
            "duty_deferrals": 0,
        }
        self.app_deliveries: list[tuple[int, int]] = []   # (t_us, bytes)
        self.first_uplink_start_us: int | None = None
        self.last_uplink: phy.Transmission | None = None

        self._next_nominal_us = self.phase_us
        self._rx_events: list = []
        self._current_rx_window = 0
        self._d2d_listening = False
        self._uplink_phy_bytes = app_payload_bytes + phy.FRAME_OVERHEAD_BYTES
        self._uplink_toa_us = phy.time_on_air_us(dr, self._uplink_phy_bytes)
        self._window_us_by_dr: dict[int, int] = {}

        medium.register_position(eid, position)

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        self.ledger.set_state(0, "sleep")
        if self.prejoined:
            self._schedule_next_uplink()
        else:
            self._schedule_join_attempt()

    def finalize(self, end_us: int) -> None:
        self.ledger.finalize(end_us)

    # -- uplink cycle ------------------------------------------------------

    def _schedule_next_uplink(self) -> None:
        if self.max_uplinks is not None and self.counters["uplinks_sent"] >= self.max_uplinks:
            return
        nominal = self._next_nominal_us
        self._next_nominal_us = nominal + self.period_us
        jitter_us = 0
        if self.jitter_frac:
            jitter_us = round(self.rng.uniform(-self.jitter_frac, self.jitter_frac) * self.period_us)
        t = max(nominal + jitter_us, self.engine.now_us)
        self.engine.schedule(t, self._begin_uplink, kind="uplink_timer", target=self.eid)

    def _begin_uplink(self, _=None) -> None:
        if self.mac_state is MacState.D2D_SUSPENDED:
            return                  # resume will re-anchor the grid
        if self.mac_state is not MacState.SLEEP:
            # previous cycle still in its receive windows; try again shortly
            self.engine.schedule(self.engine.now_us + 100_000, self._begin_uplink,
                                 kind="uplink_retry", target=self.eid)
            return
        channel = self.channels_hz[int(self.rng.integers(0, len(self.channels_hz)))]
        now = self.engine.now_us
        phy_bytes = self._uplink_phy_bytes
        toa = self._uplink_toa_us
        start = self.duty.next_allowed_us(channel, now, toa)
        if start > now:
            self.counters["duty_deferrals"] += 1
            self.engine.trace("duty_defer", self.eid, until_us=start, freq_hz=channel)
        frame = LoRaWANUplink(self.dev_addr, self.fcnt_up, UPLINK_PORT, self.app_payload_bytes)
        self._transmit_lorawan(start, channel, self.uplink_dr, phy_bytes, "uplink", frame, toa)
        self.fcnt_up += 1
        self.counters["uplinks_sent"] += 1
        if self.first_uplink_start_us is None:
            self.first_uplink_start_us = start

    def _transmit_lorawan(self, start_us: int, freq_hz: int, dr: int, phy_bytes: int,
                          kind: str, frame, toa_us: int) -> None:
        self.duty.record_transmission(freq_hz, start_us, toa_us)
        tx = phy.Transmission(
            start_us=start_us, duration_us=toa_us, freq_hz=freq_hz, dr=dr,
            tx_power_dbm=self.tx_power_dbm, phy_payload_bytes=phy_bytes,
            source=self.eid, kind=kind, frame=frame,
        )
        self.mac_state = MacState.TX
        self.last_uplink = tx
        self.medium.begin_tx(tx, owner=self)

    def on_own_tx_start(self, tx: phy.Transmission) -> None:
        self.ledger.set_state(self.engine.now_us, "tx", tx.tx_power_dbm)

    def on_own_tx_end(self, tx: phy.Transmission) -> None:
        self.ledger.set_state(self.engine.now_us, "sleep")
        if tx.kind.startswith("d2d"):
            if self.session is not None:
                self.session.on_tx_end(self, tx.frame)
            return
        # class A: two receive windows pegged to the uplink end
        now = self.engine.now_us
        self.mac_state = MacState.WAIT_RW1
        ev1 = self.engine.schedule(now + self.timings.rd1_us, self._open_rx, 1,
                                   kind="rx1_open", target=self.eid)
        ev2 = self.engine.schedule(now + self.timings.rd2_us, self._open_rx, 2,
                                   kind="rx2_open", target=self.eid)
        self._rx_events = [ev1, ev2]

    def _window_us(self, dr: int) -> int:
        w = self._window_us_by_dr.get(dr)
        if w is None:
            w = round(self.timings.preamble_detect_symbols * phy.symbol_time(dr) * 1e6)
            self._window_us_by_dr[dr] = w
        return w

    def _open_rx(self, which: int) -> None:
        if which == 1:
            freq, dr = self.last_uplink.freq_hz, self.last_uplink.dr
            self.mac_state = MacState.RX1
        else:
            if self._current_rx_window == 1:
                # still receiving in the first window past the second's start;
                # the second window is skipped for this cycle
                return
            freq, dr = self.rx2_freq_hz, self.rx2_dr
            self.mac_state = MacState.RX2
        self._current_rx_window = which
        self.ledger.set_state(self.engine.now_us, "rx")
        self.medium.listen(self, freq, dr)
        self.engine.trace("rx_open", self.eid, window=which, freq_hz=freq, dr=dr)
        close_at = self.engine.now_us + self._window_us(dr)
        ev = self.engine.schedule(close_at, self._close_rx, which,
                                  kind=f"rx{which}_close", target=self.eid)
        self._rx_events.append(ev)

    def _close_rx(self, which: int) -> None:
        if self._current_rx_window != which:
            return
        lock = self.medium.lock_until_us(self.eid)
        if lock > self.engine.now_us:
            ev = self.engine.schedule(lock, self._close_rx, which,
                                      kind=f"rx{which}_close", target=self.eid)
            self._rx_events.append(ev)
            return
        self.medium.unlisten(self)
        self.ledger.set_state(self.engine.now_us, "sleep")
        self.engine.trace("rx_close", self.eid, window=which)
        self._current_rx_window = 0
        if which == 1:
            rx2_at = self.last_uplink.end_us + self.timings.rd2_us
            if self.engine.now_us >= rx2_at:
                # a reception held the first window open past the second
                # window's slot, so that slot was skipped; the cycle is over
                self._cycle_complete()
            else:
                self.mac_state = MacState.WAIT_RW2
        else:
            self._cycle_complete()

    def _cancel_rx_events(self) -> None:
        for ev in self._rx_events:
            ev.cancel()
        self._rx_events = []
        self._current_rx_window = 0

    def _cycle_complete(self) -> None:
        if self.dev_addr is None:
            # join attempt went unanswered; retry on the reporting grid
            self.mac_state = MacState.NOT_JOINED
            self._schedule_join_attempt()
            return
        self.mac_state = MacState.SLEEP
        self._schedule_next_uplink()

    # -- reception ---------------------------------------------------------

    def on_frame_decoded(self, tx: phy.Transmission) -> None:
        frame = tx.frame
        if self.mac_state is MacState.D2D_SUSPENDED:
            if self.session is not None and tx.kind.startswith("d2d"):
                self.session.on_frame(self, frame)
            else:
                self.counters["ignored_frames"] += 1
            return
        if self.mac_state not in (MacState.RX1, MacState.RX2):
            self.counters["ignored_frames"] += 1
            return
        if isinstance(frame, JoinAccept):
            if frame.eid == self.eid:
                self._complete_join(frame)
            else:
                self.counters["ignored_frames"] += 1
            return
        if not isinstance(frame, LoRaWANDownlink) or frame.dev_addr != self.dev_addr:
            self.counters["ignored_frames"] += 1
            return
        window = self._current_rx_window
        self.counters["downlinks_rw1" if window == 1 else "downlinks_rw2"] += 1
        self.fcnt_down = frame.fcnt
        self._cancel_rx_events()
        self.medium.unlisten(self)
        self.ledger.set_state(self.engine.now_us, "sleep")
        self.engine.trace("downlink_rx", self.eid, window=window, port=frame.port,
                          bytes=frame.app_bytes)
        if frame.port == d2d.SETUP_PORT:
            self._handle_setup(frame)
        else:
            self.app_deliveries.append((self.engine.now_us, frame.app_bytes))
            self.engine.trace("app_delivery", self.eid, bytes=frame.app_bytes)
            self._cycle_complete()

    def _handle_setup(self, frame: LoRaWANDownlink) -> None:
        try:
            cmd = d2d.decode_setup(frame.payload or b"")
        except d2d.D2DCodecError as exc:
            self.counters["malformed_setups"] += 1
            self.engine.trace("setup_rejected", self.eid, error=str(exc))
            self._cycle_complete()
            return
        self.pending_d2d = cmd
        self.mac_state = MacState.D2D_SUSPENDED
        self.session = d2d.D2DSession(cmd, self.dev_addr, self.engine.now_us, self.d2d_params)
        self.engine.trace("d2d_armed", self.eid, role=cmd.role.name.lower(),
                          freq_hz=cmd.freq_hz, dr=cmd.dr, t1_ds=round(cmd.t1_s * 10),
                          t2_ds=round(cmd.t2_s * 10), peer=cmd.peer_addr)
        self.session.activate(self)

    # -- join --------------------------------------------------------------

    def _schedule_join_attempt(self) -> None:
        nominal = self._next_nominal_us
        self._next_nominal_us = nominal + self.period_us
        jitter_us = 0
        if self.jitter_frac:
            jitter_us = round(self.rng.uniform(-self.jitter_frac, self.jitter_frac) * self.period_us)
        t = max(nominal + jitter_us, self.engine.now_us)
        self.engine.schedule(t, self._begin_join, kind="join_timer", target=self.eid)

    def _begin_join(self, _=None) -> None:
        if self.mac_state not in (MacState.NOT_JOINED, MacState.SLEEP):
            return
        channel = self.channels_hz[int(self.rng.integers(0, len(self.channels_hz)))]
        now = self.engine.now_us
        toa = phy.time_on_air_us(self.uplink_dr, JOIN_REQUEST_PHY_BYTES)
        start = self.duty.next_allowed_us(channel, now, toa)
        self.counters["join_attempts"] += 1
        self.engine.trace("join_request", self.eid, freq_hz=channel)
        self.mac_state = MacState.NOT_JOINED
        self._transmit_lorawan(start, channel, self.uplink_dr, JOIN_REQUEST_PHY_BYTES,
                               "join_request", JoinRequest(self.eid), toa)
        self.mac_state = MacState.TX

    def _complete_join(self, frame: JoinAccept) -> None:
        self.dev_addr = frame.assigned_addr
        self.prejoined = True
        self._cancel_rx_events()
        self.medium.unlisten(self)
        self.ledger.set_state(self.engine.now_us, "sleep")
        self.engine.trace("join_complete", self.eid, dev_addr=frame.assigned_addr)
        self.mac_state = MacState.SLEEP
        self._next_nominal_us = self.engine.now_us + self.period_us
        self._schedule_next_uplink()

    # -- D2D host interface --------------------------------------------------

    def now_us(self) -> int:
        return self.engine.now_us

    def d2d_transmit(self, session: d2d.D2DSession, frame, power_dbm: int,
                     freq_hz: int, dr: int, at_us: int) -> None:
        app = frame.app_bytes
        phy_bytes = app + phy.FRAME_OVERHEAD_BYTES
        toa = phy.time_on_air_us(dr, phy_bytes)
        start = max(at_us, self.engine.now_us)
        if self.duty_applies_to_d2d:
            start = self.duty.next_allowed_us(freq_hz, start, toa)
            self.duty.record_transmission(freq_hz, start, toa)
        if self._d2d_listening:
            self.medium.unlisten(self)
            self._d2d_listening = False
        kind = "d2d_data" if isinstance(frame, d2d.D2DDataFrame) else "d2d_ack"
        tx = phy.Transmission(
            start_us=start, duration_us=toa, freq_hz=freq_hz, dr=dr,
            tx_power_dbm=power_dbm, phy_payload_bytes=phy_bytes,
            source=self.eid, kind=kind, frame=frame,
        )
        self.ledger.command(self.engine.now_us)
        self.medium.begin_tx(tx, owner=self)

    def d2d_listen_on(self, session: d2d.D2DSession) -> None:
        if self._d2d_listening:
            return
        self._d2d_listening = True
        self.ledger.command(self.engine.now_us)
        self.ledger.set_state(self.engine.now_us, "rx")
        self.medium.listen(self, session.cmd.freq_hz, session.cmd.dr)

    def d2d_listen_off(self, session: d2d.D2DSession) -> None:
        if not self._d2d_listening:
            return
        self._d2d_listening = False
        self.medium.unlisten(self)
        self.ledger.set_state(self.engine.now_us, "sleep")

    def schedule_session_timer(self, session: d2d.D2DSession, at_us: int, tag: str):
        t = max(at_us, self.engine.now_us)
        return self.engine.schedule(t, lambda _: session.on_timer(self, tag),
                                    kind=f"d2d_{tag}", target=self.eid)

    def session_finished(self, session: d2d.D2DSession) -> None:
        self.session_history.append(session)
        self.session = None
        self.pending_d2d = None
        self.engine.trace("d2d_finished", self.eid, state=session.state.value,
                          reason=session.fail_reason or "",
                          packets_acked=session.packets_acked)
        self.mac_state = MacState.SLEEP
        now = self.engine.now_us
        if self._next_nominal_us < now:
            periods = (now - self.phase_us + self.period_us - 1) // self.period_us
            self._next_nominal_us = self.phase_us + periods * self.period_us
        self.engine.trace("resume", self.eid, next_uplink_us=self._next_nominal_us)
        self._schedule_next_uplink()

    # -- reporting -----------------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "dev_addr": self.dev_addr,
            "mac_state": self.mac_state.value,
            "fcnt_up": self.fcnt_up,
            **self.counters,
            "app_bytes_received": sum(b for _, b in self.app_deliveries),
            "duty": self.duty.audit(self.engine.now_us),
        }
