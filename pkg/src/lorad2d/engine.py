"""Discrete-event core: clock, event queue, seeded RNG streams, radio medium.

The clock is integer microseconds.  Events execute in (time, sequence) order
where sequence is assigned at scheduling time, so equal timestamps resolve in
scheduling order and a (seed, scenario) pair always replays to the identical
trace.  Randomness is split into named substreams derived from the master seed
with a hash, so adding an entity never perturbs the draws of another.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass

import numpy as np

from . import phy


class SimulationError(RuntimeError):
    pass


class Event:
    __slots__ = ("t_us", "seq", "fn", "data", "kind", "target", "cancelled")

    def __init__(self, t_us: int, seq: int, fn, data, kind: str, target: str):
        self.t_us = t_us
        self.seq = seq
        self.fn = fn
        self.data = data
        self.kind = kind
        self.target = target
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class RngManager:
    """Named, reproducible random substreams below one master seed."""

    def __init__(self, master_seed: int):
        self.master_seed = master_seed
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, label: str) -> np.random.Generator:
        gen = self._streams.get(label)
        if gen is None:
            digest = hashlib.sha256(f"{self.master_seed}:{label}".encode()).digest()
            seed = int.from_bytes(digest[:8], "big")
            gen = np.random.Generator(np.random.PCG64(seed))
            self._streams[label] = gen
        return gen


class Engine:
    def __init__(self, seed: int = 0, trace: bool = True):
        self.now_us = 0
        self.rng = RngManager(seed)
        self.trace_enabled = trace
        self.trace_records: list[dict] = []
        self.counters: dict[str, int] = {}
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0
        self.events_executed = 0

    def schedule(self, t_us: int, fn, data=None, kind: str = "", target: str = "") -> Event:
        if t_us < self.now_us:
            raise SimulationError(f"cannot schedule {kind or fn} at {t_us} before now {self.now_us}")
        self._seq += 1
        ev = Event(t_us, self._seq, fn, data, kind, target)
        heapq.heappush(self._heap, (t_us, ev.seq, ev))
        return ev

    def run(self, until_us: int | None = None) -> None:
        heap = self._heap
        while heap:
            t_us, _, ev = heap[0]
            if until_us is not None and t_us > until_us:
                break
            heapq.heappop(heap)
            if ev.cancelled:
                continue
            self.now_us = t_us
            self.events_executed += 1
            ev.fn(ev.data)
        if until_us is not None and until_us > self.now_us:
            self.now_us = until_us

    def count(self, key: str, n: int = 1) -> None:
        self.counters[key] = self.counters.get(key, 0) + n

    def trace(self, kind: str, entity: str, **fields) -> None:
        if not self.trace_enabled:
            return
        rec = {"t_us": self.now_us, "entity": entity, "kind": kind}
        rec.update(fields)
        self.trace_records.append(rec)

    def trace_jsonl(self) -> str:
        return "".join(json.dumps(rec, separators=(",", ":")) + "\n" for rec in self.trace_records)


# -- radio medium -----------------------------------------------------------


_SF_KEY_BY_DR = {d.index: (d.sf if d.is_lora else "gfsk") for d in phy.DATA_RATES}


def sf_key(dr: int):
    try:
        return _SF_KEY_BY_DR[dr]
    except KeyError:
        raise phy.PhyError(f"data rate index {dr} outside 0..7") from None


@dataclass(frozen=True)
class Outcome:
    kind: str                     # decoded | collision | below_sensitivity | none
    tx: phy.Transmission | None = None


DECODED = "decoded"
COLLISION = "collision"
BELOW_SENSITIVITY = "below_sensitivity"
NONE = "none"


def arbitrate(
    rx_position: tuple[float, float],
    listening_freq_hz: int,
    listening_dr: int,
    window_us: tuple[int, int],
    transmissions: list[phy.Transmission],
    tx_positions: dict[str, tuple[float, float]],
    loss_model: phy.PathLossModel,
    sensitivity_table: dict[int, float] | None = None,
    capture_threshold_db: float = 6.0,
) -> Outcome:
    """Decide what a receiver locked on (freq, dr) hears inside a window.

    Candidates are transmissions on the listening frequency with the listening
    spreading factor that overlap the window and arrive above sensitivity.  A
    lone candidate decodes.  Among candidates that overlap in time, only the
    strongest decodes and only when it clears the runner-up by the capture
    threshold; otherwise everything overlapping is lost.  Candidates disjoint
    in time decode independently; the earliest decodable one is returned.
    """
    w0, w1 = window_us
    key = sf_key(listening_dr)
    matching = [
        t for t in transmissions
        if t.freq_hz == listening_freq_hz and sf_key(t.dr) == key and t.overlaps(w0, w1)
    ]
    if not matching:
        return Outcome(NONE)
    sens = phy.sensitivity(listening_dr, sensitivity_table)

    def rssi(t: phy.Transmission) -> float:
        pos = tx_positions[t.source]
        d = ((pos[0] - rx_position[0]) ** 2 + (pos[1] - rx_position[1]) ** 2) ** 0.5
        return loss_model.rssi_dbm(t.tx_power_dbm, d)

    cands = [t for t in matching if rssi(t) >= sens]
    if not cands:
        return Outcome(BELOW_SENSITIVITY)
    for x in sorted(cands, key=lambda t: (t.end_us, t.start_us, t.source)):
        rx = rssi(x)
        clear = all(
            rx >= rssi(y) + capture_threshold_db
            for y in cands
            if y is not x and y.overlaps(x.start_us, x.end_us)
        )
        if clear:
            return Outcome(DECODED, x)
    return Outcome(COLLISION)


class _Listening:
    __slots__ = ("entity", "freq_hz", "dr", "sf", "sens_dbm", "opened_us", "lock_until_us")

    def __init__(self, entity, freq_hz: int, dr: int, sens_dbm: float, opened_us: int):
        self.entity = entity
        self.freq_hz = freq_hz
        self.dr = dr
        self.sf = sf_key(dr)
        self.sens_dbm = sens_dbm
        self.opened_us = opened_us
        self.lock_until_us = 0


class _GatewayListening:
    __slots__ = ("entity", "channels")

    def __init__(self, entity, channels: frozenset[int]):
        self.entity = entity
        self.channels = channels


# Transmissions older than this can no longer interfere with a frame that is
# ending now (longest EU 868 frame is ~9 s at DR0).
_PRUNE_HORIZON_US = 12_000_000


class Medium:
    """Tracks in-flight transmissions and arbitrates receptions.

    Reception is decided at each frame's end: the frame is delivered to every
    current listener for which it is above sensitivity and clears all
    co-frequency, co-SF overlapping candidates by the capture threshold.
    """

    def __init__(self, engine: Engine, loss_model: phy.PathLossModel,
                 sensitivity_table: dict[int, float] | None = None,
                 capture_threshold_db: float = 6.0,
                 d2d_frame_loss_prob: float = 0.0):
        self.engine = engine
        self.loss_model = loss_model
        self.sensitivity_table = sensitivity_table
        self.capture_threshold_db = capture_threshold_db
        self.d2d_frame_loss_prob = d2d_frame_loss_prob
        self.active: list[phy.Transmission] = []
        self._owners: dict[int, object] = {}
        self._listeners: dict[str, _Listening] = {}
        self._gateways: dict[str, _GatewayListening] = {}
        self._positions: dict[str, tuple[float, float]] = {}
        self._pl_cache: dict[tuple[str, str], float] = {}
        self._sens_cache: dict[int, float] = {}

    def _sens(self, dr: int) -> float:
        s = self._sens_cache.get(dr)
        if s is None:
            s = self._sens_cache[dr] = phy.sensitivity(dr, self.sensitivity_table)
        return s

    def register_position(self, eid: str, position: tuple[float, float]) -> None:
        self._positions[eid] = position

    def _rssi(self, tx: phy.Transmission, dst: str) -> float:
        pair = (tx.source, dst)
        pl = self._pl_cache.get(pair)
        if pl is None:
            a = self._positions[tx.source]
            b = self._positions[dst]
            d = ((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2) ** 0.5
            pl = self.loss_model.path_loss_db(max(d, 1e-3))
            self._pl_cache[pair] = pl
        return tx.tx_power_dbm - pl

    # -- listener management --------------------------------------------

    def listen(self, entity, freq_hz: int, dr: int) -> None:
        sens = self._sens(dr)
        lst = _Listening(entity, freq_hz, dr, sens, self.engine.now_us)
        # A frame already in flight locks the receiver just like one that
        # starts later; count it so window-close logic can extend.
        for tx in self.active:
            if (tx.freq_hz == freq_hz and sf_key(tx.dr) == lst.sf
                    and tx.end_us > self.engine.now_us and tx.source != entity.eid
                    and self._rssi(tx, entity.eid) >= sens):
                lst.lock_until_us = max(lst.lock_until_us, tx.end_us)
        self._listeners[entity.eid] = lst

    def unlisten(self, entity) -> None:
        self._listeners.pop(entity.eid, None)

    def lock_until_us(self, eid: str) -> int:
        lst = self._listeners.get(eid)
        return lst.lock_until_us if lst is not None else 0

    def listen_gateway(self, entity, channels) -> None:
        self._gateways[entity.eid] = _GatewayListening(entity, frozenset(channels))

    # -- transmission ----------------------------------------------------

    def begin_tx(self, tx: phy.Transmission, owner) -> None:
        if tx.start_us < self.engine.now_us:
            raise SimulationError("transmission starts in the past")
        self.engine.schedule(tx.start_us, self._tx_start, (tx, owner),
                             kind="tx_start", target=tx.source)

    def _tx_start(self, data) -> None:
        tx, owner = data
        self.active.append(tx)
        self._owners[id(tx)] = owner
        self.engine.trace("tx_start", tx.source, freq_hz=tx.freq_hz, dr=tx.dr,
                          bytes=tx.phy_payload_bytes, frame=tx.kind, dur_us=tx.duration_us)
        on_start = getattr(owner, "on_own_tx_start", None)
        if on_start is not None:
            on_start(tx)
        key = sf_key(tx.dr)
        for eid in sorted(self._listeners):
            lst = self._listeners[eid]
            if (lst.freq_hz == tx.freq_hz and lst.sf == key and eid != tx.source
                    and self._rssi(tx, eid) >= lst.sens_dbm):
                lst.lock_until_us = max(lst.lock_until_us, tx.end_us)
        self.engine.schedule(tx.end_us, self._tx_end, tx, kind="tx_end", target=tx.source)

    def _tx_end(self, tx: phy.Transmission) -> None:
        owner = self._owners.pop(id(tx), None)
        self.engine.trace("tx_end", tx.source, frame=tx.kind)
        self._deliver(tx)
        if owner is not None:
            owner.on_own_tx_end(tx)
        now = self.engine.now_us
        if len(self.active) > 8:
            self.active = [t for t in self.active if t.end_us >= now - _PRUNE_HORIZON_US]

    # -- reception -------------------------------------------------------

    def _decodable(self, tx: phy.Transmission, dst_eid: str, window0_us: int) -> str:
        """Outcome of frame tx at one listener, window open since window0_us."""
        r = self._rssi(tx, dst_eid)
        if r < self._sens(tx.dr):
            return BELOW_SENSITIVITY
        key = sf_key(tx.dr)
        for other in self.active:
            if other is tx or other.freq_hz != tx.freq_hz or sf_key(other.dr) != key:
                continue
            if other.source == dst_eid:
                continue
            if not other.overlaps(tx.start_us, tx.end_us):
                continue
            if not other.overlaps(window0_us, tx.end_us):
                continue
            r_other = self._rssi(other, dst_eid)
            if r_other < self._sens(other.dr):
                continue
            if r < r_other + self.capture_threshold_db:
                return COLLISION
        return DECODED

    def _deliver(self, tx: phy.Transmission) -> None:
        engine = self.engine
        key = sf_key(tx.dr)
        for eid in sorted(self._listeners):
            lst = self._listeners.get(eid)
            if lst is None or eid == tx.source:
                continue
            if lst.freq_hz != tx.freq_hz or lst.sf != key:
                continue
            if not tx.overlaps(lst.opened_us, engine.now_us + 1):
                continue
            outcome = self._decodable(tx, eid, lst.opened_us)
            if outcome == DECODED and tx.kind.startswith("d2d") and self.d2d_frame_loss_prob > 0.0:
                draw = engine.rng.stream(f"d2dloss:{eid}").random()
                if draw < self.d2d_frame_loss_prob:
                    engine.count("d2d_frames_lost")
                    engine.trace("drop", eid, reason="d2d_loss", source=tx.source)
                    continue
            if outcome == DECODED:
                engine.trace("decode", eid, source=tx.source, frame=tx.kind, bytes=tx.phy_payload_bytes)
                lst.entity.on_frame_decoded(tx)
            else:
                engine.count(outcome)
                engine.trace("drop", eid, reason=outcome, source=tx.source)
        if tx.kind in ("uplink", "join_request"):
            for eid in sorted(self._gateways):
                gw = self._gateways[eid]
                if tx.freq_hz not in gw.channels:
                    continue
                outcome = self._decodable(tx, eid, 0)
                if outcome == DECODED:
                    engine.trace("decode", eid, source=tx.source, frame=tx.kind, bytes=tx.phy_payload_bytes)
                    gw.entity.on_frame_decoded(tx)
                else:
                    engine.count(outcome)
                    engine.trace("drop", eid, reason=outcome, source=tx.source)
