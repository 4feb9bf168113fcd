"""Hand-wired simulation rigs shared by the unit tests."""

from __future__ import annotations

from lorad2d import d2d, mac, netserver, phy, regulator
from lorad2d.engine import Engine, Medium

CH0 = 868_100_000
CH1 = 868_300_000
CH2 = 868_500_000
RX2_FREQ = 869_525_000
RX2_DR = 0


def make_rig(seed: int = 0, *, trace: bool = True,
             capture_threshold_db: float = 6.0,
             d2d_frame_loss_prob: float = 0.0,
             sensitivity_table: dict[int, float] | None = None):
    engine = Engine(seed=seed, trace=trace)
    medium = Medium(engine, phy.PathLossModel(),
                    sensitivity_table=sensitivity_table,
                    capture_threshold_db=capture_threshold_db,
                    d2d_frame_loss_prob=d2d_frame_loss_prob)
    return engine, medium


def make_device(engine, medium, *, eid="dev", dev_addr=0x0100_0001,
                position=(0.0, 0.0), period_s=10.0, phase_s=1.0,
                jitter_frac=0.0, dr=0, tx_power_dbm=14, app_payload_bytes=12,
                channels_hz=(CH0,), rx2_freq_hz=RX2_FREQ, rx2_dr=RX2_DR,
                timings=None, bands=regulator.DEFAULT_BANDS,
                duty_enforced=False, duty_applies_to_d2d=False,
                max_uplinks=None, prejoined=True, d2d_params=None):
    return mac.EndDevice(
        engine, medium, eid=eid, dev_addr=dev_addr, position=position,
        period_s=period_s, phase_s=phase_s, jitter_frac=jitter_frac, dr=dr,
        tx_power_dbm=tx_power_dbm, app_payload_bytes=app_payload_bytes,
        channels_hz=list(channels_hz), rx2_freq_hz=rx2_freq_hz, rx2_dr=rx2_dr,
        timings=timings or mac.MacTimings(), bands=bands,
        duty_enforced=duty_enforced, duty_applies_to_d2d=duty_applies_to_d2d,
        max_uplinks=max_uplinks, prejoined=prejoined, d2d_params=d2d_params)


def make_server(engine, medium, *, gateways=(("gw0", (2000.0, 0.0)),),
                channels_hz=(CH0, CH1), timings=None, backhaul_delay_s=0.02,
                gw_duty_enforced=False, join_success_prob=1.0):
    timings = timings or mac.MacTimings()
    server = netserver.NetworkServer(
        engine, timings=timings, rx2_freq_hz=RX2_FREQ, rx2_dr=RX2_DR,
        join_success_prob=join_success_prob)
    gws = {}
    for eid, position in gateways:
        gw = netserver.Gateway(engine, medium, eid=eid, position=position,
                               channels_hz=list(channels_hz), tx_power_dbm=14,
                               backhaul_delay_s=backhaul_delay_s,
                               bands=regulator.DEFAULT_BANDS,
                               duty_enforced=gw_duty_enforced)
        gw.server = server
        gws[eid] = gw
    return server, gws


def register(server, dev, *, period_s=None):
    server.register_device(netserver.DeviceRecord(
        eid=dev.eid, dev_addr=dev.dev_addr, dr=dev.uplink_dr,
        app_payload_bytes=dev.app_payload_bytes,
        period_s=(period_s if period_s is not None else dev.period_us / 1e6),
        jitter_frac=dev.jitter_frac))


def arm_pair(engine, medium, *, freq_hz=865_000_000, dr=6, power_dbm=14,
             t1_initiator_s=0.0, t1_scanner_s=0.0, t2_s=30.0, params=None,
             distance_m=10.0):
    """Two idle devices with activated sessions, the way a setup downlink
    would leave them.  Returns (initiator_device, scanner_device)."""
    params = params or d2d.ExchangeParams()
    init_dev = make_device(engine, medium, eid="init", dev_addr=0x11,
                           position=(0.0, 0.0), period_s=1000.0,
                           phase_s=900.0, d2d_params=params)
    scan_dev = make_device(engine, medium, eid="scan", dev_addr=0x22,
                           position=(distance_m, 0.0), period_s=1000.0,
                           phase_s=900.0, d2d_params=params)
    for dev, role, t1 in ((init_dev, d2d.Role.INITIATOR, t1_initiator_s),
                          (scan_dev, d2d.Role.SCANNER, t1_scanner_s)):
        peer = scan_dev if dev is init_dev else init_dev
        cmd = d2d.D2DSetupCommand(role=role, freq_hz=freq_hz, dr=dr,
                                  power_dbm=power_dbm, t1_s=t1, t2_s=t2_s,
                                  peer_addr=peer.dev_addr)
        session = d2d.D2DSession(cmd, dev.dev_addr, engine.now_us, params)
        dev.pending_d2d = cmd
        dev.session = session
        dev.mac_state = mac.MacState.D2D_SUSPENDED
        session.activate(dev)
    return init_dev, scan_dev


def trace_kinds(engine, entity=None):
    return [r["kind"] for r in engine.trace_records
            if entity is None or r["entity"] == entity]


def records(engine, kind, entity=None):
    return [r for r in engine.trace_records if r["kind"] == kind
            and (entity is None or r["entity"] == entity)]
