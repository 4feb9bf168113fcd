import pytest

import helpers
from lorad2d import d2d, phy
from lorad2d.mac import LoRaWANUplink
from lorad2d.netserver import (DeviceRecord, DownlinkError,
                               InfeasiblePlanError, PlanError)


def fake_uplink(addr, fcnt, *, start_us=1_000_000, dr=0, app=12):
    return phy.Transmission(
        start_us=start_us, duration_us=phy.time_on_air_us(dr, app + 13),
        freq_hz=helpers.CH0, dr=dr, tx_power_dbm=14, phy_payload_bytes=app + 13,
        source="dev", kind="uplink",
        frame=LoRaWANUplink(addr, fcnt, 1, app))


def record(addr, *, eid=None, dr=0, app=12, period_s=9.6, jitter=0.0):
    return DeviceRecord(eid=eid or f"d{addr:x}", dev_addr=addr, dr=dr,
                        app_payload_bytes=app, period_s=period_s,
                        jitter_frac=jitter)


def make_server(engine, medium, **kw):
    server, gws = helpers.make_server(engine, medium, **kw)
    return server, list(gws.values())


def test_two_gateways_hear_one_uplink_once():
    engine, medium = helpers.make_rig()
    server, gws = make_server(engine, medium,
                              gateways=(("gw0", (1000.0, 0.0)),
                                        ("gw1", (-1000.0, 0.0))))
    dev = helpers.make_device(engine, medium, period_s=30.0, phase_s=1.0,
                              max_uplinks=1)
    helpers.register(server, dev)
    dev.start()
    engine.run(until_us=10_000_000)
    assert all(gw.counters["uplinks_decoded"] == 1 for gw in gws)
    assert server.counters["uplinks"] == 1
    assert server.counters["dedup_drops"] == 1
    assert server.uplinks_by_addr[dev.dev_addr] == 1


def test_replayed_frame_counter_is_dropped():
    engine, medium = helpers.make_rig()
    server, (gw,) = make_server(engine, medium)
    server.register_device(record(0x10))
    server.on_uplink(fake_uplink(0x10, fcnt=0), gw)
    server.on_uplink(fake_uplink(0x10, fcnt=0, start_us=9_000_000), gw)
    server.on_uplink(fake_uplink(0x10, fcnt=1, start_us=20_000_000), gw)
    assert server.counters["uplinks"] == 2
    assert server.counters["dedup_drops"] == 1
    assert server.uplinks_by_addr[0x10] == 2


def test_unregistered_addresses_are_ignored():
    engine, medium = helpers.make_rig()
    server, (gw,) = make_server(engine, medium)
    server.on_uplink(fake_uplink(0x99, fcnt=0), gw)
    assert server.counters["uplinks"] == 0


def test_downlink_size_gatekeeping():
    engine, medium = helpers.make_rig()
    server, _ = make_server(engine, medium)           # RX2 at DR0: 59 B MAC
    server.register_device(record(0x10, dr=3))        # RX1 at DR3: 123 B MAC
    server.enqueue_downlink(0x10, port=1, app_bytes=110)
    with pytest.raises(DownlinkError):
        server.enqueue_downlink(0x10, port=1, app_bytes=111)
    with pytest.raises(DownlinkError):
        server.enqueue_downlink(0x10, port=1, app_bytes=240)
    with pytest.raises(DownlinkError):
        server.enqueue_downlink(0x77, port=1, app_bytes=5)


def test_transfer_endpoints_must_be_joined():
    engine, medium = helpers.make_rig()
    server, _ = make_server(engine, medium)
    server.register_device(record(0x10))
    with pytest.raises(PlanError):
        server.add_transfer(0x10, 0x11, 1000)
    server.register_device(record(0x11))
    transfer = server.add_transfer(0x10, 0x11, 1000)
    assert transfer.total_bytes == 1000


def test_transfer_relays_uplink_payloads_as_downlinks():
    engine, medium = helpers.make_rig()
    server, (gw,) = make_server(engine, medium)
    src = helpers.make_device(engine, medium, eid="src", dev_addr=0x10,
                              period_s=10.0, phase_s=1.0, dr=0,
                              app_payload_bytes=12, max_uplinks=3)
    dst = helpers.make_device(engine, medium, eid="dst", dev_addr=0x11,
                              position=(10.0, 0.0), period_s=10.0, phase_s=6.0,
                              dr=0, app_payload_bytes=12,
                              channels_hz=(helpers.CH1,))
    for dev in (src, dst):
        helpers.register(server, dev)
    server.add_transfer(0x10, 0x11, total_bytes=30)
    src.start()
    dst.start()
    engine.run(until_us=60_000_000)
    tr = server.transfers[0]
    assert tr.bytes_relayed == 30                  # 12 + 12 + 6
    assert tr.chunks_relayed == 3
    assert [b for _, b in dst.app_deliveries] == [12, 12, 6]


def test_gateway_duty_defers_downlinks_until_legal():
    engine, medium = helpers.make_rig()
    server, (gw,) = make_server(engine, medium, gw_duty_enforced=True)
    dev = helpers.make_device(engine, medium, period_s=10.0, phase_s=1.0,
                              dr=0, app_payload_bytes=12)
    helpers.register(server, dev)
    for _ in range(3):
        server.enqueue_downlink(dev.dev_addr, port=1, app_bytes=46)
    dev.start()
    engine.run(until_us=60_000_000)
    # 46 B at DR0 is ~2.6 s on air: the 1 % uplink band sustains one frame,
    # the 10 % RX2 band roughly one frame every 26 s
    assert dev.counters["downlinks_rw1"] == 1
    assert dev.counters["downlinks_rw2"] == 2
    assert server.counters["downlinks_deferred"] >= 2
    assert len(dev.app_deliveries) == 3


# -- session planning --------------------------------------------------------


def planning_server():
    engine, medium = helpers.make_rig()
    server, _ = make_server(engine, medium)
    server.register_device(record(0x01, eid="init"))
    server.register_device(record(0x02, eid="scan"))
    return server


PLAN = dict(initiator_addr=0x01, scanner_addr=0x02, freq_hz=865_000_000,
            dr=6, power_dbm=14, t1_initiator_s=15.0, t1_scanner_s=0.0,
            t2_s=30.0)


def test_plan_produces_mirrored_commands_scanner_first():
    plans = planning_server().plan_d2d(**PLAN)
    assert [addr for addr, _ in plans] == [0x02, 0x01]
    scan_cmd, init_cmd = plans[0][1], plans[1][1]
    assert scan_cmd.role is d2d.Role.SCANNER
    assert init_cmd.role is d2d.Role.INITIATOR
    assert scan_cmd.peer_addr == 0x01 and init_cmd.peer_addr == 0x02
    assert scan_cmd.t1_s == 0.0 and init_cmd.t1_s == 15.0
    for attr in ("freq_hz", "dr", "power_dbm", "t2_s"):
        assert getattr(scan_cmd, attr) == getattr(init_cmd, attr)


def test_plan_rejects_invalid_link_parameters():
    server = planning_server()
    with pytest.raises(PlanError, match="DR9"):
        server.plan_d2d(**{**PLAN, "dr": 9})
    with pytest.raises(PlanError):
        server.plan_d2d(**{**PLAN, "freq_hz": 864_000_000})
    with pytest.raises(PlanError):
        server.plan_d2d(**{**PLAN, "power_dbm": 25})
    with pytest.raises(PlanError):
        server.plan_d2d(**{**PLAN, "scanner_addr": 0x01})
    with pytest.raises(PlanError):
        server.plan_d2d(**{**PLAN, "scanner_addr": 0x99})


def test_plan_rejects_insufficient_t1_gap():
    server = planning_server()
    # the scanner's setup can land a full reporting period after the
    # initiator's; a 5 s head start cannot bridge that skew
    with pytest.raises(InfeasiblePlanError, match="skew"):
        server.plan_d2d(**{**PLAN, "t1_initiator_s": 5.0})
    server.plan_d2d(**{**PLAN, "t1_initiator_s": 10.6})   # exactly enough


def test_plan_rejects_scanner_window_that_may_lapse():
    server = planning_server()
    with pytest.raises(InfeasiblePlanError, match="close"):
        server.plan_d2d(**{**PLAN, "t2_s": 20.0})


def test_execute_queues_both_setups():
    server = planning_server()
    server.execute_d2d(**PLAN)
    assert server.counters["setups_sent"] == 2
    for addr in (0x01, 0x02):
        queue = server.queues[addr]
        assert len(queue) == 1
        assert queue[0].port == d2d.SETUP_PORT
        decoded = d2d.decode_setup(queue[0].payload)
        assert decoded.peer_addr != addr
