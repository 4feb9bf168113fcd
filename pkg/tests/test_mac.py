import pytest

import helpers
from lorad2d import mac, phy, regulator
from lorad2d.d2d import ExchangeParams
from lorad2d.mac import MacState, MacTimings
from lorad2d.netserver import DeviceRecord, NetworkServer


def uplink_starts(engine, eid):
    return [r["t_us"] for r in helpers.records(engine, "tx_start", entity=eid)
            if r["frame"] == "uplink"]


def test_unjittered_uplinks_sit_on_the_grid():
    engine, medium = helpers.make_rig()
    dev = helpers.make_device(engine, medium, period_s=10.0, phase_s=1.0, dr=5)
    dev.start()
    engine.run(until_us=51_000_000)
    assert uplink_starts(engine, "dev") == [1_000_000 + k * 10_000_000
                                            for k in range(6)]


def test_jitter_is_bounded_and_does_not_accumulate():
    engine, medium = helpers.make_rig(seed=3)
    dev = helpers.make_device(engine, medium, period_s=10.0, phase_s=1.0,
                              jitter_frac=0.05, dr=5)
    dev.start()
    engine.run(until_us=1_000_000_000)
    starts = uplink_starts(engine, "dev")
    assert len(starts) == 100
    offsets = [t - (1_000_000 + k * 10_000_000) for k, t in enumerate(starts)]
    assert all(abs(off) <= 500_000 for off in offsets)
    # late cycles are as tight as early ones: drift would show up here
    assert max(abs(o) for o in offsets[-20:]) <= 500_000
    assert len({o for o in offsets}) > 10    # jitter actually draws


def test_devices_draw_from_private_streams():
    def run_one(extra_device):
        engine, medium = helpers.make_rig(seed=7)
        dev = helpers.make_device(engine, medium, eid="x", period_s=10.0,
                                  phase_s=1.0, jitter_frac=0.05, dr=5)
        dev.start()
        if extra_device:
            other = helpers.make_device(engine, medium, eid="y",
                                        dev_addr=0x0100_0009, period_s=10.0,
                                        phase_s=2.0, jitter_frac=0.05, dr=5,
                                        channels_hz=(helpers.CH1,))
            other.start()
        engine.run(until_us=200_000_000)
        return uplink_starts(engine, "x")

    assert run_one(False) == run_one(True)


def test_channel_choice_is_uniform():
    engine, medium = helpers.make_rig(seed=11, trace=False)
    channels = (helpers.CH0, helpers.CH1, helpers.CH2)
    dev = helpers.make_device(engine, medium, period_s=3.0, phase_s=0.5, dr=5,
                              channels_hz=channels, max_uplinks=10_000)
    counts = dict.fromkeys(channels, 0)
    original = medium.begin_tx

    def counting_begin_tx(tx, owner):
        counts[tx.freq_hz] += 1
        original(tx, owner)

    medium.begin_tx = counting_begin_tx
    dev.start()
    engine.run(until_us=30_001_000_000)
    total = sum(counts.values())
    assert total == 10_000
    for freq in channels:
        assert counts[freq] / total == pytest.approx(1 / 3, abs=0.02)


def test_transmit_is_pure_aloha():
    # two co-channel devices with the same phase: both still transmit
    engine, medium = helpers.make_rig()
    a = helpers.make_device(engine, medium, eid="a", period_s=10.0, phase_s=1.0)
    b = helpers.make_device(engine, medium, eid="b", dev_addr=0x0100_0002,
                            position=(50.0, 0.0), period_s=10.0, phase_s=1.0)
    a.start()
    b.start()
    engine.run(until_us=12_000_000)
    assert len(uplink_starts(engine, "a")) == 2
    assert len(uplink_starts(engine, "b")) == 2
    overlap = set()
    for ta in uplink_starts(engine, "a"):
        for tb in uplink_starts(engine, "b"):
            if ta == tb:
                overlap.add(ta)
    assert overlap                        # they collide rather than defer


def test_duty_enforcement_defers_the_grid():
    engine, medium = helpers.make_rig()
    dev = helpers.make_device(engine, medium, period_s=4.8, phase_s=0.0,
                              dr=0, app_payload_bytes=51, duty_enforced=True)
    dev.start()
    engine.run(until_us=600_000_000)
    starts = uplink_starts(engine, "dev")
    assert len(starts) >= 2
    toa = phy.time_on_air_us(0, 64)
    off = regulator.off_time_us(toa, 0.01)
    for earlier, later in zip(starts, starts[1:]):
        assert later >= earlier + toa + off
    assert dev.counters["duty_deferrals"] >= 1
    assert any(r["kind"] == "duty_defer" for r in engine.trace_records)


def test_rx_windows_follow_the_uplink():
    engine, medium = helpers.make_rig()
    dev = helpers.make_device(engine, medium, period_s=10.0, phase_s=1.0,
                              dr=5, max_uplinks=1)
    dev.start()
    engine.run(until_us=10_000_000)
    tx_end = uplink_starts(engine, "dev")[0] + phy.time_on_air_us(5, 25)
    opens = helpers.records(engine, "rx_open", entity="dev")
    assert [r["window"] for r in opens] == [1, 2]
    assert opens[0]["t_us"] == tx_end + 1_000_000
    assert opens[1]["t_us"] == tx_end + 2_000_000
    assert opens[0]["freq_hz"] == helpers.CH0      # RX1 mirrors the uplink
    assert opens[0]["dr"] == 5
    assert opens[1]["freq_hz"] == helpers.RX2_FREQ
    assert opens[1]["dr"] == helpers.RX2_DR


def wire_device_and_server(engine, medium, *, dev_kw=None, rx2_dr=helpers.RX2_DR):
    dev_kw = dict(dev_kw or {})
    dev_kw.setdefault("position", (0.0, 0.0))
    dev_kw.setdefault("rx2_dr", rx2_dr)
    dev = helpers.make_device(engine, medium, **dev_kw)
    timings = MacTimings()
    server = NetworkServer(engine, timings=timings,
                           rx2_freq_hz=helpers.RX2_FREQ, rx2_dr=rx2_dr)
    import lorad2d.netserver as netserver
    gw = netserver.Gateway(engine, medium, eid="gw0", position=(1000.0, 0.0),
                           channels_hz=[helpers.CH0, helpers.CH1],
                           tx_power_dbm=14, backhaul_delay_s=0.02,
                           bands=regulator.DEFAULT_BANDS, duty_enforced=False)
    gw.server = server
    helpers.register(server, dev)
    return dev, server, gw


def test_small_downlink_arrives_in_first_window():
    engine, medium = helpers.make_rig()
    dev, server, _ = wire_device_and_server(
        engine, medium, dev_kw=dict(period_s=30.0, phase_s=1.0, dr=0,
                                    max_uplinks=1))
    server.enqueue_downlink(dev.dev_addr, port=1, app_bytes=12)
    dev.start()
    engine.run(until_us=20_000_000)
    assert dev.counters["downlinks_rw1"] == 1
    assert dev.counters["downlinks_rw2"] == 0
    assert dev.app_deliveries and dev.app_deliveries[0][1] == 12
    rx = helpers.records(engine, "downlink_rx", entity="dev")[0]
    assert rx["window"] == 1


def test_oversized_downlink_falls_back_to_second_window():
    # 110 application bytes never fit the DR0 first window but do fit RX2 at DR3
    engine, medium = helpers.make_rig()
    dev, server, _ = wire_device_and_server(
        engine, medium, rx2_dr=3,
        dev_kw=dict(period_s=30.0, phase_s=1.0, dr=0, max_uplinks=1))
    server.enqueue_downlink(dev.dev_addr, port=1, app_bytes=110)
    dev.start()
    engine.run(until_us=20_000_000)
    assert dev.counters["downlinks_rw1"] == 0
    assert dev.counters["downlinks_rw2"] == 1
    rx = helpers.records(engine, "downlink_rx", entity="dev")[0]
    assert rx["window"] == 2


def test_long_first_window_downlink_suppresses_second_window():
    # a 46 B frame at DR0 lasts ~2.6 s, so reception is still in progress
    # when the second window would open; the device must not tear it down
    engine, medium = helpers.make_rig()
    dev, server, _ = wire_device_and_server(
        engine, medium, dev_kw=dict(period_s=30.0, phase_s=1.0, dr=0,
                                    max_uplinks=1))
    assert phy.time_on_air_us(0, 46 + 13) > 1_000_000
    server.enqueue_downlink(dev.dev_addr, port=1, app_bytes=46)
    dev.start()
    engine.run(until_us=20_000_000)
    assert dev.counters["downlinks_rw1"] == 1
    opens = helpers.records(engine, "rx_open", entity="dev")
    assert [r["window"] for r in opens] == [1]
    assert dev.mac_state is MacState.SLEEP


def test_uplink_cap_stops_the_device():
    engine, medium = helpers.make_rig()
    dev = helpers.make_device(engine, medium, period_s=5.0, phase_s=0.0,
                              dr=5, max_uplinks=47)
    dev.start()
    engine.run(until_us=1_000_000_000)
    assert dev.counters["uplinks_sent"] == 47
    assert len(uplink_starts(engine, "dev")) == 47


def test_join_handshake_assigns_an_address():
    engine, medium = helpers.make_rig()
    dev, server, _ = wire_device_and_server(
        engine, medium, dev_kw=dict(dev_addr=None, prejoined=False,
                                    period_s=10.0, phase_s=1.0, dr=5))
    dev.start()
    engine.run(until_us=60_000_000)
    assert dev.dev_addr == 0x0100_0001
    assert dev.mac_state is not MacState.NOT_JOINED
    assert dev.counters["join_attempts"] == 1
    kinds = helpers.trace_kinds(engine, entity="dev")
    assert "join_request" in kinds and "join_complete" in kinds
    # the reporting grid restarts one period after the accept
    accept_t = helpers.records(engine, "join_complete", entity="dev")[0]["t_us"]
    first_uplink = uplink_starts(engine, "dev")[0]
    assert first_uplink == accept_t + 10_000_000
    assert server.counters["joins_accepted"] == 1


def test_join_rejection_keeps_retrying():
    engine, medium = helpers.make_rig()
    dev, server, _ = wire_device_and_server(
        engine, medium, dev_kw=dict(dev_addr=None, prejoined=False,
                                    period_s=10.0, phase_s=1.0, dr=5))
    server.join_success_prob = 0.0
    dev.start()
    engine.run(until_us=45_000_000)
    assert dev.dev_addr is None
    assert dev.mac_state is MacState.NOT_JOINED
    assert dev.counters["join_attempts"] >= 4
    assert server.counters["joins_dropped"] >= 4


def test_out_of_range_device_never_joins():
    engine, medium = helpers.make_rig()
    dev, server, _ = wire_device_and_server(
        engine, medium, dev_kw=dict(dev_addr=None, prejoined=False,
                                    period_s=10.0, phase_s=1.0, dr=5,
                                    position=(200_000.0, 0.0)))
    dev.start()
    engine.run(until_us=45_000_000)
    assert dev.dev_addr is None
    assert engine.counters.get("below_sensitivity", 0) >= 4
    assert server.counters["joins_accepted"] == 0


def test_duty_cycle_switch_throttles_peer_traffic():
    engine, medium = helpers.make_rig()
    init_dev, scan_dev = helpers.arm_pair(engine, medium, t1_initiator_s=1.0)
    for dev in (init_dev, scan_dev):
        dev.duty = regulator.DutyLedger(bands=regulator.DEFAULT_BANDS,
                                        enforced=True)
        dev.duty_applies_to_d2d = True
    engine.run(until_us=40_000_000)
    init = init_dev.session_history[0]
    # 240 B at DR6 in a 1 % band: ~7.6 s of silence per data frame, so the
    # 30 s budget cannot carry ten packets
    assert init.state.value == "failed"
    assert init.fail_reason == "session_timeout"
    toa = phy.time_on_air_us(6, 253)
    starts = [r["t_us"] for r in helpers.records(engine, "tx_start", entity="init")]
    for earlier, later in zip(starts, starts[1:]):
        assert later >= earlier + toa + regulator.off_time_us(toa, 0.01)
