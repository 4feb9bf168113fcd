"""Wire a scenario into a live simulation and run it.

Also home to the benchmark machinery: the two bundled benchmark scenarios
(`table2_conventional`, `table2_d2d`) replicate a published comparison of a
2400-byte transfer relayed over the network against the same transfer done
device-to-device.  REFERENCE_* hold the published figures; :func:`table2`
re-runs both scenarios and reports each cell next to its reference with the
relative error, and :func:`calibrate` fits a power profile so the simulated
state durations price out to the published energy totals.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import metrics, phy
from .energy import DEFAULT_PROFILE, PowerProfile, StateUsage, fit_profile
from .engine import Engine, Medium
from .mac import EndDevice, MacTimings
from .netserver import (DeviceRecord, DownlinkError, Gateway, NetworkServer,
                        PlanError)
from .scenario import Scenario, load_bundled

CONVENTIONAL_SCENARIO = "table2_conventional"
D2D_SCENARIO = "table2_d2d"

# Published benchmark figures the bundled scenarios are checked against.
REFERENCE_TIME_S = {"conventional": 225.6, "d2d": 30.2}
REFERENCE_ENERGY_J = {
    "transmitter": 15.696,   # conventional uplink sender, whole run
    "receiver": 9.120,       # conventional downlink receiver, whole run
    "initiator": 0.817,      # D2D sender, session window
    "scanner": 1.494,        # D2D receiver, session window
}
# Which device in which benchmark scenario plays each role.
ROLE_SOURCE = {
    "transmitter": (CONVENTIONAL_SCENARIO, "transmitter"),
    "receiver": (CONVENTIONAL_SCENARIO, "receiver"),
    "initiator": (D2D_SCENARIO, "initiator"),
    "scanner": (D2D_SCENARIO, "scanner"),
}


@dataclass
class RunResult:
    scenario: Scenario
    engine: Engine
    devices: dict[str, EndDevice]
    gateways: dict[str, Gateway]
    ns: NetworkServer
    d2d_log: list[dict] = field(default_factory=list)
    document: dict = field(default_factory=dict)

    def trace_jsonl(self) -> str:
        return self.engine.trace_jsonl()


def run(scn: Scenario, *, seed: int | None = None, trace: bool = False,
        profile: PowerProfile | None = None,
        detailed_energy: bool = True) -> RunResult:
    """Execute a scenario to its end time and summarize it.

    The seed defaults to the scenario's own; `profile` prices the energy
    ledgers in the output document (scenario-embedded profile, then the
    generic default).  `detailed_energy=False` drops per-segment ledger
    history, which large sweeps want.
    """
    scn.validate()
    if seed is None:
        seed = scn.seed
    if profile is None:
        profile = scn.profile if scn.profile is not None else DEFAULT_PROFILE

    engine = Engine(seed=seed, trace=trace)
    medium = Medium(
        engine,
        phy.PathLossModel(scn.radio.pl0_db, scn.radio.d0_m, scn.radio.exponent),
        sensitivity_table=scn.sensitivity_dbm,
        capture_threshold_db=scn.radio.capture_threshold_db,
        d2d_frame_loss_prob=scn.radio.d2d_frame_loss_prob,
    )
    timings = MacTimings(scn.receive_delay1_s, scn.receive_delay2_s,
                         scn.preamble_detect_symbols)
    bands = scn.effective_bands
    ns = NetworkServer(engine, timings=timings, rx2_freq_hz=scn.rx2_freq_hz,
                       rx2_dr=scn.rx2_dr, join_success_prob=scn.join_success_prob,
                       bands=bands)

    gateways: dict[str, Gateway] = {}
    for gspec in scn.gateways:
        gw = Gateway(engine, medium, eid=gspec.eid, position=gspec.position,
                     channels_hz=gspec.channels_hz, tx_power_dbm=gspec.tx_power_dbm,
                     backhaul_delay_s=scn.backhaul_delay_s, bands=bands,
                     duty_enforced=scn.duty_cycle_enforced)
        gw.server = ns
        gateways[gspec.eid] = gw

    # the exchange parameters travel out of band: provision each session
    # participant with the directive that names it
    exchange_for: dict[str, object] = {}
    for directive in scn.d2d_directives:
        exchange_for[directive.initiator] = directive.exchange
        exchange_for[directive.scanner] = directive.exchange

    devices: dict[str, EndDevice] = {}
    for dspec in scn.devices:
        dev = EndDevice(
            engine, medium, eid=dspec.eid, dev_addr=dspec.dev_addr,
            position=dspec.position, period_s=dspec.period_s, phase_s=dspec.phase_s,
            jitter_frac=dspec.jitter_frac, dr=dspec.dr,
            tx_power_dbm=dspec.tx_power_dbm,
            app_payload_bytes=dspec.app_payload_bytes,
            channels_hz=dspec.channels_hz, rx2_freq_hz=scn.rx2_freq_hz,
            rx2_dr=scn.rx2_dr, timings=timings, bands=bands,
            duty_enforced=scn.duty_cycle_enforced,
            duty_applies_to_d2d=scn.duty_cycle_applies_to_d2d,
            max_uplinks=dspec.max_uplinks, prejoined=dspec.prejoined,
            d2d_params=exchange_for.get(dspec.eid),
            detailed_energy=detailed_energy,
        )
        devices[dspec.eid] = dev
        ns.register_device(DeviceRecord(
            eid=dspec.eid, dev_addr=dspec.dev_addr, dr=dspec.dr,
            app_payload_bytes=dspec.app_payload_bytes, period_s=dspec.period_s,
            jitter_frac=dspec.jitter_frac,
            joined=dspec.prejoined and dspec.dev_addr is not None))

    d2d_log: list[dict] = []

    def fire_transfer(tspec):
        src = devices[tspec.source]
        dst = devices[tspec.dest]
        try:
            if src.dev_addr is None or dst.dev_addr is None:
                raise PlanError("transfer endpoints must both be joined")
            ns.add_transfer(src.dev_addr, dst.dev_addr, tspec.total_bytes, tspec.port)
        except (PlanError, DownlinkError) as exc:
            engine.count("transfer_failed")
            engine.trace("transfer_failed", "ns", source=tspec.source,
                         dest=tspec.dest, error=str(exc))

    def fire_directive(dspec):
        entry = {"initiator": dspec.initiator, "scanner": dspec.scanner,
                 "trigger_us": engine.now_us, "error": None}
        init_dev = devices[dspec.initiator]
        scan_dev = devices[dspec.scanner]
        try:
            if init_dev.dev_addr is None or scan_dev.dev_addr is None:
                raise PlanError("session participants must both be joined")
            ns.execute_d2d(
                initiator_addr=init_dev.dev_addr, scanner_addr=scan_dev.dev_addr,
                freq_hz=dspec.freq_hz, dr=dspec.dr, power_dbm=dspec.power_dbm,
                t1_initiator_s=dspec.t1_initiator_s,
                t1_scanner_s=dspec.t1_scanner_s, t2_s=dspec.t2_s,
                exchange=dspec.exchange)
        except (PlanError, DownlinkError) as exc:
            entry["error"] = str(exc)
            engine.count("d2d_plan_failed")
            engine.trace("d2d_plan_failed", "ns", initiator=dspec.initiator,
                         scanner=dspec.scanner, error=str(exc))
        d2d_log.append(entry)

    for tspec in scn.transfers:
        engine.schedule(round(tspec.at_s * 1e6), fire_transfer, tspec,
                        kind="transfer_start", target="ns")
    for dspec in scn.d2d_directives:
        engine.schedule(round(dspec.at_s * 1e6), fire_directive, dspec,
                        kind="d2d_directive", target="ns")
    for dev in devices.values():
        dev.start()

    engine.run(until_us=round(scn.end_time_s * 1e6))
    for dev in devices.values():
        dev.finalize(engine.now_us)

    result = RunResult(scenario=scn, engine=engine, devices=devices,
                       gateways=gateways, ns=ns, d2d_log=d2d_log)
    result.document = metrics.build(engine, scn, profile, devices, gateways,
                                    ns, d2d_log)
    return result


# -- benchmark ----------------------------------------------------------------


def benchmark_runs(seed: int = 0) -> dict[str, RunResult]:
    """Run both bundled benchmark scenarios with detailed energy ledgers."""
    return {name: run(load_bundled(name), seed=seed)
            for name in (CONVENTIONAL_SCENARIO, D2D_SCENARIO)}


def benchmark_usages(runs: dict[str, RunResult]) -> dict[str, StateUsage]:
    """Per-role radio state durations over each role's accounting window.

    Conventional roles are costed over the whole run; D2D roles over their
    session window only (setup command to terminal state), which is what the
    published per-session figures cover.
    """
    usages: dict[str, StateUsage] = {}
    for role, (scn_name, eid) in ROLE_SOURCE.items():
        dev = runs[scn_name].devices[eid]
        if scn_name == D2D_SCENARIO:
            if not dev.session_history:
                raise RuntimeError(f"benchmark run produced no session for {eid}")
            session = dev.session_history[0]
            if session.terminal_us is None:
                raise RuntimeError(f"benchmark session for {eid} never terminated")
            usages[role] = dev.ledger.usage(session.activation_us, session.terminal_us)
        else:
            usages[role] = dev.ledger.usage()
    return usages


def calibrate(seed: int = 0, runs: dict[str, RunResult] | None = None,
              ) -> tuple[PowerProfile, dict[str, dict]]:
    """Fit a power profile so benchmark state durations match the published
    per-role energy totals.  Returns the profile and per-role residuals."""
    if runs is None:
        runs = benchmark_runs(seed)
    usages = benchmark_usages(runs)
    return fit_profile(usages, REFERENCE_ENERGY_J, name="benchmark-fit")


def _benchmark_times(runs: dict[str, RunResult]) -> dict[str, float | None]:
    conv_doc = runs[CONVENTIONAL_SCENARIO].document
    d2d_doc = runs[D2D_SCENARIO].document
    conv_time = None
    if conv_doc["transfers"]:
        conv_time = conv_doc["transfers"][0]["total_transfer_time_s"]
    d2d_time = None
    if d2d_doc["d2d_sessions"]:
        d2d_time = d2d_doc["d2d_sessions"][0]["session_time_s"]
    return {"conventional": conv_time, "d2d": d2d_time}


def table2(seed: int = 0, profile: PowerProfile | None = None) -> dict:
    """Run both benchmark scenarios and compare against the published table.

    With no profile given, one is calibrated from the same runs first.  The
    returned document carries, for each cell, the simulated value, the
    reference and the relative error, plus the headline ratios.
    """
    runs = benchmark_runs(seed)
    residuals = None
    if profile is None:
        profile, residuals = calibrate(runs=runs)
    usages = benchmark_usages(runs)
    times = _benchmark_times(runs)

    def cell(simulated, reference):
        rel = None if simulated is None else (simulated - reference) / reference
        return {"simulated": simulated, "reference": reference, "rel_err": rel}

    energy = {}
    for role, usage in usages.items():
        energy[role] = cell(usage.energy_j(profile)["total_j"],
                            REFERENCE_ENERGY_J[role])

    doc = {
        "seed": seed,
        "profile": profile.to_dict(),
        "time_s": {k: cell(times[k], REFERENCE_TIME_S[k])
                   for k in ("conventional", "d2d")},
        "energy_j": energy,
        "ratios": {},
    }
    if residuals is not None:
        doc["calibration_residuals"] = residuals
    if times["conventional"] is not None and times["d2d"] is not None:
        doc["ratios"]["time_conventional_over_d2d"] = cell(
            times["conventional"] / times["d2d"],
            REFERENCE_TIME_S["conventional"] / REFERENCE_TIME_S["d2d"])
    for num, den in (("transmitter", "initiator"), ("receiver", "scanner")):
        sim_n = energy[num]["simulated"]
        sim_d = energy[den]["simulated"]
        if sim_n is not None and sim_d:
            doc["ratios"][f"energy_{num}_over_{den}"] = cell(
                sim_n / sim_d, REFERENCE_ENERGY_J[num] / REFERENCE_ENERGY_J[den])
    return doc


# -- sweeps -------------------------------------------------------------------


def summarize(result: RunResult) -> dict:
    """One flat row of headline numbers for a finished run."""
    doc = result.document
    net = doc["network"]
    duty_max_fraction = 0.0
    duty_frames = 0
    for dev in result.devices.values():
        for band in dev.duty.audit(result.engine.now_us).values():
            duty_frames += band["frames"]
            if band["frames"]:
                duty_max_fraction = max(duty_max_fraction, band["fraction"] / band["limit"])
    sessions = doc["d2d_sessions"]
    transfers = doc["transfers"]
    return {
        "scenario": doc["scenario"],
        "seed": doc["seed"],
        "end_time_s": doc["end_time_s"],
        "events": net["events_executed"],
        "uplinks_sent": sum(d["uplinks_sent"] for d in doc["devices"].values()),
        "uplinks_delivered": net["uplinks"],
        "collisions": net["collisions"],
        "below_sensitivity": net["below_sensitivity"],
        "downlinks_scheduled": net["downlinks_scheduled"],
        "duty_deferrals": sum(d["duty_deferrals"] for d in doc["devices"].values()),
        "duty_max_fraction_of_limit": duty_max_fraction,
        "duty_frames": duty_frames,
        "transfers_complete": sum(1 for t in transfers if t["complete"]),
        "transfers_total": len(transfers),
        "d2d_sessions_completed": sum(1 for s in sessions if s["completed"]),
        "d2d_sessions_total": len(sessions),
        "d2d_frames_lost": net["d2d_frames_lost"],
        "d2d_plan_failures": net["d2d_plan_failures"],
    }


def _sweep_worker(args: tuple[str, int]) -> dict:
    text, seed = args
    scn = Scenario.from_json(text)
    return summarize(run(scn, seed=seed, trace=False, detailed_energy=False))


def sweep(scn: Scenario, seeds, jobs: int | None = None) -> list[dict]:
    """Run one scenario under many seeds, each an independent simulation.

    Runs are isolated processes when jobs allows, so a sweep parallelizes
    cleanly; results come back ordered by seed list position.
    """
    text = scn.to_json()
    work = [(text, int(s)) for s in seeds]
    if jobs is not None and jobs <= 1:
        return [_sweep_worker(item) for item in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_worker, work, chunksize=max(1, len(work) // 32)))


def write_csv(rows: list[dict], fh) -> None:
    if not rows:
        return
    writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)
