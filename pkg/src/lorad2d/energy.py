"""Radio energy accounting and power-profile calibration.

A device keeps an :class:`EnergyLedger`: a timeline of radio states (tx at a
given power, rx, sleep) plus a count of host-to-radio commands.  Energy in
joules is only computed at the end, by pricing the ledger with a
:class:`PowerProfile`.  Profiles can be written by hand or fitted with
:func:`fit_profile` from measured per-role energy totals.

The TX draw is anchored at +14 dBm and scaled for other powers with a simple
PA model: a fixed fraction of the draw is overhead and the rest follows the
output power in linear units.  The scale is monotone in dBm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_TX_OVERHEAD_FRACTION = 0.4


class CalibrationError(RuntimeError):
    pass


def tx_power_scale(power_dbm: float) -> float:
    """Draw at `power_dbm` relative to the draw at +14 dBm."""
    return _TX_OVERHEAD_FRACTION + (1.0 - _TX_OVERHEAD_FRACTION) * 10.0 ** ((power_dbm - 14.0) / 10.0)


@dataclass(frozen=True)
class PowerProfile:
    name: str = "generic"
    supply_v: float = 3.0
    p_tx14_w: float = 0.12
    p_rx_w: float = 0.04
    p_sleep_w: float = 3e-6
    command_overhead_j: float = 0.0

    def p_tx_w(self, power_dbm: float) -> float:
        return self.p_tx14_w * tx_power_scale(power_dbm)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "supply_v": self.supply_v,
            "p_tx14_w": self.p_tx14_w,
            "p_rx_w": self.p_rx_w,
            "p_sleep_w": self.p_sleep_w,
            "command_overhead_j": self.command_overhead_j,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PowerProfile":
        return cls(**{k: data[k] for k in (
            "name", "supply_v", "p_tx14_w", "p_rx_w", "p_sleep_w", "command_overhead_j")})


DEFAULT_PROFILE = PowerProfile()


@dataclass
class StateUsage:
    """Seconds spent in each radio state over some interval, plus commands."""
    tx_s_by_power: dict[int, float] = field(default_factory=dict)
    rx_s: float = 0.0
    sleep_s: float = 0.0
    commands: int = 0

    @property
    def tx_s(self) -> float:
        return sum(self.tx_s_by_power.values())

    @property
    def total_s(self) -> float:
        return self.tx_s + self.rx_s + self.sleep_s

    def energy_j(self, profile: PowerProfile) -> dict[str, float]:
        tx = sum(profile.p_tx_w(p) * s for p, s in self.tx_s_by_power.items())
        rx = profile.p_rx_w * self.rx_s
        sleep = profile.p_sleep_w * self.sleep_s
        cmd = profile.command_overhead_j * self.commands
        return {"tx_j": tx, "rx_j": rx, "sleep_j": sleep, "commands_j": cmd,
                "total_j": tx + rx + sleep + cmd}


class EnergyLedger:
    """Timeline of radio states.  Times are integer microseconds.

    With `detailed=True` every segment and command timestamp is kept so the
    ledger can be sliced over arbitrary windows; otherwise only running
    totals are held (cheaper for long runs).
    """

    def __init__(self, detailed: bool = True):
        self.detailed = detailed
        self._state = "sleep"
        self._power: int | None = None
        self._since_us = 0
        self.totals_us: dict[tuple, int] = {}
        self.segments: list[tuple[int, int, str, int | None]] = []
        self.command_times_us: list[int] = []
        self.commands = 0
        self.end_us: int | None = None

    def set_state(self, t_us: int, state: str, power_dbm: int | None = None) -> None:
        if state not in ("tx", "rx", "sleep"):
            raise ValueError(f"unknown radio state {state!r}")
        if t_us < self._since_us:
            raise ValueError("energy ledger time went backwards")
        self._accumulate(t_us)
        self._state = state
        self._power = power_dbm if state == "tx" else None

    def command(self, t_us: int, n: int = 1) -> None:
        self.commands += n
        if self.detailed:
            self.command_times_us.extend([t_us] * n)

    def finalize(self, end_us: int) -> None:
        self._accumulate(end_us)
        self.end_us = end_us

    def _accumulate(self, t_us: int) -> None:
        dt = t_us - self._since_us
        if dt > 0:
            key = (self._state, self._power)
            self.totals_us[key] = self.totals_us.get(key, 0) + dt
            if self.detailed:
                self.segments.append((self._since_us, t_us, self._state, self._power))
        self._since_us = t_us

    def usage(self, a_us: int | None = None, b_us: int | None = None) -> StateUsage:
        if a_us is None and b_us is None:
            out = StateUsage(commands=self.commands)
            for (state, power), us in self.totals_us.items():
                if state == "tx":
                    out.tx_s_by_power[power] = out.tx_s_by_power.get(power, 0.0) + us / 1e6
                elif state == "rx":
                    out.rx_s += us / 1e6
                else:
                    out.sleep_s += us / 1e6
            return out
        if not self.detailed:
            raise ValueError("windowed usage needs a detailed ledger")
        a = a_us if a_us is not None else 0
        b = b_us if b_us is not None else (self.end_us or self._since_us)
        out = StateUsage()
        for (t0, t1, state, power) in self.segments:
            lo, hi = max(t0, a), min(t1, b)
            if hi <= lo:
                continue
            s = (hi - lo) / 1e6
            if state == "tx":
                out.tx_s_by_power[power] = out.tx_s_by_power.get(power, 0.0) + s
            elif state == "rx":
                out.rx_s += s
            else:
                out.sleep_s += s
        out.commands = sum(1 for t in self.command_times_us if a <= t < b)
        return out

    def energy_j(self, profile: PowerProfile,
                 a_us: int | None = None, b_us: int | None = None) -> dict[str, float]:
        return self.usage(a_us, b_us).energy_j(profile)


def fit_profile(usages: dict[str, StateUsage], targets_j: dict[str, float],
                *, p_sleep_w: float = 3e-6, name: str = "fitted",
                supply_v: float = 3.0) -> tuple[PowerProfile, dict[str, dict]]:
    """Fit (p_tx14, p_rx, command overhead) to measured per-role energies.

    Each role contributes one equation: the ledger's state durations priced
    with the unknown parameters must equal the target.  Sleep power is pinned
    (it is far below the resolution of whole-transfer energy totals).  The
    system is solved in a least-squares sense with rows weighted by 1/target
    so relative errors are balanced.  Raises CalibrationError when the fit is
    degenerate or needs a negative power.
    """
    roles = sorted(usages)
    if set(roles) != set(targets_j):
        raise CalibrationError("usages and targets must cover the same roles")
    if len(roles) < 3:
        raise CalibrationError("need at least three roles to fit three parameters")
    bad = [role for role in roles if not targets_j[role] > 0.0]
    if bad:
        raise CalibrationError(
            f"target energies must be positive, got {', '.join(bad)} <= 0")
    rows, rhs, weights = [], [], []
    for role in roles:
        u = usages[role]
        tx_col = sum(tx_power_scale(p) * s for p, s in u.tx_s_by_power.items())
        rows.append([tx_col, u.rx_s, float(u.commands)])
        rhs.append(targets_j[role] - p_sleep_w * u.sleep_s)
        weights.append(1.0 / targets_j[role])
    a = np.asarray(rows) * np.asarray(weights)[:, None]
    b = np.asarray(rhs) * np.asarray(weights)
    solution, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < 3:
        raise CalibrationError(
            "calibration system is rank deficient; the scenarios do not "
            "separate tx, rx and command costs")
    p_tx14, p_rx, c_cmd = (float(x) for x in solution)
    if min(p_tx14, p_rx, c_cmd) < -1e-9:
        raise CalibrationError(
            f"fit produced negative parameters (p_tx14={p_tx14:.4g} W, "
            f"p_rx={p_rx:.4g} W, command={c_cmd:.4g} J); the energy model "
            "cannot reproduce these targets")
    profile = PowerProfile(name=name, supply_v=supply_v, p_tx14_w=max(p_tx14, 0.0),
                           p_rx_w=max(p_rx, 0.0), p_sleep_w=p_sleep_w,
                           command_overhead_j=max(c_cmd, 0.0))
    residuals = {}
    for role in roles:
        model = usages[role].energy_j(profile)["total_j"]
        target = targets_j[role]
        residuals[role] = {"model_j": model, "target_j": target,
                           "rel_err": (model - target) / target}
    return profile, residuals
