"""Transient frequency dynamics for aggregated load-attack studies.

Machine model: classical second-order swing per generator with a constant
voltage behind transient reactance, plus a first-order governor with droop
on the machine's own speed. Loads become constant admittances and the
network is Kron-reduced to the internal machine nodes, so an attack that
changes demand at a bus enters as an admittance change and every electrical
quantity downstream of it responds through the reduced network.

Per generator i (all in system pu on the model MVA base, delta in rad):

    d delta_i / dt  = omega_s * dw_i
    2 H_i d dw_i/dt = p_m_i + p_res_i - p_e_i(delta) - D_i * dw_i
    T_g d p_m_i/dt  = (p_ref_i - dw_i / R_i) - p_m_i,   0 <= p_m_i <= p_max_i

The integrator is fixed-step RK4; attack events and reserve updates land on
step boundaries. Two electrical couplings are available:

* "network" (default): p_e from the Kron-reduced admittance matrix, rebuilt
  at every demand event. Voltage dependence of the load response is kept.
* "linear": p_e linearized at the operating point and events mapped through
  fixed sensitivities. Strictly odd-symmetric around nominal, so mirrored
  attacks produce mirrored traces to machine precision. Useful to separate
  voltage-coupling effects from the swing response.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import attacks as _attacks
from . import reserves as _reserves
from .netmodel import NetworkModel
from .powerflow import PowerFlowSolution, build_ybus, solve as solve_pf


class InstabilityError(RuntimeError):
    """Loss of synchronism: a machine speed left the +-0.5 pu guard band.

    The truncated trace up to the failing step is attached so callers can
    inspect how the collapse developed.
    """

    def __init__(self, time_s: float, trace: "SimulationTrace"):
        super().__init__(
            f"simulation unstable at t = {time_s:.2f} s: "
            "machine speed deviation exceeded 0.5 pu")
        self.time_s = time_s
        self.trace = trace


@dataclass(frozen=True)
class ReducedNetwork:
    """Admittance view from behind the transient reactances.

    y_red couples the machine internal nodes; v_recovery maps internal EMFs
    back to bus voltages for diagnostics and event conversion checks.
    """

    y_red: np.ndarray  # (m, m) complex
    v_recovery: np.ndarray  # (n, m) complex, V_bus = v_recovery @ E
    loads_p: np.ndarray  # effective bus demand this reduction encodes


@dataclass
class DynamicState:
    time: float
    delta: np.ndarray  # rotor angle, rad
    d_omega: np.ndarray  # speed deviation, pu of synchronous
    p_m: np.ndarray  # mechanical power, pu
    e_int: np.ndarray  # internal EMF magnitude, pu
    loads_p: np.ndarray  # effective demand per bus, pu

    def copy(self) -> "DynamicState":
        return DynamicState(self.time, self.delta.copy(), self.d_omega.copy(),
                            self.p_m.copy(), self.e_int.copy(),
                            self.loads_p.copy())


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    duration: float = 40.0
    reserves: tuple = ()  # ReserveProduct set; empty = governor response only
    coupling: str = "network"  # "network" | "linear"
    speed_guard: float = 0.5  # pu; exceeding it raises InstabilityError

    def __post_init__(self):
        if self.dt <= 0 or self.duration <= 0:
            raise ValueError("dt and duration must be positive")
        if self.coupling not in ("network", "linear"):
            raise ValueError(f"unknown coupling {self.coupling!r}")


@dataclass(frozen=True)
class SimulationTrace:
    t: np.ndarray
    f_coi: np.ndarray
    f_gen: np.ndarray  # (samples, machines)
    p_attack: np.ndarray  # commanded demand offset, pu
    p_reserve_up: np.ndarray  # pu, >= 0
    p_reserve_down: np.ndarray  # pu, <= 0
    events: tuple  # (time, label) pairs actually applied
    dt: float
    gen_buses: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.t)


def machine_params(model: NetworkModel):
    """System-base machine constants as arrays ordered like model.generators."""
    s_base = model.mva_base
    mva = np.array([g.mva_base for g in model.generators])
    h_sys = np.array([g.h * g.mva_base / s_base for g in model.generators])
    d_sys = np.array([g.d * g.mva_base / s_base for g in model.generators])
    droop_gain = np.array([(g.mva_base / s_base) / g.governor.r_droop
                           for g in model.generators])
    t_g = np.array([g.governor.t_g for g in model.generators])
    p_max = np.array([g.governor.p_max for g in model.generators])
    return mva, h_sys, d_sys, droop_gain, t_g, p_max


def build_reduced(model: NetworkModel, pf: PowerFlowSolution,
                  loads_p: np.ndarray) -> ReducedNetwork:
    """Kron-reduce the network to machine internal nodes.

    Loads convert to admittances at the pre-attack operating voltage from
    pf, so a demand change delta_p maps to delta_y = delta_p / |V0|^2 and
    reverting the demand restores the admittance bit-for-bit.
    """
    n = len(model.buses)
    m = len(model.generators)
    idx = model.bus_index()
    ybus = build_ybus(model).copy()

    loads_q = np.zeros(n)
    for ld in model.loads:
        loads_q[idx[ld.bus]] = ld.q
    v0sq = pf.v ** 2
    np.fill_diagonal(ybus, ybus.diagonal()
                     + (loads_p - 1j * loads_q) / v0sq)

    y_g = np.array([1.0 / (1j * g.xd_t) for g in model.generators])
    conn = np.zeros((m, n), dtype=complex)
    for i, g in enumerate(model.generators):
        j = idx[g.bus]
        conn[i, j] = y_g[i]
        ybus[j, j] += y_g[i]

    v_recovery = np.linalg.solve(ybus, conn.T)
    y_red = np.diag(y_g) - conn @ v_recovery
    return ReducedNetwork(y_red=y_red, v_recovery=v_recovery,
                          loads_p=loads_p.copy())


def electrical_power(red: ReducedNetwork, e_int: np.ndarray,
                     delta: np.ndarray) -> np.ndarray:
    ev = e_int * np.exp(1j * delta)
    return (ev * np.conj(red.y_red @ ev)).real


def base_loads(model: NetworkModel) -> np.ndarray:
    n = len(model.buses)
    idx = model.bus_index()
    p = np.zeros(n)
    for ld in model.loads:
        p[idx[ld.bus]] = ld.p
    return p


def init_state(model: NetworkModel,
               pf: PowerFlowSolution | None = None) -> DynamicState:
    """Equilibrium state: EMFs from the power flow, p_m balancing exactly.

    Mechanical power is set to the reduced-network electrical power at the
    initial angles rather than to the dispatch, so with no disturbance the
    state is a fixed point of the integrator and the trace holds nominal.
    """
    if pf is None:
        pf = solve_pf(model)
    idx = model.bus_index()
    gen_ix = np.array([idx[g.bus] for g in model.generators])
    vc = pf.v * np.exp(1j * pf.theta)
    s_gen = pf.p_inj[gen_ix] + 1j * pf.q_inj[gen_ix]
    # Net injection at a generator bus is the machine output: loads are not
    # allowed to share generator buses in a valid model.
    v_t = vc[gen_ix]
    i_t = np.conj(s_gen / v_t)
    xd = np.array([g.xd_t for g in model.generators])
    e = v_t + 1j * xd * i_t

    loads_p = base_loads(model)
    red = build_reduced(model, pf, loads_p)
    delta = np.angle(e)
    e_int = np.abs(e)
    p_m = electrical_power(red, e_int, delta)
    return DynamicState(time=0.0, delta=delta,
                        d_omega=np.zeros(len(model.generators)),
                        p_m=p_m, e_int=e_int, loads_p=loads_p)


def coi_frequency(model: NetworkModel, state: DynamicState) -> float:
    _, h_sys, _, _, _, _ = machine_params(model)
    return model.f_nominal * (1.0 + float(h_sys @ state.d_omega) / h_sys.sum())


class _Linearization:
    """Frozen small-signal electrical model around the operating point."""

    def __init__(self, model, pf, red0, e_int, delta0):
        self.delta0 = delta0.copy()
        self.pe0 = electrical_power(red0, e_int, delta0)
        yr = red0.y_red
        g, b = yr.real, yr.imag
        th = delta0[:, None] - delta0[None, :]
        ee = e_int[:, None] * e_int[None, :]
        # dPe_i/ddelta_j, j != i: E_i E_j (G sin - B cos); the diagonal
        # balances rows so a uniform angle shift leaves power unchanged.
        kk = ee * (g * np.sin(th) - b * np.cos(th))
        np.fill_diagonal(kk, 0.0)
        np.fill_diagonal(kk, -kk.sum(axis=1))
        self.k = kk

        # Sensitivity of machine powers to a demand change at each load bus,
        # central difference through the reduction at the frozen angles.
        n = len(model.buses)
        self.sens = {}
        h = 1e-6
        for ld in model.loads:
            j = model.bus_index()[ld.bus]
            up = red0.loads_p.copy()
            dn = red0.loads_p.copy()
            up[j] += h
            dn[j] -= h
            pe_up = electrical_power(build_reduced(model, pf, up), e_int, delta0)
            pe_dn = electrical_power(build_reduced(model, pf, dn), e_int, delta0)
            self.sens[j] = (pe_up - pe_dn) / (2 * h)

    def pe(self, delta, attack_by_bus):
        out = self.pe0 + self.k @ (delta - self.delta0)
        for j, amount in attack_by_bus.items():
            if amount != 0.0:
                out = out + self.sens[j] * amount
        return out


def simulate(model: NetworkModel,
             schedule: _attacks.EventSchedule | None = None,
             config: SimConfig | None = None,
             pf: PowerFlowSolution | None = None) -> SimulationTrace:
    """Integrate the system response to an attack schedule.

    Events snap to the first step boundary at or after their timestamp.
    Boundary order per step: apply due events, advance the reserve lags
    using the frequency at the boundary, record the sample, then integrate
    to the next boundary with reserve outputs held constant. The first
    sample is therefore always exactly nominal.
    """
    if config is None:
        config = SimConfig()
    if schedule is None:
        schedule = _attacks.EventSchedule(events=())
    if pf is None:
        pf = solve_pf(model)

    f_nom = model.f_nominal
    omega_s = 2.0 * np.pi * f_nom
    m = len(model.generators)
    mva, h_sys, d_sys, droop_gain, t_g, p_max = machine_params(model)
    two_h = 2.0 * h_sys
    h_total = h_sys.sum()
    mva_share = mva / mva.sum()
    sched_gen = sum(g.p_set for g in model.generators)
    mw_to_pu = sched_gen / model.national_total_mw

    state = init_state(model, pf)
    p_ref = state.p_m.copy()
    red = build_reduced(model, pf, state.loads_p)
    lin = None
    attack_by_bus: dict[int, float] = {}
    if config.coupling == "linear":
        lin = _Linearization(model, pf, red, state.e_int, state.delta)
        attack_by_bus = {model.bus_index()[ld.bus]: 0.0 for ld in model.loads}

    n_steps = int(round(config.duration / config.dt))
    idx = model.bus_index()
    timed = sorted(schedule.events, key=lambda e: e.time)
    for ev in timed:
        if model.load_at(ev.bus) is None:
            raise ValueError(f"event targets bus {ev.bus} which has no load")
    # Pre-bin events by destination step so the hot loop stays cheap.
    by_step: dict[int, list] = {}
    for ev in timed:
        k = int(np.ceil(ev.time / config.dt - 1e-9))
        if k > n_steps:
            continue  # beyond the horizon; never applied
        by_step.setdefault(k, []).append(ev)

    trigger = None
    if schedule.policy is not None:
        trigger = _attacks.SlopeTrigger(schedule.policy, f_nom, config.dt)

    products = tuple(p for p in config.reserves if p.enabled)
    res_state = _reserves.make_state(products)

    n_samp = n_steps + 1
    t_arr = np.empty(n_samp)
    f_coi_arr = np.empty(n_samp)
    f_gen_arr = np.empty((n_samp, m))
    p_atk_arr = np.empty(n_samp)
    p_up_arr = np.empty(n_samp)
    p_dn_arr = np.empty(n_samp)
    applied: list[tuple[float, str]] = []

    p_attack_total = 0.0
    p_res_machine = np.zeros(m)
    delta = state.delta
    d_omega = state.d_omega
    p_m = state.p_m
    e_int = state.e_int
    loads_p = state.loads_p
    label = schedule.label or "event"

    def apply_delta(bus: int, delta_p: float, t_now: float):
        nonlocal red, p_attack_total
        j = idx[bus]
        loads_p[j] += delta_p
        p_attack_total += delta_p
        if config.coupling == "network":
            red = build_reduced(model, pf, loads_p)
        else:
            attack_by_bus[j] += delta_p
        applied.append((t_now, f"{label} {delta_p:+.4f} pu @ bus {bus}"))

    yr = red.y_red

    for k in range(n_samp):
        t_now = k * config.dt

        for ev in by_step.get(k, ()):
            apply_delta(ev.bus, ev.delta_p, t_now)
        f_now = f_nom * (1.0 + float(h_sys @ d_omega) / h_total)
        if trigger is not None and not trigger.exhausted:
            fired = trigger.observe(t_now, f_now)
            if fired is not None:
                apply_delta(fired[0], fired[1], t_now)
                f_now = f_nom * (1.0 + float(h_sys @ d_omega) / h_total)

        if products:
            cmds = {p.name: _reserves.command(p, f_now) for p in products}
            res_state = _reserves.respond(res_state, cmds, config.dt, products)
            total_res_pu = sum(res_state.values()) * mw_to_pu
            p_res_machine = mva_share * total_res_pu

        up_mw = sum(v for v in res_state.values() if v > 0)
        dn_mw = sum(v for v in res_state.values() if v < 0)
        t_arr[k] = t_now
        f_coi_arr[k] = f_now
        f_gen_arr[k] = f_nom * (1.0 + d_omega)
        p_atk_arr[k] = p_attack_total
        p_up_arr[k] = up_mw * mw_to_pu
        p_dn_arr[k] = dn_mw * mw_to_pu

        if np.max(np.abs(d_omega)) > config.speed_guard:
            trace = SimulationTrace(
                t=t_arr[:k + 1].copy(), f_coi=f_coi_arr[:k + 1].copy(),
                f_gen=f_gen_arr[:k + 1].copy(), p_attack=p_atk_arr[:k + 1].copy(),
                p_reserve_up=p_up_arr[:k + 1].copy(),
                p_reserve_down=p_dn_arr[:k + 1].copy(),
                events=tuple(applied), dt=config.dt,
                gen_buses=tuple(g.bus for g in model.generators))
            raise InstabilityError(t_now, trace)
        if k == n_steps:
            break
        yr = red.y_red

        # RK4 over [t, t+dt] with constant reserves and admittances
        dt = config.dt

        def rhs(dl, dw, pm):
            if lin is None:
                ev_c = e_int * np.exp(1j * dl)
                pe = (ev_c * np.conj(yr @ ev_c)).real
            else:
                pe = lin.pe(dl, attack_by_bus)
            ddl = omega_s * dw
            ddw = (pm + p_res_machine - pe - d_sys * dw) / two_h
            dpm = (p_ref - droop_gain * dw - pm) / t_g
            return ddl, ddw, dpm

        k1 = rhs(delta, d_omega, p_m)
        k2 = rhs(delta + 0.5 * dt * k1[0], d_omega + 0.5 * dt * k1[1],
                 p_m + 0.5 * dt * k1[2])
        k3 = rhs(delta + 0.5 * dt * k2[0], d_omega + 0.5 * dt * k2[1],
                 p_m + 0.5 * dt * k2[2])
        k4 = rhs(delta + dt * k3[0], d_omega + dt * k3[1], p_m + dt * k3[2])
        delta = delta + (dt / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        d_omega = d_omega + (dt / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        p_m = p_m + (dt / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        np.clip(p_m, 0.0, p_max, out=p_m)

    return SimulationTrace(
        t=t_arr, f_coi=f_coi_arr, f_gen=f_gen_arr, p_attack=p_atk_arr,
        p_reserve_up=p_up_arr, p_reserve_down=p_dn_arr,
        events=tuple(applied), dt=config.dt,
        gen_buses=tuple(g.bus for g in model.generators))
