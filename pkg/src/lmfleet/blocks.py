"""Variable/constraint blocks shared by the SAA, DR and recourse models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import FirstStageSolution, Instance, SecondStagePlan, first_stage_from_trips
from .milp import LinearModel, SolveOutcome, VarKind, round_integral


@dataclass
class FirstStageIndex:
    m: np.ndarray  # (S,)
    w: list[np.ndarray]  # per region (I, K)
    v: list[np.ndarray]  # per region (I,)
    fleet_row: int | None


@dataclass
class ServiceIndex:
    """Variable/row ids of one region's passenger-service block."""

    u: np.ndarray  # (I, J)
    z: np.ndarray  # (I, J, K), -1 where the route skips the stop
    balance_rows: np.ndarray  # (I, J)
    capacity_rows: np.ndarray  # (I, K)


def add_first_stage(model: LinearModel, instance: Instance, tighten: bool,
                    fixed_fleet=None) -> FirstStageIndex:
    """Fleet sizes ``m``, trips ``w`` and idle-vehicle counts ``v`` with their balance rows.

    With ``tighten`` the trips on :attr:`RegionSpec.single_trip_routes` are
    binary. With ``fixed_fleet`` the ``m`` variables are pinned and the
    fleet-bound row is omitted.
    """
    M = instance.fleet_bound
    S = instance.n_regions
    m = np.empty(S, dtype=np.int64)
    for s in range(S):
        if fixed_fleet is None:
            m[s] = model.add_var(f"m[{s}]", VarKind.INTEGER, 0, M)
        else:
            m[s] = model.add_var(f"m[{s}]", VarKind.INTEGER, fixed_fleet[s], fixed_fleet[s])
    w_idx, v_idx = [], []
    for s, reg in enumerate(instance.regions):
        ub_single = M if fixed_fleet is None else int(fixed_fleet[s])
        w = np.empty((reg.num_trains, reg.num_routes), dtype=np.int64)
        for i in range(reg.num_trains):
            for k, route in enumerate(reg.routes):
                if tighten and reg.single_trip_routes[k]:
                    w[i, k] = model.add_var(f"w[{i},{route.route_id},{s}]", VarKind.BINARY, 0, 1)
                else:
                    w[i, k] = model.add_var(f"w[{i},{route.route_id},{s}]", VarKind.INTEGER, 0, ub_single)
        w_idx.append(w)
    for s, reg in enumerate(instance.regions):
        v = np.array([model.add_var(f"v[{i},{s}]", VarKind.CONTINUOUS, 0.0) for i in range(reg.num_trains)],
                     dtype=np.int64)
        v_idx.append(v)
    fleet_row = None
    if fixed_fleet is None:
        fleet_row = model.add_constraint(m, np.ones(S), "<=", M, name="fleet_bound")
    for s, reg in enumerate(instance.regions):
        w, v = w_idx[s], v_idx[s]
        K = reg.num_routes
        for i in range(reg.num_trains):
            # v_i - v_{i-1} + sum_k w_{i,k} - sum_k w_{i-t_k,k} = 0   (v_{-1} := m)
            idx = [v[i], v[i - 1] if i else m[s]]
            val = [1.0, -1.0]
            idx.extend(w[i].tolist())
            val.extend([1.0] * K)
            for k, tk in enumerate(reg.durations):
                if i - tk >= 0:
                    idx.append(w[i - tk, k])
                    val.append(-1.0)
            model.add_constraint(idx, val, "=", 0.0, name=f"avail[{i},{s}]")
    return FirstStageIndex(m, w_idx, v_idx, fleet_row)


def add_service(model: LinearModel, instance: Instance, s: int, demand: np.ndarray, *,
                w_vars: np.ndarray | None = None, w_values: np.ndarray | None = None,
                u_name: str = "u", z_name: str = "z", tag: str = "", inequality: bool = False,
                ) -> ServiceIndex:
    """Backlog/assignment variables and rows for region ``s`` under ``demand`` (I, J).

    Balance rows are equalities (``u_i = u_{i-1} + n_i - sum_k z``), or ``>=``
    rows with ``inequality=True`` (the worst-case block). Capacity rows use
    either trip variables (``w_vars``) or fixed trip counts (``w_values``).
    ``tag`` is inserted as the leading name index, e.g. the scenario number.
    """
    reg = instance.regions[s]
    c = instance.vehicle_capacity
    I, J, K = reg.num_trains, reg.num_stops, reg.num_routes
    phi = reg.incidence
    pre = f"{tag}," if tag else ""
    u = np.empty((I, J), dtype=np.int64)
    z = np.full((I, J, K), -1, dtype=np.int64)
    for i in range(I):
        for j in range(J):
            u[i, j] = model.add_var(f"{u_name}[{pre}{i},{j},{s}]", VarKind.CONTINUOUS, 0.0)
    for i in range(I):
        for j, k in reg.served_pairs:
            z[i, j, k] = model.add_var(
                f"{z_name}[{pre}{i},{j},{reg.routes[k].route_id},{s}]", VarKind.CONTINUOUS, 0.0
            )
    sense = ">=" if inequality else "="
    bal = np.empty((I, J), dtype=np.int64)
    for i in range(I):
        for j in range(J):
            ks = np.flatnonzero(phi[j])
            idx = [u[i, j]] + z[i, j, ks].tolist()
            val = [1.0] * (1 + len(ks))
            if i:
                idx.append(u[i - 1, j])
                val.append(-1.0)
            bal[i, j] = model.add_constraint(idx, val, sense, float(demand[i, j]),
                                             name=f"bal[{pre}{i},{j},{s}]")
    cap = np.empty((I, K), dtype=np.int64)
    for i in range(I):
        for k in range(K):
            js = np.flatnonzero(phi[:, k])
            idx = z[i, js, k].tolist()
            val = [1.0] * len(js)
            if w_vars is not None:
                idx.append(w_vars[i, k])
                val.append(-float(c))
                rhs = 0.0
            else:
                rhs = float(c * w_values[i, k])
            cap[i, k] = model.add_constraint(idx, val, "<=", rhs, name=f"cap[{pre}{i},{k},{s}]")
    return ServiceIndex(u, z, bal, cap)


def service_objective(instance: Instance, s: int, svc: ServiceIndex, weight: float = 1.0):
    """Objective terms ``weight * (beta_w * h * u + beta_r * t_jk * z [+ terminal * u_last])``."""
    reg = instance.regions[s]
    c = instance.costs
    h = instance.headway_minutes
    u_coef = np.full(svc.u.shape, weight * c.wait_weight * h)
    u_coef[-1] += weight * c.terminal_backlog_penalty
    served = svc.z >= 0
    t = np.broadcast_to(reg.stop_times, svc.z.shape)
    idx = np.concatenate([svc.u.ravel(), svc.z[served]])
    coef = np.concatenate([u_coef.ravel(), weight * c.ride_weight * t[served]])
    return idx, coef


def extract_first_stage(outcome: SolveOutcome, fs: FirstStageIndex, instance: Instance) -> FirstStageSolution:
    """Round ``m``/``w`` (within the integrality tolerance) and rebuild availability."""
    x = outcome.values
    if x is None:
        raise ValueError(f"outcome has no values (status {outcome.status.value})")
    m = round_integral(x[fs.m], what="m")
    w = [round_integral(x[wi], what=f"w[region {s}]") for s, wi in enumerate(fs.w)]
    return first_stage_from_trips(instance, m, w)


def extract_plan(outcome: SolveOutcome, services: list[ServiceIndex], instance: Instance,
                 objective_value: float) -> SecondStagePlan:
    x = outcome.values
    zs, us = [], []
    for svc in services:
        z = np.zeros(svc.z.shape)
        served = svc.z >= 0
        z[served] = np.maximum(x[svc.z[served]], 0.0)
        zs.append(z)
        us.append(np.maximum(x[svc.u], 0.0))
    return SecondStagePlan(tuple(zs), tuple(us), float(objective_value))
