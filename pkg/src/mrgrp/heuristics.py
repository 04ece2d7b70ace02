"""Reference-route heuristics and rule baselines.

TSFH builds an initial route by ETA-ordered greedy insertion and refines it
with a margin-triggered relocate local search. DisGreedy and TimeRank are
the single-criterion baselines. All of them share one ETA simulation and
one route objective.
"""

from __future__ import annotations

from dataclasses import dataclass

from .domain import DELIVERY, ProblemInstance, distance, route_is_feasible


class PrecedenceError(ValueError):
    """A route violates pickup-before-delivery."""


@dataclass(frozen=True)
class HeuristicConfig:
    speed_mps: float = 4.0        # fallback when the courier carries no speed
    service_time_s: float = 60.0
    margin_s: float = 300.0       # five minutes
    lateness_weight: float = 1.0  # meters per second of lateness
    cluster_cell_m: float = 500.0
    local_search_max_iters: int = 50


@dataclass(frozen=True)
class ReferenceSolution:
    route: tuple[int, ...]
    etas: tuple[float, ...]
    objective: float


def _speed(instance: ProblemInstance, config: HeuristicConfig) -> float:
    s = instance.courier.speed
    return s if s > 0 else config.speed_mps


def eta_along_route(route, instance: ProblemInstance,
                    config: HeuristicConfig) -> list[float]:
    """Simulated arrival time at each stop of `route`.

    Travel at courier speed, a fixed service time per stop, and pickups wait
    for food readiness (arrival clamped to earliest pickup time). `route`
    may be a partial sequence, but deliveries must not precede their pickup.
    """
    pos = {tid: i for i, tid in enumerate(route)}
    for tid in route:
        task = instance.tasks[tid]
        if task.kind == DELIVERY:
            p = instance.pickup_of(task.order_id)
            if p is not None and pos.get(p.task_id, -1) > pos[tid]:
                raise PrecedenceError(
                    f"route {list(route)} visits delivery {tid} before pickup {p.task_id}")
    speed = _speed(instance, config)
    t = float(instance.courier.current_time)
    loc = instance.courier.location
    etas: list[float] = []
    for tid in route:
        task = instance.tasks[tid]
        t += distance(loc, task.location) / speed
        if task.is_pickup and task.earliest_pickup_time is not None:
            t = max(t, float(task.earliest_pickup_time))
        etas.append(t)
        t += config.service_time_s
        loc = task.location
    return etas


def route_length(route, instance: ProblemInstance) -> float:
    loc = instance.courier.location
    total = 0.0
    for tid in route:
        task = instance.tasks[tid]
        total += distance(loc, task.location)
        loc = task.location
    return total


def route_objective(route, instance: ProblemInstance, config: HeuristicConfig) -> float:
    """Route length plus weighted lateness against each task's promise."""
    etas = eta_along_route(route, instance, config)
    lateness = 0.0
    for tid, eta in zip(route, etas):
        lateness += max(0.0, eta - instance.tasks[tid].promised_time)
    return route_length(route, instance) + config.lateness_weight * lateness


# ---------------------------------------------------------------------------
# greedy step machinery shared by the rule baselines


def feasible_tasks(instance: ProblemInstance, selected: set[int]) -> list[int]:
    """Unselected tasks whose precedence constraint is currently satisfied."""
    out = []
    for t in instance.tasks:
        if t.task_id in selected:
            continue
        if t.kind == DELIVERY:
            p = instance.pickup_of(t.order_id)
            if p is not None and p.task_id not in selected:
                continue
        out.append(t.task_id)
    return out


def disgreedy(instance: ProblemInstance) -> list[int]:
    """Repeatedly take the nearest feasible task; ties go to the smaller id."""
    route: list[int] = []
    selected: set[int] = set()
    loc = instance.courier.location
    while len(route) < instance.n:
        cands = feasible_tasks(instance, selected)
        best = min(cands, key=lambda tid: (distance(loc, instance.tasks[tid].location), tid))
        route.append(best)
        selected.add(best)
        loc = instance.tasks[best].location
    return route


def timerank(instance: ProblemInstance) -> list[int]:
    """Repeatedly take the most urgent feasible task; ties go to the smaller id."""
    route: list[int] = []
    selected: set[int] = set()
    while len(route) < instance.n:
        cands = feasible_tasks(instance, selected)
        best = min(cands, key=lambda tid: (instance.tasks[tid].promised_time, tid))
        route.append(best)
        selected.add(best)
    return route


# ---------------------------------------------------------------------------
# TSFH


def _grid_cell(loc: tuple[float, float], cell: float) -> tuple[int, int]:
    return (int(loc[0] // cell), int(loc[1] // cell))


def _insertion_positions(route: list[int], instance: ProblemInstance, tid: int,
                         cell_m: float) -> list[int]:
    """Candidate insertion slots for task `tid`, pruned to slots adjacent to
    routed tasks sharing its grid cell; all slots when the cell is empty."""
    cell = _grid_cell(instance.tasks[tid].location, cell_m)
    adjacent: set[int] = set()
    for pos, routed in enumerate(route):
        if _grid_cell(instance.tasks[routed].location, cell_m) == cell:
            adjacent.add(pos)
            adjacent.add(pos + 1)
    if adjacent:
        return sorted(adjacent)
    return list(range(len(route) + 1))


def _order_units(instance: ProblemInstance) -> list[tuple[int, int | None, int | None]]:
    """(order_id, pickup task id, delivery task id) per order, with absent
    tasks as None."""
    seen: dict[int, list[int | None]] = {}
    order_seq: list[int] = []
    for t in instance.tasks:
        if t.order_id not in seen:
            seen[t.order_id] = [None, None]
            order_seq.append(t.order_id)
        seen[t.order_id][0 if t.is_pickup else 1] = t.task_id
    return [(oid, seen[oid][0], seen[oid][1]) for oid in order_seq]


def tsfh_initialize(instance: ProblemInstance, config: HeuristicConfig) -> list[int]:
    """ETA-ordered greedy insertion.

    Orders are sorted by their standalone completion time from the courier's
    position; each order's pickup and delivery are then inserted at the
    jointly objective-minimizing pair of positions, pickup first.
    """
    units = _order_units(instance)

    def standalone_eta(unit) -> float:
        _, p, d = unit
        solo = [t for t in (p, d) if t is not None]
        return eta_along_route(solo, instance, config)[-1]

    units.sort(key=lambda u: (standalone_eta(u), u[0]))

    route: list[int] = []
    for _, p, d in units:
        if p is not None and d is not None:
            route = _insert_pair(route, instance, p, d, config)
        else:
            solo = p if p is not None else d
            route = _insert_single(route, instance, solo, config)
    return route


def _insert_single(route: list[int], instance: ProblemInstance, tid: int,
                   config: HeuristicConfig) -> list[int]:
    best_route, best_obj = None, None
    for i in _insertion_positions(route, instance, tid, config.cluster_cell_m):
        cand = route[:i] + [tid] + route[i:]
        if not _prefix_feasible(instance, cand):
            continue
        obj = _partial_objective(cand, instance, config)
        if best_obj is None or obj < best_obj:
            best_route, best_obj = cand, obj
    assert best_route is not None
    return best_route


def _insert_pair(route: list[int], instance: ProblemInstance, p: int, d: int,
                 config: HeuristicConfig) -> list[int]:
    best_route, best_obj = None, None
    for i in _insertion_positions(route, instance, p, config.cluster_cell_m):
        with_p = route[:i] + [p] + route[i:]
        d_slots = _insertion_positions(with_p, instance, d, config.cluster_cell_m)
        for j in d_slots:
            if j <= i:
                continue
            cand = with_p[:j] + [d] + with_p[j:]
            if not _prefix_feasible(instance, cand):
                continue
            obj = _partial_objective(cand, instance, config)
            if best_obj is None or obj < best_obj:
                best_route, best_obj = cand, obj
    assert best_route is not None
    return best_route


def _prefix_feasible(instance: ProblemInstance, partial: list[int]) -> bool:
    pos = {tid: i for i, tid in enumerate(partial)}
    for tid in partial:
        t = instance.tasks[tid]
        if t.kind != DELIVERY:
            continue
        p = instance.pickup_of(t.order_id)
        if p is not None and p.task_id in pos and pos[p.task_id] > pos[tid]:
            return False
    return True


def _partial_objective(partial: list[int], instance: ProblemInstance,
                       config: HeuristicConfig) -> float:
    speed = _speed(instance, config)
    t = float(instance.courier.current_time)
    loc = instance.courier.location
    length = 0.0
    lateness = 0.0
    for tid in partial:
        task = instance.tasks[tid]
        leg = distance(loc, task.location)
        length += leg
        t += leg / speed
        if task.is_pickup and task.earliest_pickup_time is not None:
            t = max(t, float(task.earliest_pickup_time))
        lateness += max(0.0, t - task.promised_time)
        t += config.service_time_s
        loc = task.location
    return length + config.lateness_weight * lateness


def tsfh_local_search(route: list[int], instance: ProblemInstance,
                      config: HeuristicConfig) -> list[int]:
    """Margin-triggered relocation: early tasks may move later, late tasks
    earlier; a move is applied only when it is feasible and strictly
    improves the objective. Best-improvement, one move per iteration."""
    route = list(route)
    obj = route_objective(route, instance, config)
    for _ in range(config.local_search_max_iters):
        etas = eta_along_route(route, instance, config)
        best_route, best_obj = None, obj
        for pos, tid in enumerate(route):
            promised = instance.tasks[tid].promised_time
            slack = promised - etas[pos]
            if slack > config.margin_s:
                targets = range(pos + 1, len(route))       # backward: later slots
            elif -slack > config.margin_s:
                targets = range(0, pos)                    # forward: earlier slots
            else:
                continue
            removed = route[:pos] + route[pos + 1:]
            for j in targets:
                cand = removed[:j] + [tid] + removed[j:]
                if not route_is_feasible(instance, tuple(cand)):
                    continue
                cand_obj = route_objective(cand, instance, config)
                if cand_obj < best_obj - 1e-9:
                    best_route, best_obj = cand, cand_obj
        if best_route is None:
            break
        route, obj = best_route, best_obj
    return route


def tsfh(instance: ProblemInstance, config: HeuristicConfig | None = None) -> ReferenceSolution:
    """Two-stage heuristic: insertion initialization, then local search."""
    config = config or HeuristicConfig()
    route = tsfh_local_search(tsfh_initialize(instance, config), instance, config)
    etas = eta_along_route(route, instance, config)
    return ReferenceSolution(tuple(route), tuple(etas),
                             route_objective(route, instance, config))


BASELINES = {
    "disgreedy": lambda inst, cfg: disgreedy(inst),
    "timerank": lambda inst, cfg: timerank(inst),
    "tsfh": lambda inst, cfg: list(tsfh(inst, cfg).route),
}
