"""Domain model: tasks, couriers, problem instances, and route labels.

Coordinates live in a local planar frame in meters; all times are seconds.
Instances are immutable snapshots of one courier's unfinished tasks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

PICKUP = "pickup"
DELIVERY = "delivery"


@dataclass(frozen=True)
class TaskNode:
    task_id: int
    order_id: int
    kind: str  # PICKUP or DELIVERY
    location: tuple[float, float]
    earliest_pickup_time: int | None  # pickups only
    promised_time: int
    categorical_features: tuple[int, ...]  # (service_type, time_type)
    numerical_features: tuple[float, ...]  # (area stats..., distance to courier)

    @property
    def is_pickup(self) -> bool:
        return self.kind == PICKUP


@dataclass(frozen=True)
class CourierState:
    courier_id: int
    location: tuple[float, float]
    speed: float  # m/s
    current_time: int
    numerical_features: tuple[float, ...] = ()


@dataclass(frozen=True)
class ProblemInstance:
    instance_id: str
    tasks: tuple[TaskNode, ...]
    courier: CourierState
    # orders whose pickup already happened before the snapshot; their
    # deliveries legitimately appear without a pickup task
    picked_up_orders: frozenset[int] = field(default_factory=frozenset)

    @property
    def n(self) -> int:
        return len(self.tasks)

    def pickup_of(self, order_id: int) -> TaskNode | None:
        for t in self.tasks:
            if t.order_id == order_id and t.is_pickup:
                return t
        return None


@dataclass(frozen=True)
class RouteLabel:
    order: tuple[int, ...]  # ground-truth execution order over a task subset
    arrival_times: tuple[float, ...]  # whole seconds once persisted

    @property
    def m(self) -> int:
        return len(self.order)


def distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Euclidean distance in the local planar frame."""
    return math.hypot(a[0] - b[0], a[1] - b[1])


def validate_instance(instance: ProblemInstance) -> list[str]:
    """Check every structural invariant; returns one message per violation."""
    violations: list[str] = []
    tasks = instance.tasks
    n = len(tasks)

    ids = [t.task_id for t in tasks]
    if sorted(ids) != list(range(n)):
        seen: set[int] = set()
        for t in tasks:
            if t.task_id in seen:
                violations.append(f"task {t.task_id}: id collision")
            seen.add(t.task_id)
        if not violations:
            violations.append(f"task ids {sorted(ids)} are not 0..{n - 1}")

    by_order: dict[int, dict[str, list[TaskNode]]] = {}
    for t in tasks:
        by_order.setdefault(t.order_id, {PICKUP: [], DELIVERY: []})[t.kind].append(t)

    for order_id, kinds in sorted(by_order.items()):
        if len(kinds[PICKUP]) > 1:
            extra = kinds[PICKUP][1]
            violations.append(f"task {extra.task_id}: duplicate pickup for order {order_id}")
        if len(kinds[DELIVERY]) > 1:
            extra = kinds[DELIVERY][1]
            violations.append(f"task {extra.task_id}: duplicate delivery for order {order_id}")
        if kinds[DELIVERY] and not kinds[PICKUP] and order_id not in instance.picked_up_orders:
            d = kinds[DELIVERY][0]
            violations.append(f"task {d.task_id}: orphan delivery for order {order_id}")

    now = instance.courier.current_time
    for t in tasks:
        if t.kind not in (PICKUP, DELIVERY):
            violations.append(f"task {t.task_id}: unknown kind {t.kind!r}")
        if t.promised_time < now:
            violations.append(f"task {t.task_id}: promised time {t.promised_time} before "
                              f"instance timestamp {now}")
        if t.is_pickup and t.earliest_pickup_time is None:
            violations.append(f"task {t.task_id}: pickup missing earliest pickup time")

    if instance.courier.speed <= 0:
        violations.append(f"courier {instance.courier.courier_id}: speed must be positive")

    return violations


def validate_label(instance: ProblemInstance, label: RouteLabel) -> list[str]:
    """Check the label against the instance: membership, precedence,
    strictly increasing arrival times."""
    violations: list[str] = []
    n = instance.n
    seen: set[int] = set()
    for tid in label.order:
        if not 0 <= tid < n:
            violations.append(f"label references unknown task {tid}")
            continue
        if tid in seen:
            violations.append(f"label repeats task {tid}")
        seen.add(tid)

    pos = {tid: i for i, tid in enumerate(label.order)}
    for t in instance.tasks:
        if t.kind != DELIVERY or t.task_id not in pos:
            continue
        p = instance.pickup_of(t.order_id)
        if p is not None and (p.task_id not in pos or pos[p.task_id] > pos[t.task_id]):
            violations.append(f"label breaks precedence: delivery {t.task_id} before "
                              f"pickup {p.task_id}")

    if len(label.arrival_times) != len(label.order):
        violations.append("label arrival times are not aligned with the order")
    else:
        for a, b in zip(label.arrival_times, label.arrival_times[1:]):
            if b <= a:
                violations.append(f"label arrival times not strictly increasing: {a} -> {b}")
                break
    return violations


def route_is_feasible(instance: ProblemInstance, route: tuple[int, ...] | list[int]) -> bool:
    """True when `route` is a full permutation respecting pickup-before-delivery."""
    if sorted(route) != list(range(instance.n)):
        return False
    pos = {tid: i for i, tid in enumerate(route)}
    for t in instance.tasks:
        if t.kind != DELIVERY:
            continue
        p = instance.pickup_of(t.order_id)
        if p is not None and pos[p.task_id] > pos[t.task_id]:
            return False
    return True
