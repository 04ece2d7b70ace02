"""Synthetic instance generation and the expert labeling policy.

Restaurants are drawn around a few cluster centers, customers uniformly in
the region. Ground-truth routes come from a per-courier greedy policy that
trades off distance against urgency, with optional per-step noise and label
truncation. Everything is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import (DELIVERY, PICKUP, CourierState, ProblemInstance, RouteLabel,
                     TaskNode, distance)
from .heuristics import HeuristicConfig, feasible_tasks

DIST_GREEDY, URGENCY_FIRST, BALANCED = 0, 1, 2
_PREF_WEIGHTS = {DIST_GREEDY: (1.0, 0.0), URGENCY_FIRST: (0.0, 1.0), BALANCED: (0.5, 0.5)}

# fixed normalization used inside the expert score
_SCORE_DIST_SCALE = 1000.0   # meters
_SCORE_TIME_SCALE = 1000.0   # seconds

SERVICE_TIME_S = 60.0
MIN_TASK_SEPARATION_M = 1.0  # keeps SR@1 a strict-identity check


@dataclass(frozen=True)
class GeneratorConfig:
    n_orders_range: tuple[int, int] = (2, 6)
    region_size_m: float = 3000.0
    restaurant_cluster_count: int = 3
    speed_mps: float = 4.0
    pickup_ready_offset_range_s: tuple[int, int] = (300, 1200)
    promise_offset_range_s: tuple[int, int] = (1800, 3000)
    courier_count: int = 200
    preference_mix: tuple[float, float, float] = (0.34, 0.33, 0.33)
    label_noise: float = 0.1
    truncation_prob: float = 0.1
    seed: int = 0

    def validate(self) -> list[str]:
        problems = []
        if self.n_orders_range[0] < 1 or self.n_orders_range[1] < self.n_orders_range[0]:
            problems.append(f"n_orders_range {self.n_orders_range} is empty")
        for name in ("pickup_ready_offset_range_s", "promise_offset_range_s"):
            lo, hi = getattr(self, name)
            if hi < lo:
                problems.append(f"{name} ({lo}, {hi}) is empty")
        if abs(sum(self.preference_mix) - 1.0) > 1e-9:
            problems.append(f"preference_mix {self.preference_mix} does not sum to 1")
        if any(f < 0 for f in self.preference_mix):
            problems.append("preference_mix has a negative fraction")
        if self.region_size_m <= 0 or self.speed_mps <= 0 or self.courier_count < 1:
            problems.append("region size, speed, and courier count must be positive")
        if not 0.0 <= self.label_noise <= 1.0 or not 0.0 <= self.truncation_prob <= 1.0:
            problems.append("label_noise and truncation_prob must be probabilities")
        if self.restaurant_cluster_count < 1:
            problems.append("restaurant_cluster_count must be at least 1")
        return problems


def preference_class_of(courier_id: int, config: GeneratorConfig) -> int:
    """Preference class assigned proportionally to the mix across courier ids."""
    f0, f1, _ = config.preference_mix
    c0 = int(round(f0 * config.courier_count))
    c1 = int(round((f0 + f1) * config.courier_count))
    if courier_id < c0:
        return DIST_GREEDY
    if courier_id < c1:
        return URGENCY_FIRST
    return BALANCED


def expert_route(instance: ProblemInstance, courier_preference: int,
                 rng: np.random.Generator, label_noise: float = 0.0) -> RouteLabel:
    """Greedy ground-truth policy.

    Each step scores feasible tasks by a preference-weighted sum of
    normalized distance and normalized remaining time and takes the best;
    with probability `label_noise` it takes the second best instead.
    Arrival times follow courier speed, pickup readiness, and a fixed
    service time per stop.
    """
    w_d, w_t = _PREF_WEIGHTS[courier_preference]
    speed = instance.courier.speed
    t = float(instance.courier.current_time)
    loc = instance.courier.location
    selected: set[int] = set()
    order: list[int] = []
    arrivals: list[float] = []
    while len(order) < instance.n:
        cands = feasible_tasks(instance, selected)
        scored = sorted(
            cands,
            key=lambda tid: (w_d * distance(loc, instance.tasks[tid].location) / _SCORE_DIST_SCALE
                             + w_t * (instance.tasks[tid].promised_time - t) / _SCORE_TIME_SCALE,
                             tid))
        pick = scored[0]
        if len(scored) > 1 and label_noise > 0.0 and rng.random() < label_noise:
            pick = scored[1]
        task = instance.tasks[pick]
        t += distance(loc, task.location) / speed
        if task.is_pickup and task.earliest_pickup_time is not None:
            t = max(t, float(task.earliest_pickup_time))
        arrivals.append(t)
        t += SERVICE_TIME_S
        loc = task.location
        selected.add(pick)
        order.append(pick)
    return RouteLabel(tuple(order), tuple(arrivals))


def _sample_locations(rng: np.random.Generator, config: GeneratorConfig,
                      n_orders: int) -> tuple[list, list]:
    """Restaurant locations near cluster centers, customers uniform, with a
    minimum pairwise separation across all locations."""
    size = config.region_size_m
    centers = rng.uniform(0.0, size, size=(config.restaurant_cluster_count, 2))
    placed: list[tuple[float, float]] = []

    def place(sampler) -> tuple[float, float]:
        for _ in range(1000):
            cand = sampler()
            if all(distance(cand, p) >= MIN_TASK_SEPARATION_M for p in placed):
                placed.append(cand)
                return cand
        raise RuntimeError("could not place a task with minimum separation")

    restaurants = []
    customers = []
    for _ in range(n_orders):
        center = centers[rng.integers(config.restaurant_cluster_count)]
        restaurants.append(place(
            lambda: tuple(np.clip(center + rng.normal(0.0, 120.0, size=2), 0.0, size))))
        customers.append(place(lambda: tuple(rng.uniform(0.0, size, size=2))))
    return restaurants, customers


def generate_instance(rng: np.random.Generator,
                      config: GeneratorConfig) -> tuple[ProblemInstance, RouteLabel]:
    """One synthetic instance with its expert label.

    Label arrival times are rounded to whole seconds for persistence; the
    spacing from per-stop service time keeps them strictly increasing.
    """
    n_orders = int(rng.integers(config.n_orders_range[0], config.n_orders_range[1] + 1))
    now = int(rng.integers(8 * 3600, 20 * 3600))
    courier_id = int(rng.integers(config.courier_count))
    raw_loc = rng.uniform(0.0, config.region_size_m, size=2)
    courier_loc = (round(float(raw_loc[0]), 3), round(float(raw_loc[1]), 3))
    restaurants, customers = _sample_locations(rng, config, n_orders)

    area_stats = (round(float(rng.uniform(5.0, 30.0)), 3),
                  round(float(rng.uniform(3.0, 5.0)), 3),
                  round(float(rng.uniform(0.7, 1.0)), 3))

    ready_lo, ready_hi = config.pickup_ready_offset_range_s
    prom_lo, prom_hi = config.promise_offset_range_s

    specs = []  # (order_id, kind, location, ready, promised, service_type)
    for oid in range(n_orders):
        ready = now + int(rng.integers(ready_lo, ready_hi + 1))
        delivery_promise = now + int(rng.integers(prom_lo, prom_hi + 1))
        pickup_promise = ready + int(rng.integers(180, 601))
        pickup_promise = max(now, min(pickup_promise, delivery_promise - 60))
        service_type = int(rng.integers(4))
        specs.append((oid, PICKUP, restaurants[oid], ready, pickup_promise, service_type))
        specs.append((oid, DELIVERY, customers[oid], None, delivery_promise, service_type))

    slots = rng.permutation(len(specs))
    tasks: list[TaskNode | None] = [None] * len(specs)
    for spec, slot in zip(specs, slots):
        oid, kind, loc, ready, promised, service_type = spec
        loc = (round(float(loc[0]), 3), round(float(loc[1]), 3))
        time_type = 0 if promised - now < 2100 else (1 if promised - now < 2700 else 2)
        tasks[slot] = TaskNode(
            task_id=int(slot),
            order_id=oid,
            kind=kind,
            location=loc,
            earliest_pickup_time=ready,
            promised_time=promised,
            categorical_features=(service_type, time_type),
            numerical_features=area_stats + (round(distance(loc, courier_loc), 3),),
        )

    courier = CourierState(
        courier_id=courier_id,
        location=courier_loc,
        speed=config.speed_mps,
        current_time=now,
        numerical_features=(config.speed_mps,),
    )
    instance_id = f"inst-{rng.integers(1 << 48):012x}"
    instance = ProblemInstance(instance_id, tuple(tasks), courier)

    preference = preference_class_of(courier_id, config)
    label = expert_route(instance, preference, rng, config.label_noise)
    order = list(label.order)
    arrivals = [int(round(a)) for a in label.arrival_times]
    if len(order) > 1 and rng.random() < config.truncation_prob:
        cut = int(rng.integers(1, len(order)))
        order, arrivals = order[:cut], arrivals[:cut]
    return instance, RouteLabel(tuple(order), tuple(arrivals))


def generate_dataset(config: GeneratorConfig, count: int,
                     seed: int | None = None) -> list[tuple[ProblemInstance, RouteLabel]]:
    """`count` instances from independent per-index substreams, so the output
    is reproducible and partitionable by index."""
    base = config.seed if seed is None else seed
    out = []
    for i in range(count):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([base, i])))
        out.append(generate_instance(rng, config))
    return out
