"""JSON Lines persistence for datasets and predictions.

Dataset line schema (one instance per line):

    {"instance_id": str,
     "courier": {"courier_id", "location" [x, y], "speed", "current_time",
                 "numerical_features"},
     "tasks": [{"task_id", "order_id", "kind", "location",
                "earliest_pickup_time" (null for deliveries), "promised_time",
                "categorical_features", "numerical_features"}],
     "picked_up_orders": [int],
     "label": {"order": [int], "arrival_times": [int]}}

Times are integer seconds; coordinates are floats in meters.
"""

from __future__ import annotations

import json
from pathlib import Path

from .domain import (CourierState, ProblemInstance, RouteLabel, TaskNode,
                     validate_instance, validate_label)


class DatasetError(ValueError):
    """Malformed dataset or prediction file."""


def _task_to_json(t: TaskNode) -> dict:
    return {
        "task_id": t.task_id,
        "order_id": t.order_id,
        "kind": t.kind,
        "location": list(t.location),
        "earliest_pickup_time": t.earliest_pickup_time,
        "promised_time": t.promised_time,
        "categorical_features": list(t.categorical_features),
        "numerical_features": list(t.numerical_features),
    }


def _task_from_json(obj: dict) -> TaskNode:
    return TaskNode(
        task_id=int(obj["task_id"]),
        order_id=int(obj["order_id"]),
        kind=obj["kind"],
        location=tuple(float(v) for v in obj["location"]),
        earliest_pickup_time=(None if obj["earliest_pickup_time"] is None
                              else int(obj["earliest_pickup_time"])),
        promised_time=int(obj["promised_time"]),
        categorical_features=tuple(int(v) for v in obj["categorical_features"]),
        numerical_features=tuple(float(v) for v in obj["numerical_features"]),
    )


def instance_to_json(instance: ProblemInstance, label: RouteLabel | None) -> dict:
    c = instance.courier
    obj = {
        "instance_id": instance.instance_id,
        "courier": {
            "courier_id": c.courier_id,
            "location": list(c.location),
            "speed": c.speed,
            "current_time": c.current_time,
            "numerical_features": list(c.numerical_features),
        },
        "tasks": [_task_to_json(t) for t in instance.tasks],
        "picked_up_orders": sorted(instance.picked_up_orders),
    }
    if label is not None:
        obj["label"] = {
            "order": list(label.order),
            "arrival_times": [int(a) for a in label.arrival_times],
        }
    return obj


def instance_from_json(obj: dict) -> tuple[ProblemInstance, RouteLabel | None]:
    c = obj["courier"]
    courier = CourierState(
        courier_id=int(c["courier_id"]),
        location=tuple(float(v) for v in c["location"]),
        speed=float(c["speed"]),
        current_time=int(c["current_time"]),
        numerical_features=tuple(float(v) for v in c.get("numerical_features", [])),
    )
    instance = ProblemInstance(
        instance_id=str(obj["instance_id"]),
        tasks=tuple(_task_from_json(t) for t in obj["tasks"]),
        courier=courier,
        picked_up_orders=frozenset(int(v) for v in obj.get("picked_up_orders", [])),
    )
    label = None
    if "label" in obj:
        label = RouteLabel(
            order=tuple(int(v) for v in obj["label"]["order"]),
            arrival_times=tuple(int(v) for v in obj["label"]["arrival_times"]),
        )
    return instance, label


def save_dataset(path: str | Path,
                 data: list[tuple[ProblemInstance, RouteLabel | None]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for instance, label in data:
            fh.write(json.dumps(instance_to_json(instance, label), sort_keys=True))
            fh.write("\n")


def load_dataset(path: str | Path,
                 validate: bool = True) -> list[tuple[ProblemInstance, RouteLabel | None]]:
    """Parse a dataset file; parse failures report the 1-based line number,
    invariant violations report the instance id."""
    out: list[tuple[ProblemInstance, RouteLabel | None]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                instance, label = instance_from_json(obj)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"{path}: parse error at line {lineno}: {exc}") from exc
            if validate:
                problems = validate_instance(instance)
                if label is not None:
                    problems += validate_label(instance, label)
                if problems:
                    raise DatasetError(
                        f"{path}: instance {instance.instance_id} (line {lineno}) invalid: "
                        + "; ".join(problems))
            out.append((instance, label))
    return out


def save_predictions(path: str | Path, rows: list[dict]) -> None:
    """Prediction rows: instance_id, order, etas, chosen_probs."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")


def load_predictions(path: str | Path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append({
                    "instance_id": str(obj["instance_id"]),
                    "order": [int(v) for v in obj["order"]],
                    "etas": [float(v) for v in obj["etas"]],
                    "chosen_probs": [float(v) for v in obj["chosen_probs"]],
                })
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"{path}: parse error at line {lineno}: {exc}") from exc
    return out
