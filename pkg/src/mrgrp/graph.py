"""Multi-relational task graph: four relation adjacencies, node features,
and per-relation edge features.

Relations: spatial proximity (all tasks), pickup temporal proximity,
delivery temporal proximity (promised-time closeness within each kind), and
the directed pickup-then-delivery pairing. Proximity relations come from
k-nearest-neighbor lists symmetrized by union; ties break on the smaller
task id so builds are reproducible.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .domain import DELIVERY, PICKUP, ProblemInstance, distance


class RelationKind(enum.IntEnum):
    SPATIAL_PROX = 1
    PICKUP_TEMPORAL_PROX = 2
    DELIVERY_TEMPORAL_PROX = 3
    PICKUP_THEN_DELIVERY = 4


class FeatureError(ValueError):
    """Node feature construction was asked for something it cannot do."""


#: numerical node feature columns, in order
NUM_FEATURE_COLUMNS = ("x", "y", "ready_offset", "promised_offset", "courier_dist",
                       "area_task_density", "area_mean_speed", "area_on_time_rate")
#: categorical node feature fields, in order, with their code cardinalities
CAT_FEATURE_FIELDS = (("kind", 2), ("service_type", 4), ("time_type", 3))


@dataclass(frozen=True)
class NormStats:
    """Dataset-level mean and standard deviation of the numerical columns."""
    mean: tuple[float, ...]
    std: tuple[float, ...]


@dataclass
class MultiRelGraph:
    n: int
    adjacency: dict[RelationKind, np.ndarray]          # bool n x n
    cat_codes: np.ndarray                              # int64 n x 3
    num_features: np.ndarray                           # float n x 8, standardized
    edge_features: dict[RelationKind, dict[tuple[int, int], np.ndarray]]

    def edge_arrays(self, rel: RelationKind) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Edges of one relation as (source ids, target ids, feature matrix),
        sorted by (source, target)."""
        feats = self.edge_features[rel]
        keys = sorted(feats.keys())
        if not keys:
            dim = 2 if rel == RelationKind.PICKUP_THEN_DELIVERY else 1
            return (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                    np.zeros((0, dim)))
        u = np.array([k[0] for k in keys], dtype=np.int64)
        v = np.array([k[1] for k in keys], dtype=np.int64)
        f = np.stack([feats[k] for k in keys])
        return u, v, f

    def to_debug_json(self) -> str:
        """Adjacency lists per relation, for eyeballing."""
        payload = {
            rel.name: sorted((int(a), int(b)) for a, b in zip(*np.nonzero(adj)))
            for rel, adj in self.adjacency.items()
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def build_pd_adjacency(instance: ProblemInstance) -> np.ndarray:
    """Directed edge from each order's pickup to its delivery."""
    n = instance.n
    adj = np.zeros((n, n), dtype=bool)
    pickups: dict[int, int] = {}
    deliveries: dict[int, int] = {}
    for t in instance.tasks:
        (pickups if t.is_pickup else deliveries)[t.order_id] = t.task_id
    for oid, p in pickups.items():
        if oid in deliveries:
            adj[p, deliveries[oid]] = True
    return adj


def _knn_union(ids: list[int], key_dist, k: int, n: int) -> np.ndarray:
    """Union-symmetrized kNN adjacency over the node subset `ids`."""
    adj = np.zeros((n, n), dtype=bool)
    for i in ids:
        others = sorted((tid for tid in ids if tid != i),
                        key=lambda tid: (key_dist(i, tid), tid))
        for j in others[:k]:
            adj[i, j] = True
            adj[j, i] = True
    return adj


def build_spatial_knn(instance: ProblemInstance, k: int) -> np.ndarray:
    if k < 1:
        raise ValueError(f"spatial k must be >= 1, got {k}")
    locs = [t.location for t in instance.tasks]
    return _knn_union(list(range(instance.n)),
                      lambda i, j: distance(locs[i], locs[j]), k, instance.n)


def build_temporal_knn(instance: ProblemInstance, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Promised-time kNN within the pickup set and within the delivery set."""
    if k < 1:
        raise ValueError(f"temporal k must be >= 1, got {k}")
    promised = [t.promised_time for t in instance.tasks]

    def gap(i, j):
        return abs(promised[i] - promised[j])

    pickups = [t.task_id for t in instance.tasks if t.kind == PICKUP]
    deliveries = [t.task_id for t in instance.tasks if t.kind == DELIVERY]
    return (_knn_union(pickups, gap, k, instance.n),
            _knn_union(deliveries, gap, k, instance.n))


def compute_norm_stats(instances: list[ProblemInstance]) -> NormStats:
    """Pooled per-column mean/std of the raw numerical node features.
    Constant columns get std 1 so standardization stays a no-op for them."""
    rows = np.concatenate([_raw_numericals(inst) for inst in instances])
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    std[std < 1e-12] = 1.0
    return NormStats(tuple(float(v) for v in mean), tuple(float(v) for v in std))


def _raw_numericals(instance: ProblemInstance) -> np.ndarray:
    now = instance.courier.current_time
    rows = np.zeros((instance.n, len(NUM_FEATURE_COLUMNS)))
    for i, t in enumerate(instance.tasks):
        ready = 0.0 if t.earliest_pickup_time is None else t.earliest_pickup_time - now
        area = t.numerical_features[:3] if len(t.numerical_features) >= 3 else (0.0, 0.0, 0.0)
        rows[i] = (t.location[0], t.location[1], ready, t.promised_time - now,
                   distance(t.location, instance.courier.location), *area)
    return rows


def build_node_features(instance: ProblemInstance,
                        norm_stats: NormStats | None) -> tuple[np.ndarray, np.ndarray]:
    """(categorical codes, standardized numerical block) per task.

    Time features are offsets from the instance timestamp; the distance to
    the courier is recomputed from locations.
    """
    if norm_stats is None:
        raise FeatureError("normalization statistics are required to build node features")
    cats = np.zeros((instance.n, len(CAT_FEATURE_FIELDS)), dtype=np.int64)
    for i, t in enumerate(instance.tasks):
        codes = (0 if t.is_pickup else 1, *t.categorical_features[:2])
        for f, ((name, size), code) in enumerate(zip(CAT_FEATURE_FIELDS, codes)):
            if not 0 <= code < size:
                raise FeatureError(f"task {t.task_id}: categorical field '{name}' "
                                   f"code {code} out of range [0, {size})")
            cats[i, f] = code
    raw = _raw_numericals(instance)
    mean = np.asarray(norm_stats.mean)
    std = np.asarray(norm_stats.std)
    return cats, (raw - mean) / std


def build_graph(instance: ProblemInstance, k_spatial: int, k_temporal: int,
                norm_stats: NormStats) -> MultiRelGraph:
    """Assemble all four relations with node and edge features."""
    n = instance.n
    adjacency = {
        RelationKind.SPATIAL_PROX: build_spatial_knn(instance, k_spatial),
        RelationKind.PICKUP_THEN_DELIVERY: build_pd_adjacency(instance),
    }
    a_pc, a_dc = build_temporal_knn(instance, k_temporal)
    adjacency[RelationKind.PICKUP_TEMPORAL_PROX] = a_pc
    adjacency[RelationKind.DELIVERY_TEMPORAL_PROX] = a_dc

    locs = [t.location for t in instance.tasks]
    promised = [t.promised_time for t in instance.tasks]

    def spatial_feat(u, v):
        return np.array([distance(locs[u], locs[v])])

    def temporal_feat(u, v):
        return np.array([abs(promised[u] - promised[v])], dtype=np.float64)

    def pd_feat(u, v):
        return np.array([distance(locs[u], locs[v]), promised[v] - promised[u]],
                        dtype=np.float64)

    feat_fns = {
        RelationKind.SPATIAL_PROX: spatial_feat,
        RelationKind.PICKUP_TEMPORAL_PROX: temporal_feat,
        RelationKind.DELIVERY_TEMPORAL_PROX: temporal_feat,
        RelationKind.PICKUP_THEN_DELIVERY: pd_feat,
    }
    edge_features = {
        rel: {(int(u), int(v)): feat_fns[rel](int(u), int(v))
              for u, v in zip(*np.nonzero(adjacency[rel]))}
        for rel in RelationKind
    }
    cats, nums = build_node_features(instance, norm_stats)
    return MultiRelGraph(n, adjacency, cats, nums, edge_features)
