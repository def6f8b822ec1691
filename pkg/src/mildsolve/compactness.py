"""Metric compactness toolkit on finite point clouds.

Compact sets are approximated by finite clouds of states or trajectories.
On clouds every quantity of interest is exactly computable: greedy
epsilon-nets, farthest-point covering numbers, packing numbers (the witness
against total boundedness) and the Hausdorff metric.  The two constructive
transfer results implemented here mirror the proofs they come from: a net of
a trajectory family transfers to a net of its evaluation set, and a family
of compacta is totally bounded in the Hausdorff metric exactly when its
union is totally bounded in the state space.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .controls import Control, lp_norm
from .operator import ContractionCertificate, TrajectoryGrid
from .spaces import NormKind, check_norm_kind, vector_norm

_DEDUP_DECIMALS = 12


@dataclass(frozen=True)
class PointCloud:
    """Finite subset of a metric space (states or curves).

    ``points`` is (N, n) for metric_kind "state_norm" and (N, n_t + 1, n)
    for "sup_norm" (stacked trajectory grids); the underlying vector norm
    is ``norm_kind`` in both cases.
    """

    points: np.ndarray
    metric_kind: str  # "state_norm" | "sup_norm"
    norm_kind: NormKind = 2
    horizon_T: float | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if self.metric_kind == "state_norm":
            pts = pts.reshape(-1, pts.shape[-1]) if pts.size else pts.reshape(0, 1)
            if pts.ndim != 2:
                raise ValueError("state cloud needs an (N, n) array")
        elif self.metric_kind == "sup_norm":
            if pts.ndim != 3:
                raise ValueError("trajectory cloud needs an (N, n_t + 1, n) array")
        else:
            raise ValueError(f"unknown metric_kind {self.metric_kind!r}")
        if pts.size and not np.all(np.isfinite(pts)):
            raise ValueError("cloud points must be finite")
        object.__setattr__(self, "points", pts)
        check_norm_kind(self.norm_kind)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def distances_to(self, q: np.ndarray) -> np.ndarray:
        """Distances from every cloud point to the single point q."""
        d = vector_norm(self.points - q, self.norm_kind)
        return d.max(axis=-1) if self.metric_kind == "sup_norm" else d

    def trajectory(self, i: int) -> TrajectoryGrid:
        if self.metric_kind != "sup_norm":
            raise ValueError("not a trajectory cloud")
        return TrajectoryGrid(self.horizon_T, self.points[i], self.norm_kind)


def state_cloud(points, norm_kind: NormKind = 2) -> PointCloud:
    return PointCloud(np.atleast_2d(np.asarray(points, dtype=float)),
                      "state_norm", norm_kind)


def trajectory_cloud(trajectories: Sequence[TrajectoryGrid]) -> PointCloud:
    if not trajectories:
        raise ValueError("trajectory cloud needs at least one trajectory")
    t0 = trajectories[0]
    stack = np.stack([tr.states for tr in trajectories])
    return PointCloud(stack, "sup_norm", t0.norm_kind, horizon_T=t0.horizon_T)


def cloud_to_csv(cloud: PointCloud, path) -> None:
    """Write a state cloud as CSV, one point per row."""
    if cloud.metric_kind != "state_norm":
        raise ValueError("CSV serialization is defined for state clouds")
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(cloud.points.shape[1])])
        for row in cloud.points:
            writer.writerow([repr(float(v)) for v in row])


def distance_matrix(a: PointCloud, b: PointCloud, chunk: int = 256) -> np.ndarray:
    """Full cross-distance matrix between two clouds of the same kind."""
    if a.metric_kind != b.metric_kind or a.norm_kind != b.norm_kind:
        raise ValueError("clouds must share metric and norm kind")
    out = np.empty((a.size, b.size))
    for lo in range(0, a.size, chunk):
        hi = min(lo + chunk, a.size)
        block = vector_norm(a.points[lo:hi, None] - b.points[None], a.norm_kind)
        if a.metric_kind == "sup_norm":
            block = block.max(axis=-1)
        out[lo:hi] = block
    return out


@dataclass(frozen=True)
class NetReport:
    """Result of a covering computation over one cloud.

    ``net_indices`` lists the chosen centers (indices into the cloud the net
    was computed over; the Hausdorff direction of `collection_union_nets`
    stores index tuples instead).  ``packing_size`` is the size of the
    greedy epsilon-separated subset of the chosen centers, so
    packing_size <= covering_size always and equality holds for greedy nets.
    """

    epsilon: float
    net_indices: list
    covering_size: int
    packing_size: int

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "net_indices": [list(i) if isinstance(i, tuple) else int(i)
                            for i in self.net_indices],
            "covering_size": self.covering_size,
            "packing_size": self.packing_size,
        }


def _dedup_indices(cloud: PointCloud) -> np.ndarray:
    """Indices of the first representative of each near-duplicate group."""
    flat = cloud.points.reshape(cloud.size, -1)
    _, first = np.unique(np.round(flat, _DEDUP_DECIMALS), axis=0, return_index=True)
    return np.sort(first)


def _separated_subset_size(cloud: PointCloud, indices: Sequence[int], s: float) -> int:
    chosen: list[int] = []
    for i in indices:
        q = cloud.points[i]
        if not chosen:
            chosen.append(i)
            continue
        sub = cloud.points[np.array(chosen)]
        d = vector_norm(sub - q, cloud.norm_kind)
        if cloud.metric_kind == "sup_norm":
            d = d.max(axis=-1)
        if d.min() >= s:
            chosen.append(i)
    return len(chosen)


def greedy_net(cloud: PointCloud, epsilon: float) -> NetReport:
    """Index-order greedy epsilon-net.

    A point joins the net iff its distance to every current net point is
    >= epsilon; consequently every cloud point lies strictly within epsilon
    of the net and the net is itself epsilon-separated.  Near-duplicates
    (within 1e-12) are collapsed first; ties break to the lowest index.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if cloud.size == 0:
        raise ValueError("empty cloud")
    candidates = _dedup_indices(cloud)
    min_dist = np.full(cloud.size, np.inf)
    net: list[int] = []
    for i in candidates:
        if min_dist[i] >= epsilon:
            net.append(int(i))
            min_dist = np.minimum(min_dist, cloud.distances_to(cloud.points[i]))
    return NetReport(epsilon, net, len(net), len(net))


def fps_covering_net(cloud: PointCloud, epsilon: float) -> NetReport:
    """Farthest-point (Gonzalez) net: refine until the coverage radius is <= epsilon.

    Centers are added at the currently worst-covered point, so the report's
    covering_size tracks the k-center optimum within a factor of two; this is
    the covering-number estimate used by the reachability diagnostics.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if cloud.size == 0:
        raise ValueError("empty cloud")
    net = [0]
    min_dist = cloud.distances_to(cloud.points[0])
    while True:
        far = int(np.argmax(min_dist))
        if min_dist[far] <= epsilon:
            break
        net.append(far)
        min_dist = np.minimum(min_dist, cloud.distances_to(cloud.points[far]))
    return NetReport(epsilon, net, len(net), len(net))


def interval_covering_net(cloud: PointCloud, epsilon: float) -> NetReport:
    """Optimal point-centered covering of a one-dimensional state cloud.

    Sorted sweep: cover the leftmost uncovered value with the largest cloud
    point within epsilon of it.  Exchange argument makes this minimal among
    nets whose centers are cloud points.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if cloud.metric_kind != "state_norm" or cloud.points.shape[1] != 1:
        raise ValueError("interval covering needs a one-dimensional state cloud")
    if cloud.size == 0:
        raise ValueError("empty cloud")
    values = cloud.points[:, 0]
    order = np.argsort(values, kind="stable")
    net: list[int] = []
    covered_up_to = -np.inf
    pos = 0
    while pos < len(order):
        v = values[order[pos]]
        if v <= covered_up_to:
            pos += 1
            continue
        inside = order[(values[order] <= v + epsilon) & (values[order] >= v)]
        center_idx = int(inside[np.argmax(values[inside])])
        net.append(center_idx)
        covered_up_to = values[center_idx] + epsilon
    return NetReport(epsilon, net, len(net),
                     _separated_subset_size(cloud, net, epsilon))


def covering_net(cloud: PointCloud, epsilon: float) -> NetReport:
    """Covering-number estimate: exact sweep in dimension one, FPS otherwise."""
    if cloud.metric_kind == "state_norm" and cloud.points.shape[1] == 1:
        return interval_covering_net(cloud, epsilon)
    return fps_covering_net(cloud, epsilon)


def packing_number(cloud: PointCloud, s: float) -> int:
    """Size of the greedy maximal subset with pairwise distances >= s."""
    if s <= 0:
        raise ValueError("s must be > 0")
    if cloud.size == 0:
        raise ValueError("empty cloud")
    return _separated_subset_size(cloud, range(cloud.size), s)


def hausdorff_distance(k1: PointCloud, k2: PointCloud) -> float:
    """Exact Hausdorff distance max of the two directed max-min distances."""
    if k1.size == 0 or k2.size == 0:
        raise ValueError("Hausdorff distance needs nonempty clouds")
    d = distance_matrix(k1, k2)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def evaluation_set(trajectories: Sequence[TrajectoryGrid]) -> PointCloud:
    """All grid states of all trajectories, as a state cloud."""
    if not trajectories:
        return PointCloud(np.empty((0, 1)), "state_norm")
    stack = np.concatenate([tr.states for tr in trajectories], axis=0)
    return PointCloud(stack, "state_norm", trajectories[0].norm_kind)


def image_cloud(x: TrajectoryGrid) -> PointCloud:
    """Grid image of a single trajectory, as a compact-set approximation."""
    return PointCloud(x.states.copy(), "state_norm", x.norm_kind)


def verify_coverage(points: PointCloud, centers: np.ndarray, epsilon: float,
                    slack: float = 1e-12) -> bool:
    """Brute-force check that every cloud point is within epsilon of a center."""
    center_cloud = PointCloud(centers, points.metric_kind, points.norm_kind,
                              horizon_T=points.horizon_T)
    min_dist = np.full(points.size, np.inf)
    for c in center_cloud.points:
        min_dist = np.minimum(min_dist, points.distances_to(c))
    return bool(np.all(min_dist <= epsilon + slack))


def net_transfer(s_net: NetReport, trajectories: Sequence[TrajectoryGrid],
                 epsilon: float) -> NetReport:
    """Transfer an eps/2 trajectory net to a verified eps-net of the evaluation set.

    Each net trajectory's image gets its own eps/2 state net; the union of
    those nets covers every evaluated state within eps.  Both the input net
    and the output coverage are verified by brute force.  Returned indices
    refer to `evaluation_set(trajectories)` in trajectory-major order.
    """
    cloud = trajectory_cloud(trajectories)
    half = epsilon / 2.0
    reps = np.array(sorted(s_net.net_indices))
    min_dist = np.full(cloud.size, np.inf)
    for i in reps:
        min_dist = np.minimum(min_dist, cloud.distances_to(cloud.points[i]))
    if np.any(min_dist > half + 1e-12):
        raise ValueError("input net is not a valid eps/2-net of the trajectories")

    n_pts = trajectories[0].n_t + 1
    ev_indices: list[int] = []
    for i in reps:
        img = image_cloud(trajectories[i])
        local = greedy_net(img, half)
        ev_indices.extend(int(i) * n_pts + j for j in local.net_indices)

    ev = evaluation_set(trajectories)
    centers = ev.points[np.array(ev_indices)]
    if not verify_coverage(ev, centers, epsilon):
        raise AssertionError("transferred net failed coverage verification")
    packing = _separated_subset_size(ev, ev_indices, epsilon)
    return NetReport(epsilon, ev_indices, len(ev_indices), packing)


def iterated_images(x0: TrajectoryGrid, u_sample: Sequence[Control],
                    apply_F: Callable[[TrajectoryGrid, Control], TrajectoryGrid],
                    n: int, budget: int = 256, subsample: bool = True,
                    seed: int = 0,
                    cert: ContractionCertificate | None = None) -> list[PointCloud]:
    """Iterated image clouds W_0 = {x0}, W_{k+1} = {F(x, u) : x in W_k, u in sample}.

    Cloud sizes grow like |u_sample|^k, so each generation is capped at
    `budget` members by seeded uniform subsampling (error if subsampling is
    disabled and the budget would be exceeded).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if not u_sample:
        raise ValueError("u_sample must be nonempty")
    if cert is not None:
        for u in u_sample:
            if lp_norm(u, cert.p) > cert.radius_r * (1.0 + 1e-12):
                raise ValueError("control outside the certificate radius")
    rng = np.random.default_rng(seed)
    generations = [[x0]]
    for _ in range(n):
        prev = generations[-1]
        if len(prev) * len(u_sample) > budget and not subsample:
            raise ValueError("iterated image budget exceeded with subsampling disabled")
        nxt = [apply_F(x, u) for x in prev for u in u_sample]
        if len(nxt) > budget:
            keep = np.sort(rng.choice(len(nxt), size=budget, replace=False))
            nxt = [nxt[i] for i in keep]
        generations.append(nxt)
    return [trajectory_cloud(gen) for gen in generations]


def collection_union_nets(family: Sequence[PointCloud],
                          epsilon: float) -> tuple[NetReport, NetReport]:
    """Both constructive directions of the union/collection equivalence.

    Only-if: an eps/2 Hausdorff net of the family plus eps/2 nets of its
    representative clouds yields a verified eps-net of the union.  If: an
    eps-net xi_1..xi_M of the union induces the Hausdorff eps-net
    ``K' = {xi_i : dist(xi_i, K) <= eps}`` over the family.  Both outputs
    are verified by brute force before returning.
    """
    if not family:
        raise ValueError("empty family")
    if any(k.size == 0 for k in family):
        raise ValueError("family members must be nonempty")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    half = epsilon / 2.0

    # only-if direction: greedy eps/2-net of the family under d_H
    reps: list[int] = []
    for i, k in enumerate(family):
        if all(hausdorff_distance(k, family[j]) >= half for j in reps):
            reps.append(i)

    offsets = np.cumsum([0] + [k.size for k in family])
    union = PointCloud(np.concatenate([k.points for k in family]),
                       family[0].metric_kind, family[0].norm_kind,
                       horizon_T=family[0].horizon_T)
    union_indices: list[int] = []
    for i in reps:
        local = greedy_net(family[i], half)
        union_indices.extend(int(offsets[i]) + j for j in local.net_indices)
    centers = union.points[np.array(union_indices)]
    if not verify_coverage(union, centers, epsilon):
        raise AssertionError("union net failed coverage verification")
    union_report = NetReport(epsilon, union_indices, len(union_indices),
                             _separated_subset_size(union, union_indices, epsilon))

    # if direction: subsets of a union eps-net form a Hausdorff eps-net
    base = greedy_net(union, epsilon)
    base_pts = union.points[np.array(base.net_indices)]
    subsets = []
    for k in family:
        min_d = np.stack([k.distances_to(c) for c in base_pts]).min(axis=1)
        chosen = tuple(int(base.net_indices[i]) for i in np.nonzero(min_d <= epsilon)[0])
        if not chosen:
            raise AssertionError("union net left a family member uncovered")
        k_prime = PointCloud(union.points[np.array(chosen)], k.metric_kind,
                             k.norm_kind, horizon_T=k.horizon_T)
        if hausdorff_distance(k, k_prime) > epsilon + 1e-12:
            raise AssertionError("Hausdorff net failed verification")
        subsets.append(chosen)
    distinct = sorted(set(subsets))
    # packing over the constructed centers themselves, under d_H
    kprime_clouds = [PointCloud(union.points[np.array(c)], union.metric_kind,
                                union.norm_kind, horizon_T=union.horizon_T)
                     for c in distinct]
    sep: list[int] = []
    for i, kp in enumerate(kprime_clouds):
        if all(hausdorff_distance(kp, kprime_clouds[j]) >= epsilon for j in sep):
            sep.append(i)
    hausdorff_report = NetReport(epsilon, distinct, len(distinct), len(sep))
    return union_report, hausdorff_report
