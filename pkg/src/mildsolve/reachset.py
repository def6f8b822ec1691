"""Reachable-set sampling and compactness diagnostics.

The reachable set up to time T under a control ball |u|_p <= r is
approximated by solving a seeded Monte-Carlo sample of ball controls and
sweeping every grid time of every solved trajectory.  Three desk-scale
experiments are built on top:

* covering-number diagnostics across truncation dimensions (the compactness
  signature: reach-set coverings saturate as the dimension doubles while
  coverings of an ambient sphere sample keep growing);
* the spike counter-example, whose dyadic trajectory family has unbounded
  sup-norm packing even though its evaluation set stays one-dimensional;
* the finite-image approximation Gamma_eps of (t, xi) -> e^{At} xi on a
  compact cloud, with the convolution reconstruction check that witnesses
  containment of integral terms in a compact convex set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .compactness import (
    PointCloud,
    covering_net,
    evaluation_set,
    greedy_net,
    packing_number,
    state_cloud,
    trajectory_cloud,
)
from .controls import lp_norm, sample_ball, spike_control
from .operator import (
    ContractionCertificate,
    certify_hidden_contraction,
    certify_omega_contraction,
    integral_operator,
)
from .solver import gronwall_radius, picard_solve, solve_batch
from .spaces import (
    Semigroup,
    StateVector,
    VectorField,
    bilinear_field,
    constant_field,
    diagonal_semigroup,
    heat_semigroup,
    vector_norm,
)


class VerificationError(RuntimeError):
    """A brute-force verification pass failed."""


@dataclass(frozen=True)
class ReachSetSample:
    """Monte-Carlo approximation of the reachable set up to time T."""

    xi0: StateVector
    p: float
    r: float
    horizon_T: float
    controls: list
    trajectories: list
    endpoints: PointCloud  # evaluation set of the trajectories

    def __post_init__(self):
        for u in self.controls:
            if lp_norm(u, self.p) > self.r * (1.0 + 1e-12):
                raise ValueError("sampled control violates the ball radius")
        for tr in self.trajectories:
            if not np.array_equal(tr.states[0], self.xi0.coords):
                raise ValueError("trajectory does not start at xi0")


def default_certificate(p: float, r: float, M: float, mu: float, L_bound: float,
                        T: float, target_C: float = 0.5) -> ContractionCertificate:
    """Hidden certificate for p = 1, omega certificate otherwise."""
    if p == 1:
        return certify_hidden_contraction(r, M, mu, L_bound, T, p=1.0)
    return certify_omega_contraction(p, r, M, mu, L_bound, T, target_C=target_C)


def sample_reachset(xi0: StateVector, p: float, r: float, T: float, count: int,
                    seed: int, fields: Sequence[VectorField], sg: Semigroup,
                    cert: ContractionCertificate, n_t: int, tol: float = 1e-8,
                    threads: int | None = None) -> ReachSetSample:
    """Draw `count` ball controls, solve each, and collect all grid states."""
    if count < 1:
        raise ValueError("count must be >= 1")
    controls = sample_ball(p, r, T, len(fields), n_t, count, seed)
    results = solve_batch(xi0, controls, fields, sg, cert, tol=tol, threads=threads)
    trajectories = [res.trajectory for res in results]
    return ReachSetSample(xi0, p, r, T, controls, trajectories,
                          evaluation_set(trajectories))


# ---------------------------------------------------------------------------
# compactness diagnostic across truncation dimensions


@dataclass(frozen=True)
class DiagnosticReport:
    """Rows (n, p, eps, N_reach, N_ball, sample_size) plus the run config."""

    rows: list
    config: dict


def _heat_system(dim: int, xi0_scale: float):
    sg = heat_semigroup(dim)
    b_field = bilinear_field(np.eye(dim))
    xi0 = StateVector(np.full(dim, xi0_scale / math.sqrt(dim)), 2)
    return sg, b_field, xi0


def _sphere_sample(center: np.ndarray, radius: float, count: int,
                   rng: np.random.Generator) -> PointCloud:
    dirs = rng.standard_normal((count, center.size))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return state_cloud(center + radius * dirs, 2)


def compactness_diagnostic(dims: Sequence[int], eps_ladder: Sequence[float],
                           p: float, r: float, T: float, count: int, seed: int,
                           n_t: int = 128, xi0_scale: float = 0.02,
                           cloud_budget: int = 4000, tol: float = 1e-4,
                           threads: int | None = None) -> DiagnosticReport:
    """Covering numbers of reach-set samples vs ambient-sphere samples.

    For each truncation dimension n a heat-type system (eigenvalues -k^2,
    identity bilinear field) is sampled with `count` ball controls; the
    endpoint cloud (capped at `cloud_budget` by seeded subsampling) is
    covered at every ladder radius via farthest-point refinement, next to
    a matched-cardinality uniform sample of the sphere of Gronwall radius
    around xi0.
    """
    dims = list(dims)
    eps_ladder = list(eps_ladder)
    if any(d2 <= d1 for d1, d2 in zip(dims, dims[1:])):
        raise ValueError("dims must be strictly increasing")
    if any(e2 >= e1 for e1, e2 in zip(eps_ladder, eps_ladder[1:])):
        raise ValueError("eps ladder must be strictly decreasing")

    rows = []
    for dim in dims:
        sg, b_field, xi0 = _heat_system(dim, xi0_scale)
        cert = default_certificate(p, r, M=1.0, mu=0.0,
                                   L_bound=b_field.lipschitz_L, T=T)
        sample = sample_reachset(xi0, p, r, T, count, seed, [b_field], sg,
                                 cert, n_t, tol=tol, threads=threads)
        cloud = sample.endpoints
        rng = np.random.default_rng(seed + 7919 * dim)
        if cloud.size > cloud_budget:
            keep = np.sort(rng.choice(cloud.size, size=cloud_budget, replace=False))
            cloud = state_cloud(cloud.points[keep], cloud.norm_kind)
        radius = gronwall_radius(xi0, K=r, p=p, T=T, M=1.0, mu=0.0,
                                 alpha=b_field.growth_alpha,
                                 beta=b_field.growth_beta)
        ball = _sphere_sample(xi0.coords, radius, cloud.size, rng)
        for eps in eps_ladder:
            rows.append({
                "n": dim, "p": p, "eps": eps,
                "n_reach": covering_net(cloud, eps).covering_size,
                "n_ball": covering_net(ball, eps).covering_size,
                "sample_size": cloud.size,
            })
    cfg = {"dims": dims, "eps_ladder": eps_ladder, "p": p, "r": r, "T": T,
           "count": count, "seed": seed, "n_t": n_t, "xi0_scale": xi0_scale,
           "cloud_budget": cloud_budget, "gronwall_radius": radius}
    return DiagnosticReport(rows, cfg)


# ---------------------------------------------------------------------------
# spike counter-example


@dataclass(frozen=True)
class CounterexampleReport:
    spike_indices: list
    max_closed_form_error: float
    packing_separation: float
    packing_size: int
    eval_epsilon: float
    eval_covering_size: int


def counterexample_report(n_max: int, n_t: int, separation: float = 0.5,
                          eval_eps: float = 0.25,
                          closed_form_slack: float = 1e-9) -> CounterexampleReport:
    """Solve the dyadic spike family of the scalar system x' = u, x(0) = 0.

    Each solution is checked against the closed form min(n t, 1); the report
    contains the sup-norm packing of the trajectory family (grows with the
    dyadic index: consecutive members stay 1/2 apart) and the covering size
    of the evaluation set (stays bounded: the values only fill [0, 1]).
    """
    ks = [2 ** k for k in range(int(math.log2(n_max)) + 1) if 2 ** k <= n_max]
    for n in ks:
        if n_t % n != 0:
            raise ValueError(f"n_t={n_t} must be divisible by every spike index (n={n})")

    sg = diagonal_semigroup([0.0])
    f_const = constant_field([1.0])
    xi0 = StateVector([0.0], 2)
    cert = certify_hidden_contraction(1.0, 1.0, 0.0, f_const.lipschitz_L, 1.0)

    trajectories = []
    worst = 0.0
    for n in ks:
        u = spike_control(n, n_t)
        res = picard_solve(xi0, u, [f_const], sg, cert, tol=1e-12)
        t = res.trajectory.times
        closed = np.minimum(n * t, 1.0)
        err = float(np.abs(res.trajectory.states[:, 0] - closed).max())
        worst = max(worst, err)
        if err > closed_form_slack:
            raise VerificationError(
                f"spike n={n} deviates from closed form by {err:.3e}")
        trajectories.append(res.trajectory)

    packing = packing_number(trajectory_cloud(trajectories), separation)
    covering = covering_net(evaluation_set(trajectories), eval_eps).covering_size
    return CounterexampleReport(ks, worst, separation, packing, eval_eps, covering)


# ---------------------------------------------------------------------------
# finite-image semigroup approximation (Gamma_eps)


@dataclass(frozen=True)
class GammaTable:
    """Piecewise-constant approximation of (t, xi) -> e^{At} xi on a cloud.

    Time cells are (0, T] split into N left-open intervals (the first one
    closed at 0); state cells are the disjointified delta-balls around the
    greedy net centers, with first-match membership.  values[i-1, j] equals
    e^{A (i T / N)} eta_j, so the image is finite with at most N * M points.
    """

    horizon_T: float
    epsilon: float
    delta: float
    n_time_cells: int
    centers: np.ndarray  # (M, n)
    values: np.ndarray  # (N, M, n)
    norm_kind: float | int
    verified_max_error: float
    verification_points: int

    @property
    def n_state_cells(self) -> int:
        return self.centers.shape[0]

    def time_cell(self, t) -> np.ndarray:
        """1-based time cell index; Delta_1 = [0, T/N], then left-open cells."""
        t = np.asarray(t, dtype=float)
        idx = np.ceil(t * self.n_time_cells / self.horizon_T).astype(int)
        return np.clip(idx, 1, self.n_time_cells)

    def state_cell(self, xi: np.ndarray) -> np.ndarray:
        """1-based first-match cell index of the state(s); -1 when uncovered."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        dist = np.stack([vector_norm(xi - c, self.norm_kind) for c in self.centers],
                        axis=1)
        inside = dist < self.delta
        idx = np.where(inside.any(axis=1), inside.argmax(axis=1) + 1, -1)
        return idx

    def evaluate(self, t, xi: np.ndarray) -> np.ndarray:
        i = self.time_cell(t)
        j = self.state_cell(xi)
        if np.any(j < 0):
            raise ValueError("state outside every Gamma_eps cell")
        return self.values[np.asarray(i) - 1, j - 1]

    def to_dict(self) -> dict:
        return {
            "T": self.horizon_T, "epsilon": self.epsilon, "delta": self.delta,
            "n_time_cells": self.n_time_cells,
            "centers": self.centers.tolist(), "values": self.values.tolist(),
            "verified_max_error": self.verified_max_error,
            "verification_points": self.verification_points,
        }


def _gamma_apply(sg: Semigroup, t: float, states: np.ndarray) -> np.ndarray:
    if sg.is_diagonal:
        return np.exp(sg.eigenvalues * t) * states
    return states @ sg.matrix_exp(t).T


def _sampled_oscillation(sg: Semigroup, cloud: PointCloud, T: float,
                         delta: float, rng: np.random.Generator,
                         sample_count: int) -> float:
    """Sampled modulus of continuity of e^{At} xi over [0,T] x hull(cloud)."""
    pts = cloud.points
    pick = rng.integers(0, pts.shape[0], size=(sample_count, 2))
    mix = rng.uniform(size=(sample_count, 1))
    base = mix * pts[pick[:, 0]] + (1.0 - mix) * pts[pick[:, 1]]
    shift = rng.standard_normal(base.shape)
    norms = vector_norm(shift, cloud.norm_kind)
    norms[norms == 0] = 1.0
    other = base + shift / norms[:, None] * (delta * rng.uniform(size=(sample_count, 1)))
    ts = rng.uniform(0.0, T, size=sample_count)
    dts = np.clip(ts + rng.uniform(-delta, delta, size=sample_count), 0.0, T)
    worst = 0.0
    for t, td, a, b in zip(ts, dts, base, other):
        diff = _gamma_apply(sg, td, b) - _gamma_apply(sg, t, a)
        worst = max(worst, float(vector_norm(diff, cloud.norm_kind)))
    return worst


def gamma_approximation(sg: Semigroup, K: PointCloud, T: float, eps: float,
                        sample_count: int = 512, max_retries: int = 8,
                        time_oversample: int = 4, seed: int = 0,
                        extra_verify_times: np.ndarray | None = None) -> GammaTable:
    """Build a finite-image table for e^{At} xi on the cloud K, error < eps.

    delta is estimated by halving against a sampled modulus of continuity,
    then the table (time step T/N < delta, greedy delta-net of K) is checked
    on a dense verification grid; on failure delta is halved and the table
    rebuilt, a bounded number of times.
    """
    if K.size == 0:
        raise ValueError("K must be nonempty")
    if K.metric_kind != "state_norm":
        raise ValueError("Gamma approximation expects a state cloud")
    if eps <= 0:
        raise ValueError("eps must be > 0")
    rng = np.random.default_rng(seed)

    centroid = K.points.mean(axis=0)
    spread = float(K.distances_to(centroid).max())
    delta = max(T, 2.0 * spread, eps)
    for _ in range(200):
        if _sampled_oscillation(sg, K, T, delta, rng, sample_count) < eps:
            break
        delta *= 0.5

    verify_times = np.linspace(0.0, T, time_oversample * max(1, int(np.ceil(T / delta))) + 1)
    if extra_verify_times is not None:
        verify_times = np.union1d(verify_times, np.asarray(extra_verify_times, dtype=float))

    last_err = np.inf
    for _ in range(max_retries):
        table = _build_gamma_table(sg, K, T, eps, delta)
        last_err, n_checked = _verify_gamma(sg, K, table, verify_times)
        if last_err < eps:
            return GammaTable(table.horizon_T, table.epsilon, table.delta,
                              table.n_time_cells, table.centers, table.values,
                              table.norm_kind, last_err, n_checked)
        delta *= 0.5
    raise VerificationError(
        f"Gamma_eps verification failed after {max_retries} retries "
        f"(last max error {last_err:.3e} vs eps {eps:.3e})")


def _build_gamma_table(sg: Semigroup, K: PointCloud, T: float, eps: float,
                       delta: float) -> GammaTable:
    n_cells = max(1, int(np.ceil(T / delta)))
    if T / n_cells >= delta:
        n_cells += 1
    net = greedy_net(K, delta)
    centers = K.points[np.array(net.net_indices)]
    values = np.stack([_gamma_apply(sg, i * T / n_cells, centers)
                       for i in range(1, n_cells + 1)])
    return GammaTable(T, eps, delta, n_cells, centers, values, K.norm_kind,
                      np.inf, 0)


def _verify_gamma(sg: Semigroup, K: PointCloud, table: GammaTable,
                  times: np.ndarray) -> tuple[float, int]:
    j = table.state_cell(K.points)
    if np.any(j < 0):
        raise VerificationError("net construction left cloud points uncovered")
    worst = 0.0
    for t in times:
        truth = _gamma_apply(sg, float(t), K.points)
        approx = table.values[int(table.time_cell(t)) - 1, j - 1]
        worst = max(worst, float(vector_norm(truth - approx, K.norm_kind).max()))
    return worst, len(times) * K.size


def field_value_cloud(sample: ReachSetSample, fields: Sequence[VectorField]) -> PointCloud:
    """Cloud of field values f(t_j, x(t_j)) over the whole sample (one channel)."""
    if len(fields) != 1:
        raise ValueError("field-value cloud expects a single-channel system")
    f = fields[0]
    chunks = [f(tr.times, tr.states) for tr in sample.trajectories]
    return state_cloud(np.concatenate(chunks, axis=0), sample.endpoints.norm_kind)


@dataclass(frozen=True)
class ConvolutionReport:
    """Reconstruction of convolution integrals through the finite Gamma table."""

    n_controls: int
    max_coefficient: float  # max |lambda_ij| observed
    max_l1_norm: float  # after normalization, <= 1
    max_reconstruction_error: float
    per_control: list = field(default_factory=list)


def convolution_compactness_check(sample: ReachSetSample, gamma: GammaTable,
                                  fields: Sequence[VectorField], sg: Semigroup,
                                  max_controls: int | None = None) -> ConvolutionReport:
    """Reconstruct integral terms as finite sums over the Gamma table.

    For each trajectory/control and each grid time, the quadratured integral
    ``sum_c h u_c e^{A(t-s_c)} f(s_c, x_c)`` is rewritten as
    ``sum_ij lambda_ij xi_ij`` with lambda_ij the control mass falling in the
    (time-lag, state)-cell (i, j).  Each |lambda_ij| is bounded by |u|_1
    (witnessing containment in the convex set spanned by the xi_ij) and the
    reconstruction must match the direct quadrature within eps plus slack.
    Controls are rescaled to |u|_1 <= 1 first.
    """
    if len(fields) != 1:
        raise ValueError("reconstruction check expects a single-channel system")
    f = fields[0]
    zero = StateVector(np.zeros(sample.xi0.dim), sample.xi0.norm_kind)

    pairs = list(zip(sample.trajectories, sample.controls))
    if max_controls is not None:
        pairs = pairs[:max_controls]

    n_state = gamma.n_state_cells
    max_coeff = 0.0
    max_l1 = 0.0
    max_err = 0.0
    per_control = []
    for x, u in pairs:
        u1 = lp_norm(u, 1)
        if u1 > 1.0:
            u = u.scaled(1.0 / u1)
        u1 = min(u1, 1.0)
        max_l1 = max(max_l1, u1)
        h = u.cell_width
        n_t = u.n_t
        times = x.times

        phi = f(times[:-1], x.states[:-1])  # field values per cell
        j_cell = gamma.state_cell(phi)
        if np.any(j_cell < 0):
            raise ValueError("Gamma table does not cover the sampled field values")
        lag_cell = gamma.time_cell(times[1:])  # cell of lag d*h, d = 1..n_t

        direct = integral_operator(x, u, zero, [f], sg).states
        ctrl_err = 0.0
        ctrl_coeff = 0.0
        for l in range(1, n_t + 1):
            c = np.arange(l)
            flat = (lag_cell[l - 1 - c] - 1) * n_state + (j_cell[c] - 1)
            lam = np.bincount(flat, weights=h * u.values[0, c],
                              minlength=gamma.n_time_cells * n_state)
            ctrl_coeff = max(ctrl_coeff, float(np.abs(lam).max()))
            recon = lam @ gamma.values.reshape(-1, gamma.values.shape[-1])
            err = float(vector_norm(direct[l] - recon, x.norm_kind))
            ctrl_err = max(ctrl_err, err)
        if ctrl_coeff > u1 + 1e-12:
            raise VerificationError(
                f"coefficient {ctrl_coeff:.3e} exceeds the control mass {u1:.3e}")
        max_coeff = max(max_coeff, ctrl_coeff)
        max_err = max(max_err, ctrl_err)
        per_control.append({"coeff": ctrl_coeff, "error": ctrl_err})
    return ConvolutionReport(len(pairs), max_coeff, max_l1, max_err, per_control)
