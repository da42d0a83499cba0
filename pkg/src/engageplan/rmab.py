"""Two-state restless bandit planning.

Each beneficiary is an arm with state E (monthly E2C >= 0.5) or NE and two
actions: I (call intervention) and A (abstain).  Transition parameters are
estimated per cluster of demographic groups, Whittle indices are computed by
bisection on the passive subsidy, and the k arms with the largest index are
selected.

Index conventions used throughout: state 0 = NE, 1 = E; action 0 = A
(passive), 1 = I (active).  ``p[s, a, s2]`` is a transition probability.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Iterable, Mapping, Sequence

import numpy as np

from .calllog import E2C_THRESHOLD, BeneficiaryProfile, CallHistory

log = logging.getLogger(__name__)

MONTH_DAYS = 30
NE, E = 0, 1
A, I = 0, 1
REWARD = np.array([-1.0, 1.0])

DEFAULT_BETA = 0.95
DEFAULT_VI_TOL = 1e-9
DEFAULT_WHITTLE_TOL = 1e-6


class BehaviorState(enum.IntEnum):
    NE = 0
    E = 1


class Action(enum.IntEnum):
    A = 0
    I = 1


class RmabError(ValueError):
    pass


class UndefinedRow(RmabError):
    pass


class IndexabilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TransitionTuple:
    s: BehaviorState
    a: Action
    s_next: BehaviorState


# ---------------------------------------------------------------------------
# States, actions and tuples from logs


def monthly_states(
    history: CallHistory,
    start: date,
    n_months: int | None = None,
    threshold: float = E2C_THRESHOLD,
    month_days: int = MONTH_DAYS,
) -> list[BehaviorState]:
    """One state per 30-day block from ``start``; blocks without connections are NE."""
    if n_months is None:
        if history.end is None:
            return []
        n_months = (history.end - start).days // month_days
    out = []
    for m in range(n_months):
        lo = start + timedelta(days=m * month_days)
        _, conn, eng = history.counts(lo, lo + timedelta(days=month_days))
        out.append(BehaviorState.E if conn > 0 and eng / conn >= threshold else BehaviorState.NE)
    return out


def monthly_actions(
    call_dates: Iterable[date], start: date, n_months: int, month_days: int = MONTH_DAYS
) -> list[Action]:
    """I for every month containing a (successful) call intervention."""
    acts = [Action.A] * n_months
    for d in call_dates:
        m = (d - start).days // month_days
        if 0 <= m < n_months:
            acts[m] = Action.I
    return acts


def build_tuples(states: Sequence[BehaviorState], actions: Sequence[Action]) -> list[TransitionTuple]:
    return [
        TransitionTuple(BehaviorState(states[t]), Action(actions[t]), BehaviorState(states[t + 1]))
        for t in range(len(states) - 1)
    ]


@dataclass
class TransitionCounts:
    count: np.ndarray = field(default_factory=lambda: np.zeros((2, 2, 2), dtype=np.int64))

    @classmethod
    def from_tuples(cls, tuples: Iterable[TransitionTuple]) -> "TransitionCounts":
        c = np.zeros((2, 2, 2), dtype=np.int64)
        for t in tuples:
            c[int(t.s), int(t.a), int(t.s_next)] += 1
        return cls(c)

    def __add__(self, other: "TransitionCounts") -> "TransitionCounts":
        return TransitionCounts(self.count + other.count)

    @staticmethod
    def total(items: Iterable["TransitionCounts"]) -> "TransitionCounts":
        c = np.zeros((2, 2, 2), dtype=np.int64)
        for t in items:
            c = c + t.count
        return TransitionCounts(c)


# ---------------------------------------------------------------------------
# MDP parameters


@dataclass
class MdpParams:
    p: np.ndarray
    beta: float = DEFAULT_BETA
    reward: np.ndarray = field(default_factory=lambda: REWARD.copy())

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p.shape != (2, 2, 2):
            raise RmabError(f"transition array must be 2x2x2, got {self.p.shape}")
        if np.any(self.p < 0) or np.any(self.p > 1):
            raise RmabError("transition probabilities outside [0, 1]")
        if np.any(np.abs(self.p.sum(axis=2) - 1.0) > 1e-12):
            raise RmabError("transition rows do not sum to 1")

    @classmethod
    def from_four(cls, eae: float, nana: float, eie: float, nini: float, beta: float = DEFAULT_BETA) -> "MdpParams":
        """Build from P(E,A,E), P(NE,A,NE), P(E,I,E), P(NE,I,NE)."""
        p = np.empty((2, 2, 2))
        for a, (stay_e, stay_ne) in ((A, (eae, nana)), (I, (eie, nini))):
            p[E, a] = (1.0 - stay_e, stay_e)
            p[NE, a] = (stay_ne, 1.0 - stay_ne)
        return cls(p, beta)

    def four(self) -> np.ndarray:
        return np.array([self.p[E, A, E], self.p[NE, A, NE], self.p[E, I, E], self.p[NE, I, NE]])

    def to_dict(self) -> dict:
        return {"p": self.p.tolist(), "beta": self.beta, "four": self.four().tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "MdpParams":
        return cls(np.array(d["p"]), float(d["beta"]))


def estimate_params(counts: TransitionCounts, alpha: float = 1.0, beta: float = DEFAULT_BETA) -> MdpParams:
    """Laplace-smoothed row frequencies ``(count + alpha) / (row total + 2 alpha)``."""
    if alpha < 0:
        raise RmabError("smoothing alpha must be >= 0")
    c = counts.count.astype(float)
    tot = c.sum(axis=2)
    if alpha == 0 and np.any(tot == 0):
        s, a = np.argwhere(tot == 0)[0]
        raise UndefinedRow(f"no observed transitions from state {BehaviorState(s).name} under {Action(a).name}")
    p = np.empty((2, 2, 2))
    p[:, :, 0] = (c[:, :, 0] + alpha) / (tot + 2 * alpha)
    p[:, :, 1] = 1.0 - p[:, :, 0]
    return MdpParams(p, beta)


# ---------------------------------------------------------------------------
# Value iteration and the Whittle index


@dataclass
class SubsidizedQ:
    q: np.ndarray  # q[s, a]
    v: np.ndarray
    subsidy: float
    iterations: int


def bellman_q(mdp: MdpParams, v: np.ndarray, subsidy: float) -> np.ndarray:
    """One backup: r(s) + m [a == A] + beta * sum_s' p[s, a, s'] v(s')."""
    q = mdp.beta * (mdp.p @ v)
    q += mdp.reward[:, None]
    q[:, A] += subsidy
    return q


def _stop_threshold(beta: float, tol: float) -> float:
    return tol * (1.0 - beta) / (2.0 * beta) if beta > 0 else np.inf


def value_iteration(
    mdp: MdpParams,
    subsidy: float = 0.0,
    tol: float = DEFAULT_VI_TOL,
    v0: np.ndarray | None = None,
    max_iter: int = 1_000_000,
) -> SubsidizedQ:
    if not 0 <= mdp.beta < 1:
        raise RmabError(f"discount must lie in [0, 1), got {mdp.beta}")
    if tol <= 0:
        raise RmabError("tol must be positive")
    stop = _stop_threshold(mdp.beta, tol)
    # scalar loop: far cheaper than numpy dispatch on 2x2 arrays
    b = mdp.beta
    (pa0, pi0), (pa1, pi1) = [[float(row[1]) for row in mdp.p[s]] for s in (NE, E)]
    r0, r1 = float(mdp.reward[NE]), float(mdp.reward[E])
    v0_, v1_ = (0.0, 0.0) if v0 is None else (float(v0[0]), float(v0[1]))
    for it in range(1, max_iter + 1):
        dv = v1_ - v0_
        n0 = r0 + b * (v0_ + pa0 * dv) + subsidy
        n0i = r0 + b * (v0_ + pi0 * dv)
        n1 = r1 + b * (v0_ + pa1 * dv) + subsidy
        n1i = r1 + b * (v0_ + pi1 * dv)
        n0 = n0 if n0 >= n0i else n0i
        n1 = n1 if n1 >= n1i else n1i
        delta = max(abs(n0 - v0_), abs(n1 - v1_))
        v0_, v1_ = n0, n1
        if delta < stop:
            break
    # q consistent with the returned v
    q = bellman_q(mdp, np.array([v0_, v1_]), subsidy)
    return SubsidizedQ(q, q.max(axis=1), subsidy, it)


def policy_value(
    mdp: MdpParams, policy: Sequence[int], subsidy: float = 0.0, tol: float = DEFAULT_VI_TOL
) -> np.ndarray:
    """Iterative evaluation of a fixed deterministic policy (state -> action)."""
    pol = np.asarray(policy, dtype=int)
    p_pi = mdp.p[np.arange(2), pol]
    r_pi = mdp.reward + subsidy * (pol == A)
    stop = _stop_threshold(mdp.beta, tol)
    v = np.zeros(2)
    while True:
        v_new = r_pi + mdp.beta * (p_pi @ v)
        delta = np.max(np.abs(v_new - v))
        v = v_new
        if delta < stop:
            return v


def subsidy_bracket(beta: float) -> tuple[float, float]:
    half = 2.0 / (1.0 - beta) + 1.0
    return -half, half


def active_advantage(
    mdp: MdpParams, state: int, subsidy: float, tol: float = DEFAULT_VI_TOL, v0=None
) -> tuple[float, np.ndarray]:
    """Q_m(state, I) - Q_m(state, A) and the value function it came from."""
    sq = value_iteration(mdp, subsidy, tol, v0)
    return float(sq.q[state, I] - sq.q[state, A]), sq.v


def whittle_index(
    mdp: MdpParams,
    state: int,
    tol: float = DEFAULT_WHITTLE_TOL,
    vi_tol: float = DEFAULT_VI_TOL,
) -> float:
    """Smallest passive subsidy making the arm indifferent between I and A."""
    lo, hi = subsidy_bracket(mdp.beta)
    d_lo, v = active_advantage(mdp, state, lo, vi_tol)
    if d_lo <= 0:
        warnings.warn(f"no sign change of the active advantage in state {state}; index clipped to {lo}",
                      IndexabilityWarning, stacklevel=2)
        return lo
    d_hi, _ = active_advantage(mdp, state, hi, vi_tol)
    if d_hi > 0:
        warnings.warn(f"no sign change of the active advantage in state {state}; index clipped to {hi}",
                      IndexabilityWarning, stacklevel=2)
        return hi
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        d, v = active_advantage(mdp, state, mid, vi_tol, v0=v)
        if d > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def indexability_violations(mdp: MdpParams, state: int, grid: Sequence[float], vi_tol: float = 1e-9) -> list[float]:
    """Grid points where the active advantage increases with the subsidy."""
    deltas = [active_advantage(mdp, state, m, vi_tol)[0] for m in grid]
    bad = [float(grid[i + 1]) for i in range(len(deltas) - 1) if deltas[i + 1] > deltas[i] + 10 * vi_tol]
    if bad:
        log.info("active advantage not monotone in subsidy for state %d at %d grid points", state, len(bad))
    return bad


def discounted_return(states: Sequence[int], beta: float, reward: np.ndarray = REWARD) -> float:
    if len(states) == 0:
        raise RmabError("empty trajectory")
    r = reward[np.asarray(states, dtype=int)]
    return float(np.sum(r * beta ** np.arange(len(r))))


# ---------------------------------------------------------------------------
# k-means


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia_history: list[float]

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=float)


def kmeans(points, k: int, seed: int | np.random.Generator = 0, max_iter: int = 300) -> KMeansResult:
    """Lloyd iterations from k-means++ seeds.

    ``inertia_history[0]`` is the inertia of the seeding assignment; one entry
    is appended per Lloyd step.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 2:
        raise RmabError("points must be a 2-d array")
    if not 1 <= k <= len(x):
        raise RmabError(f"need 1 <= k <= n_points, got k={k}, n={len(x)}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    centroids = kmeans_plusplus(x, k, rng)
    d = _sq_dists(x, centroids)
    labels = d.argmin(axis=1)
    history = [float(d[np.arange(len(x)), labels].sum())]
    for _ in range(max_iter):
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
        d = _sq_dists(x, centroids)
        new_labels = d.argmin(axis=1)
        # empty clusters take the point farthest from its centroid
        for j in range(k):
            if not np.any(new_labels == j):
                far = int(d[np.arange(len(x)), new_labels].argmax())
                centroids[j] = x[far]
                new_labels[far] = j
                d = _sq_dists(x, centroids)
        history.append(float(d[np.arange(len(x)), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return KMeansResult(labels, centroids, history)


# ---------------------------------------------------------------------------
# Grouping, pooling and cluster models

AGE_EDGES = (20, 25, 30, 35)
DEFAULT_GROUP_FIELDS = ("education_level", "income_group", "phone_owner", "age_bucket")


def group_key(profile: BeneficiaryProfile, fields: Sequence[str] = DEFAULT_GROUP_FIELDS,
              age_edges: Sequence[int] = AGE_EDGES) -> str:
    parts = []
    for f in fields:
        if f == "age_bucket":
            parts.append(f"age{int(np.searchsorted(age_edges, profile.age, side='right'))}")
        else:
            parts.append(f"{f}={getattr(profile, f)}")
    return "|".join(parts)


def pool_cluster_params(
    assignment: Mapping[str, int],
    counts: Mapping[str, TransitionCounts],
    alpha: float = 1.0,
    beta: float = DEFAULT_BETA,
) -> dict[int, MdpParams]:
    """Sum member counts per cluster and estimate one MDP per cluster."""
    pooled: dict[int, np.ndarray] = {}
    for member in sorted(assignment):
        c = assignment[member]
        pooled[c] = pooled.get(c, np.zeros((2, 2, 2), dtype=np.int64)) + counts[member].count
    return {c: estimate_params(TransitionCounts(v), alpha, beta) for c, v in sorted(pooled.items())}


@dataclass
class ClusterModel:
    """Group -> cluster map with one MDP (and its two indices) per cluster.

    Cluster ``-1`` holds the all-data estimate used for unseen groups.
    """

    group_to_cluster: dict[str, int]
    params: dict[int, MdpParams]
    centroids: np.ndarray
    group_fields: tuple[str, ...] = DEFAULT_GROUP_FIELDS
    age_edges: tuple[int, ...] = AGE_EDGES
    alpha: float = 1.0
    seed: int = 0
    indices: dict[int, tuple[float, float]] = field(default_factory=dict)

    def cluster_of(self, profile: BeneficiaryProfile) -> int:
        return self.group_to_cluster.get(group_key(profile, self.group_fields, self.age_edges), -1)

    def compute_indices(self, tol: float = DEFAULT_WHITTLE_TOL) -> dict[int, tuple[float, float]]:
        self.indices = {c: (whittle_index(m, NE, tol), whittle_index(m, E, tol)) for c, m in sorted(self.params.items())}
        return self.indices

    def index(self, cluster: int, state: int) -> float:
        if not self.indices:
            self.compute_indices()
        return self.indices[cluster][int(state)]

    def to_dict(self) -> dict:
        return {
            "group_fields": list(self.group_fields),
            "age_edges": list(self.age_edges),
            "alpha": self.alpha,
            "seed": self.seed,
            "centroids": self.centroids.tolist(),
            "group_to_cluster": dict(sorted(self.group_to_cluster.items())),
            "clusters": {
                str(c): {**m.to_dict(), "whittle": list(self.indices[c]) if c in self.indices else None}
                for c, m in sorted(self.params.items())
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ClusterModel":
        params = {int(c): MdpParams.from_dict(v) for c, v in d["clusters"].items()}
        indices = {int(c): tuple(v["whittle"]) for c, v in d["clusters"].items() if v.get("whittle") is not None}
        return cls(
            group_to_cluster={k: int(v) for k, v in d["group_to_cluster"].items()},
            params=params,
            centroids=np.array(d["centroids"], dtype=float),
            group_fields=tuple(d["group_fields"]),
            age_edges=tuple(d["age_edges"]),
            alpha=float(d["alpha"]),
            seed=int(d["seed"]),
            indices=indices,
        )


def fit_cluster_model(
    profiles: Mapping[str, BeneficiaryProfile],
    counts: Mapping[str, TransitionCounts],
    n_clusters: int = 20,
    alpha: float = 1.0,
    beta: float = DEFAULT_BETA,
    seed: int = 0,
    group_fields: Sequence[str] = DEFAULT_GROUP_FIELDS,
    age_edges: Sequence[int] = AGE_EDGES,
) -> ClusterModel:
    """Group beneficiaries, cluster the group parameter vectors, pool per cluster."""
    ids = sorted(set(profiles) & set(counts))
    if not ids:
        raise RmabError("no beneficiaries with both a profile and transition counts")
    member_group = {b: group_key(profiles[b], group_fields, age_edges) for b in ids}
    group_counts: dict[str, TransitionCounts] = {}
    for b in ids:
        g = member_group[b]
        group_counts[g] = group_counts.get(g, TransitionCounts()) + counts[b]
    groups = sorted(group_counts)
    vecs = np.array([estimate_params(group_counts[g], alpha, beta).four() for g in groups])
    k = min(n_clusters, len(groups))
    km = kmeans(vecs, k, seed)
    g2c = {g: int(c) for g, c in zip(groups, km.labels)}
    params = pool_cluster_params(g2c, group_counts, alpha, beta)
    params[-1] = estimate_params(TransitionCounts.total(counts[b] for b in ids), alpha, beta)
    return ClusterModel(g2c, params, km.centroids, tuple(group_fields), tuple(age_edges), alpha, seed)


# ---------------------------------------------------------------------------
# Planning


@dataclass
class WhittleTable:
    cluster: dict[str, int]
    state: dict[str, int]
    index: dict[str, float]

    @classmethod
    def build(cls, model: ClusterModel, profiles: Mapping[str, BeneficiaryProfile],
              states: Mapping[str, int]) -> "WhittleTable":
        cl, st, ix = {}, {}, {}
        for b in sorted(states):
            c = model.cluster_of(profiles[b])
            cl[b], st[b] = c, int(states[b])
            ix[b] = model.index(c, st[b])
        return cls(cl, st, ix)


@dataclass
class PlanResult:
    selected: list[str]
    k: int
    n: int


def rank_by_index(index: Mapping[str, float]) -> list[str]:
    """Descending index, ties by ascending id."""
    return sorted(index, key=lambda b: (-index[b], b))


def plan_top_k(index: Mapping[str, float] | WhittleTable, k: int) -> PlanResult:
    if k < 0:
        raise RmabError("budget k must be >= 0")
    if isinstance(index, WhittleTable):
        index = index.index
    order = rank_by_index(index)
    return PlanResult(order[:k], k, len(order))


def overlap_metric(selected: Sequence[str], high_engagement: Iterable[str]) -> float:
    if len(selected) == 0:
        raise RmabError("empty selection")
    hi = set(high_engagement)
    return 100.0 * sum(1 for b in selected if b in hi) / len(selected)
