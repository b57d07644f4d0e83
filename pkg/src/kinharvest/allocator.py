"""Energy allocation over slotted harvesting profiles.

Given per-slot harvests ``Q(i)``, choose spends ``s(i)`` from ``S`` (or 0)
maximizing ``sum U(s(i))`` such that no slot spends more than is stored at
its start, storage follows the node model with capacity ``C``, starts at
``B0`` and ends at or above ``BK``.

Solvers:

* :func:`dp_optimal` - pseudopolynomial DP over (slot, utility) keeping the
  maximum reachable storage per utility, with dominated entries pruned.
* :func:`fptas` - the DP on utilities floor-scaled by ``eps * U_max / K``.
* :func:`greedy_online` - spend the highest-utility feasible amount each slot.
* :func:`scheme_lb` - running-average baseline with continuous spends.
* :func:`brute_force_oracle` - exhaustive enumeration for small instances.
"""

from __future__ import annotations

import bisect
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import node
from .errors import ConfigurationError, DomainError, InfeasibleSpendError, ResourceLimitError
from .node import (
    NO_LEAKAGE,
    EnergyProfile,
    LeakageSpec,
    NodeConfig,
    SpendingSet,
    StorageModel,
    UtilitySpec,
)

DEFAULT_MAX_ENTRIES = 20_000_000
BRUTE_FORCE_LIMIT = 10**7


@dataclass(frozen=True)
class EAInstance:
    profile: EnergyProfile
    storage: StorageModel
    S: SpendingSet
    U: UtilitySpec = field(default_factory=UtilitySpec)
    B0: int = 0
    BK: int = 0
    leakage: LeakageSpec = NO_LEAKAGE
    harvest_hook: Callable[[int], float] | None = field(default=None, compare=False)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        C = self.storage.C
        if len(self.profile) < 1:
            raise ConfigurationError("instance needs at least one slot")
        if not 0 <= self.B0 <= C:
            raise ConfigurationError(f"B0={self.B0} outside [0, {C}]")
        if not 0 <= self.BK <= C:
            raise ConfigurationError(f"BK={self.BK} outside [0, {C}]")
        self.U.check_covers(self.S)

    @property
    def K(self) -> int:
        return len(self.profile)

    @classmethod
    def from_config(cls, profile, config: NodeConfig, B0=0, BK=0, **kw) -> "EAInstance":
        return cls(profile, config.storage, config.S, config.utility, B0, BK, config.leakage, **kw)

    def utility_upper_bound(self) -> int:
        """U^H = K * max U(s)."""
        return self.K * max(self.U(s) for s in self.S.values)


@dataclass
class AllocationPlan:
    s: list
    B: list
    total_utility: int | float
    feasible: bool = True
    algorithm: str = ""
    stats: dict = field(default_factory=dict)

    @classmethod
    def infeasible(cls, algorithm, **stats):
        return cls([], [], 0, feasible=False, algorithm=algorithm, stats=stats)

    def to_csv(self, U: UtilitySpec | None = None) -> str:
        buf = io.StringIO()
        buf.write("slot,s_nJ,B_nJ,utility\n")
        for i, s in enumerate(self.s):
            u = U(s) if U is not None else s
            buf.write(f"{i},{s},{self.B[i]},{u}\n")
        return buf.getvalue()


# --------------------------------------------------------------------------
# transitions


def transition(inst: EAInstance, i: int, B: int, s: int) -> int | None:
    """Storage after slot ``i`` when spending ``s`` from ``B``; None if infeasible."""
    cost = node.spend_cost(inst.storage, B, s)
    if cost is None or cost > B:
        return None
    remaining = B + node.harvested(int(inst.profile.Q[i]), B, inst.harvest_hook) - cost
    loss = node.leakage(inst.leakage, i, B)
    return min(remaining - min(loss, remaining), inst.storage.C)


def _slot_terms(inst: EAInstance, i: int, B: np.ndarray):
    """Harvest stored and leakage in slot ``i`` for each start level in ``B``."""
    if inst.harvest_hook is None:
        q = np.full(B.shape, int(inst.profile.Q[i]), dtype=np.int64)
    else:
        q = np.array(
            [node.harvested(int(inst.profile.Q[i]), int(b), inst.harvest_hook) for b in B], dtype=np.int64
        )
    lk = inst.leakage
    if lk.kind == "none":
        loss = np.zeros(B.shape, dtype=np.int64)
    elif lk.kind == "proportional":
        loss = np.floor(lk.rate * B).astype(np.int64)
    elif lk.kind == "constant":
        loss = np.full(B.shape, lk.amount, dtype=np.int64)
    else:
        loss = np.array([node.leakage(lk, i, int(b)) for b in B], dtype=np.int64)
    return q, loss


def _cost_matrix(storage: StorageModel, B: np.ndarray, spends: np.ndarray) -> np.ndarray:
    """Cost of every spend (columns) from every level (rows); BLOCKED where eta = 0."""
    if storage.kind == "battery":
        return np.broadcast_to(spends, (len(B), len(spends)))
    e = node.eta_array(storage, B)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        cost = np.ceil(np.round(spends[None, :] / e, 9))
    cost = np.where(e > 0, cost, node.BLOCKED).astype(np.int64)
    cost[:, spends == 0] = 0
    return cost


def _transition_array(inst: EAInstance, i: int, B: np.ndarray, s: int):
    """Vectorized :func:`transition`: returns (next levels, feasibility mask)."""
    B = np.asarray(B, dtype=np.int64)
    cost = _cost_matrix(inst.storage, B, np.array([s], dtype=np.int64))[:, 0]
    ok = cost <= B
    q, loss = _slot_terms(inst, i, B)
    remaining = B + q - np.where(ok, cost, 0)
    nxt = np.minimum(remaining - np.minimum(loss, remaining), inst.storage.C)
    return nxt, ok


def _spendable(inst: EAInstance):
    # no spend can cost less than itself, so anything above C is never affordable
    return [s for s in inst.S.values if s <= inst.storage.C]


# --------------------------------------------------------------------------
# dynamic programming


def _prune(U, B, parent, s, dominance: bool):
    """Keep the max-B entry per utility and, with ``dominance``, drop entries
    (U', B') for which some entry has U >= U' and B > B'.

    Returns arrays ordered by increasing utility.
    """
    order = np.lexsort((-B, U))
    U, B, parent, s = U[order], B[order], parent[order], s[order]
    first = np.ones(len(U), dtype=bool)
    first[1:] = U[1:] != U[:-1]
    return _dominance(U[first], B[first], parent[first], s[first], dominance)


def _prune_dense(U, B, parent, s, dominance: bool):
    """Same as :func:`_prune` for small non-negative utilities, without sorting."""
    best = np.full(int(U.max()) + 1, -1, dtype=np.int64)
    np.maximum.at(best, U, B)
    winner = np.full(len(best), -1, dtype=np.int64)
    hit = np.flatnonzero(B == best[U])
    winner[U[hit]] = hit  # any maximizer will do
    present = np.flatnonzero(best >= 0)
    w = winner[present]
    return _dominance(present.astype(np.int64), best[present], parent[w], s[w], dominance)


def _dominance(U, B, parent, s, dominance):
    if dominance and len(U) > 1:
        # U is strictly increasing; compare each B with the best at higher U
        best_above = np.empty(len(B), dtype=np.int64)
        best_above[-1] = np.iinfo(np.int64).min
        best_above[:-1] = np.maximum.accumulate(B[::-1])[::-1][1:]
        keep = B >= best_above
        U, B, parent, s = U[keep], B[keep], parent[keep], s[keep]
    return U, B, parent, s


def _dp(inst: EAInstance, utility: Callable[[int], int], dominance=True, max_entries=DEFAULT_MAX_ENTRIES):
    choices = np.array([0] + _spendable(inst), dtype=np.int64)
    util = np.array([int(utility(int(s))) for s in choices], dtype=np.int64)
    if np.any(util < 0):
        raise ConfigurationError("utilities must be non-negative integers")
    # work in units of the common divisor so the utility axis stays compact
    g = int(np.gcd.reduce(util)) or 1
    uc = util // g

    U = np.array([0], dtype=np.int64)
    B = np.array([inst.B0], dtype=np.int64)
    layers = []
    stored = 1
    max_frontier = 1
    for i in range(inst.K):
        m = int(np.searchsorted(choices, B.max(), side="right"))
        spends, gains = choices[:m], uc[:m]
        cost = _cost_matrix(inst.storage, B, spends)
        q, loss = _slot_terms(inst, i, B)
        rows, cols = np.nonzero(cost <= B[:, None])
        remaining = B[rows] + q[rows] - cost[rows, cols]
        cB = np.minimum(remaining - np.minimum(loss[rows], remaining), inst.storage.C)
        cU = U[rows] + gains[cols]
        if cU.max() < 4 * len(cU) + (1 << 16):
            pruned = _prune_dense(cU, cB, rows, cols, dominance)
        else:
            pruned = _prune(cU, cB, rows, cols, dominance)
        U, B, parent, col = pruned
        layers.append((parent, spends[col]))
        stored += len(U)
        max_frontier = max(max_frontier, len(U))
        if stored > max_entries:
            raise ResourceLimitError(
                f"DP table exceeded {max_entries} entries at slot {i}; "
                "use the FPTAS with a larger epsilon"
            )

    stats = {"entries": stored, "max_frontier": max_frontier}
    ok = np.flatnonzero(B >= inst.BK)
    if ok.size == 0:
        return None, stats
    best = ok[np.lexsort((-B[ok], -U[ok]))[0]]
    spends = []
    j = int(best)
    for parent, spent in reversed(layers):
        spends.append(int(spent[j]))
        j = int(parent[j])
    spends.reverse()
    return spends, stats


def _trajectory(inst: EAInstance, spends) -> list:
    B = [inst.B0]
    for i, s in enumerate(spends):
        nxt = transition(inst, i, B[-1], s)
        if nxt is None:
            raise InfeasibleSpendError(f"spend {s} is not affordable", slot=i)
        B.append(nxt)
    return B


def _plan(inst, spends, algorithm, stats):
    B = _trajectory(inst, spends)
    return AllocationPlan(
        s=spends,
        B=B,
        total_utility=sum(inst.U(s) for s in spends),
        algorithm=algorithm,
        stats=stats,
    )


def dp_optimal(inst: EAInstance, dominance: bool = True, max_entries: int = DEFAULT_MAX_ENTRIES) -> AllocationPlan:
    """Maximum-utility plan, or an infeasible plan when no schedule reaches BK.

    ``M(i, U)`` is the largest storage level at the start of slot ``i``
    reachable with accumulated utility ``U``; parent pointers reconstruct the
    spends.  With ``dominance`` entries beaten in both utility and storage
    are discarded as the sweep proceeds.  For the capacitor model keeping
    only the largest level per utility is the solver's defined behavior
    rather than a proof of optimality, since efficiency falls above V_op.
    """
    spends, stats = _dp(inst, inst.U, dominance, max_entries)
    stats["U_H"] = inst.utility_upper_bound()
    if spends is None:
        return AllocationPlan.infeasible("dp", **stats)
    return _plan(inst, spends, "dp", stats)


def _affordable_alone(inst: EAInstance, s: int) -> bool:
    """Whether spending ``s`` in one slot and nothing elsewhere is feasible.

    All K choices of the spending slot are simulated side by side; column
    ``j`` follows the schedule that spends in slot ``j``.
    """
    K = inst.K
    levels = np.full(K, inst.B0, dtype=np.int64)
    alive = np.ones(K, dtype=bool)
    starts = np.arange(K)
    for i in range(K):
        spend_now = starts == i
        idle, _ = _transition_array(inst, i, levels, 0)
        spent, ok = _transition_array(inst, i, levels, s)
        alive &= ~spend_now | ok
        levels = np.where(spend_now, np.where(ok, spent, 0), idle)
    return bool(np.any(alive & (levels >= inst.BK)))


def fptas(inst: EAInstance, epsilon: float, max_entries: int = DEFAULT_MAX_ENTRIES) -> AllocationPlan:
    """(1 - epsilon)-approximate plan via the DP on scaled utilities.

    The scale is ``mu = epsilon * U_L / K`` where ``U_L`` is the largest
    utility of any spend that is feasible on its own (a lower bound on the
    optimum).  The exact DP already divides utilities by their greatest
    common divisor, so when ``mu`` does not exceed it scaling cannot shrink
    the table and the exact DP is used.
    """
    if not 0 < epsilon < 1:
        raise ConfigurationError("epsilon must lie in (0, 1)")
    by_utility = sorted(_spendable(inst), key=lambda s: (-inst.U(s), s))
    U_L = 0
    for s in by_utility:
        if inst.U(s) <= U_L:
            break
        if _affordable_alone(inst, s):
            U_L = inst.U(s)
            break
    eps = Fraction(repr(float(epsilon)))
    mu = eps * U_L / inst.K
    g = math.gcd(*(int(inst.U(s)) for s in _spendable(inst))) or 1
    if mu <= g:
        plan = dp_optimal(inst, max_entries=max_entries)
        plan.algorithm = "fptas"
        plan.stats.update(mu=float(mu), U_L=U_L, scaled=False)
        return plan

    def scaled(s):
        return math.floor(Fraction(inst.U(s)) / mu)

    spends, stats = _dp(inst, scaled, True, max_entries)
    stats.update(mu=float(mu), U_L=U_L, scaled=True)
    if spends is None:
        return AllocationPlan.infeasible("fptas", **stats)
    return _plan(inst, spends, "fptas", stats)


# --------------------------------------------------------------------------
# online policies


def greedy_online(inst: EAInstance) -> AllocationPlan:
    """Each slot, spend the highest-utility amount that keeps storage >= BK.

    Decisions use only the current storage level, so the policy runs online
    with harvests revealed slot by slot.  Among equal utilities the smaller
    spend is taken.
    """
    if inst.B0 < inst.BK:
        raise DomainError("greedy policy needs B0 >= BK")
    candidates = sorted(_spendable(inst), key=lambda s: (-inst.U(s), s))
    monotone = all(inst.U(a) <= inst.U(b) for a, b in zip(inst.S.values, inst.S.values[1:]))
    ascending = list(_spendable(inst))

    B = inst.B0
    spends, levels = [], [B]
    for i in range(inst.K):
        chosen = 0
        headroom = B - inst.BK
        if monotone:
            # utility rises with s: scan downward from the largest s <= headroom
            for j in range(bisect.bisect_right(ascending, headroom) - 1, -1, -1):
                s = ascending[j]
                cost = node.spend_cost(inst.storage, B, s)
                if cost is not None and B - cost >= inst.BK:
                    # on a utility plateau prefer the cheapest spend
                    while j > 0 and inst.U(ascending[j - 1]) == inst.U(s):
                        j -= 1
                    if inst.U(s) > 0:
                        chosen = ascending[j]
                    break
        else:
            for s in candidates:
                if s > headroom or inst.U(s) <= 0:
                    continue
                cost = node.spend_cost(inst.storage, B, s)
                if cost is not None and B - cost >= inst.BK:
                    chosen = s
                    break
        nxt = transition(inst, i, B, chosen)
        spends.append(chosen)
        levels.append(nxt)
        B = nxt
    return AllocationPlan(
        s=spends,
        B=levels,
        total_utility=sum(inst.U(s) for s in spends),
        feasible=levels[-1] >= inst.BK,
        algorithm="greedy",
    )


def scheme_lb(inst: EAInstance, epsilon: float = 0.01, B0: float | None = None) -> AllocationPlan:
    """Running-average baseline with real-valued spends on a battery.

    Each slot targets ``(1 - epsilon)`` times the mean of all earlier
    harvests, spending everything available (stored plus this slot's
    harvest) when that falls short.  Storage starts at half capacity
    unless ``B0`` is given; the spending set and efficiency are ignored.
    """
    C = float(inst.storage.C)
    B = 0.5 * C if B0 is None else float(B0)
    Q = inst.profile.Q.astype(float).tolist()
    spends, levels = [], [B]
    total = 0.0
    for i, q in enumerate(Q):
        q_hat = total / i if i else 0.0
        target = (1 - epsilon) * q_hat
        s = target if B + q >= target else B + q
        B = min(B + q - s, C)
        spends.append(s)
        levels.append(B)
        total += q
    return AllocationPlan(
        s=spends, B=levels, total_utility=float(sum(spends)), algorithm="scheme-lb"
    )


# --------------------------------------------------------------------------
# oracle and validation


def brute_force_oracle(inst: EAInstance, limit: int = BRUTE_FORCE_LIMIT) -> AllocationPlan:
    """Exact optimum by enumerating every spend sequence."""
    choices = inst.S.choices
    if len(choices) ** inst.K > limit:
        raise ResourceLimitError(
            f"(|S|+1)^K = {len(choices)}^{inst.K} sequences exceeds the limit of {limit}"
        )
    U = {s: inst.U(s) for s in choices}
    best = [None, -1]
    seq = []

    def walk(i, B, acc):
        if i == inst.K:
            if B >= inst.BK and acc > best[1]:
                best[0], best[1] = list(seq), acc
            return
        for s in choices:
            try:
                nxt = node.step(
                    inst.storage,
                    B,
                    node.harvested(int(inst.profile.Q[i]), B, inst.harvest_hook),
                    s,
                    node.leakage(inst.leakage, i, B),
                    slot=i,
                )
            except InfeasibleSpendError:
                continue
            seq.append(s)
            walk(i + 1, nxt, acc + U[s])
            seq.pop()

    walk(0, inst.B0, 0)
    if best[0] is None:
        return AllocationPlan.infeasible("brute-force")
    return _plan(inst, best[0], "brute-force", {})


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    utility: int | None = None
    constraint: str | None = None
    slot: int | None = None
    message: str = ""

    def __str__(self):
        if self.valid:
            return f"valid plan, utility {self.utility}"
        where = f" at slot {self.slot}" if self.slot is not None else ""
        return f"violates {self.constraint}{where}: {self.message}"


def validate_plan(inst: EAInstance, plan: AllocationPlan) -> ValidationReport:
    """Check a plan against the spending, evolution and storage constraints.

    ``spend``: spend from the allowed set, affordable at the start-of-slot
    level.  ``evolution``: next level no higher than the storage evolution allows.
    ``bounds``: levels within ``[0, C]``, ``B(0) = B0`` and ``B(K) >= BK``.
    """
    def bad(constraint, message, slot=None):
        return ValidationReport(False, None, constraint, slot, message)

    if not plan.feasible:
        return bad("feasibility", "solver reported the instance infeasible")
    K, C = inst.K, inst.storage.C
    if len(plan.s) != K:
        return bad("shape", f"plan has {len(plan.s)} spends for {K} slots")
    levels = plan.B if plan.B else None
    if levels is not None and len(levels) != K + 1:
        return bad("shape", f"plan has {len(levels)} storage levels, expected {K + 1}")
    allowed = set(inst.S.choices)

    B = inst.B0
    if levels is not None and levels[0] != inst.B0:
        return bad("bounds", f"B(0) = {levels[0]} but B0 = {inst.B0}", 0)
    for i, s in enumerate(plan.s):
        if s not in allowed:
            return bad("spend", f"spend {s} is not in S or 0", i)
        if not 0 <= B <= C:
            return bad("bounds", f"storage {B} outside [0, {C}]", i)
        cost = node.spend_cost(inst.storage, B, s)
        if cost is None:
            return bad("spend", f"spend {s} with zero conversion efficiency at B={B}", i)
        if cost > B:
            return bad("spend", f"spend {s} draws {cost} nJ but only {B} stored", i)
        bound = transition(inst, i, B, s)
        if levels is not None:
            nxt = levels[i + 1]
            if nxt > bound:
                return bad("evolution", f"B({i + 1}) = {nxt} exceeds the reachable {bound}", i)
            if not 0 <= nxt <= C:
                return bad("bounds", f"storage {nxt} outside [0, {C}]", i + 1)
            B = nxt
        else:
            B = bound
    if B < inst.BK:
        return bad("bounds", f"final storage {B} below BK = {inst.BK}", K)
    utility = sum(inst.U(s) for s in plan.s)
    if plan.total_utility != utility:
        return bad("utility", f"reported utility {plan.total_utility} but spends give {utility}")
    return ValidationReport(True, utility)


def adversarial_instance(s_min: int, K: int, late_energy=None) -> EAInstance:
    """Instance on which every feasibility-preserving online policy earns 0.

    Storage holds exactly one minimum spend, starts full and must end full,
    with identity utility, unit efficiency and no leakage.  Harvests are zero
    except ``late_energy`` placed in the final slots (default: ``s_min`` in
    the last one).  An online policy that spends early cannot know whether
    storage will be refilled, so it never spends; an offline solver that
    sees the late harvest spends ``s_min`` up front.
    """
    if K < 2:
        raise DomainError("the construction needs K >= 2")
    late = [s_min] if late_energy is None else list(late_energy)
    if len(late) > K:
        raise DomainError("more late harvests than slots")
    Q = np.zeros(K, dtype=np.int64)
    Q[K - len(late):] = late
    C = int(s_min)
    gap = "online 0; offline >= s_min" if Q[-1] >= s_min else "offline optimum also 0"
    return EAInstance(
        profile=EnergyProfile(Q),
        storage=StorageModel("battery", C),
        S=SpendingSet((int(s_min),)),
        U=UtilitySpec("linear"),
        B0=C,
        BK=C,
        meta={"gap": gap, "s_min": int(s_min)},
    )


# --------------------------------------------------------------------------
# windowed evaluation


ALGORITHMS = ("dp", "fptas", "greedy", "scheme-lb")


def solve(inst: EAInstance, alg: str, epsilon: float | None = None, lb_B0: float | None = None) -> AllocationPlan:
    """Dispatch by name; ``epsilon`` defaults to 0.1 (FPTAS) or 0.01 (Scheme-LB).

    ``lb_B0`` is Scheme-LB's initial storage (default half capacity).
    """
    if alg == "dp":
        return dp_optimal(inst)
    if alg == "fptas":
        return fptas(inst, 0.1 if epsilon is None else epsilon)
    if alg == "greedy":
        return greedy_online(inst)
    if alg == "scheme-lb":
        return scheme_lb(inst, 0.01 if epsilon is None else epsilon, B0=lb_B0)
    raise ConfigurationError(f"unknown algorithm {alg!r}")


def rate_kbps(spends, T_int: float = 1.0, c_tx: float = 1e-9) -> float:
    """Mean data rate in Kb/s for spends in nJ per slot."""
    if len(spends) == 0:
        return 0.0
    return float(np.mean(spends)) * 1e-9 / c_tx / T_int / 1e3


def on_fraction(spends) -> float:
    return float(np.mean(np.asarray(spends) > 0)) if len(spends) else 0.0


@dataclass
class WindowResult:
    start: int
    plan: AllocationPlan
    rate_kbps: float
    on_fraction: float


def allocate_windows(
    profile: EnergyProfile,
    config: NodeConfig,
    alg: str,
    window: int | None = 600,
    B0: int | None = None,
    BK: int = 0,
    epsilon: float | None = None,
    c_tx: float = 1e-9,
) -> list:
    """Solve consecutive windows independently, each starting from ``B0``.

    ``B0=None`` means empty storage for the discrete solvers and half
    capacity for Scheme-LB.  ``window`` of 0 or None uses the whole profile.
    """
    size = len(profile) if not window else int(window)
    if size > len(profile):
        raise ConfigurationError(f"window of {size} slots exceeds the {len(profile)}-slot profile")
    results = []
    for chunk in profile.windows(size):
        start = 0 if B0 is None or alg == "scheme-lb" else int(B0)
        inst = EAInstance.from_config(chunk, config, B0=start, BK=BK if alg != "scheme-lb" else 0)
        plan = solve(inst, alg, epsilon, lb_B0=B0)
        spends = plan.s if plan.feasible else [0] * len(chunk)
        results.append(
            WindowResult(
                chunk.meta["start"], plan, rate_kbps(spends, profile.T_int, c_tx), on_fraction(spends)
            )
        )
    return results
