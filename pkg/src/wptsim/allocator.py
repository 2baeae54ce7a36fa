"""Per-block transmit power allocation over sub-channels.

Four policies map the EN's knowledge to powers ``P`` with ``sum(P) == P0``:

* ``uni``      equal split, no feedback needed
* ``maxrate``  everything on the sub-channel with the largest total estimated gain
* ``maxmin``   max-min estimated harvest over the lowest non-empty battery class
* ``mcc``      max-min over LOW + c1 * sum over MODERATE - c2 * max over HIGH

The LP policies are solved on a normalised copy of the gains (largest entry
1, budget 1); the optimum is invariant to that positive rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .feedback import HIGH, LOW, MODERATE, EnKnowledge
from .lpcore import OPTIMAL, simplex

UNI, MAXRATE, MAXMIN, MCC = 0, 1, 2, 3
POLICIES = {"uni": UNI, "maxrate": MAXRATE, "maxmin": MAXMIN, "mcc": MCC}


class AllocationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MccWeights:
    c1: float = 0.2
    c2: float = 0.1

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("MCC weights must be positive")


@dataclass
class PowerAllocation:
    powers: np.ndarray
    budget: float

    def __post_init__(self):
        self.powers = np.asarray(self.powers, dtype=np.float64)

    def check(self, equality: bool = True, tol: float = 1e-9):
        if np.any(self.powers < -tol * max(self.budget, 1.0)):
            raise AllocationError("negative sub-channel power")
        total = self.powers.sum()
        if equality and abs(total - self.budget) > tol * max(self.budget, 1.0):
            raise AllocationError(f"powers sum to {total}, budget is {self.budget}")
        if not equality and total > self.budget * (1 + tol):
            raise AllocationError(f"powers sum to {total}, above budget {self.budget}")
        return self


@njit(cache=True)
def _scale(hhat, classes):
    amax = 0.0
    for k in range(hhat.shape[0]):
        if classes[k] >= 0:
            for i in range(hhat.shape[1]):
                if hhat[k, i] > amax:
                    amax = hhat[k, i]
    return amax


@njit(cache=True)
def uniform_powers(n):
    return np.full(n, 1.0 / n)


@njit(cache=True)
def maxrate_powers(hhat, classes):
    n = hhat.shape[1]
    best = 0
    best_sum = -1.0
    for i in range(n):
        s = 0.0
        for k in range(hhat.shape[0]):
            if classes[k] >= 0:
                s += hhat[k, i]
        if s > best_sum:
            best_sum = s
            best = i
    p = np.zeros(n)
    p[best] = 1.0
    return p


@njit(cache=True)
def _mcc_lp(a, classes, cols, c1, c2, equality, w_low, w_mod, w_high):
    """Epigraph LP over the sub-channels listed in ``cols``.

    Returns ``(status, unit-budget powers)`` with zeros outside ``cols``. The
    ``w_*`` flags switch the three objective terms on or off, which lets the
    same builder serve MaxMin (only the min term over one class).
    """
    K, N = a.shape
    n = cols.size
    nl = 0
    nh = 0
    for k in range(K):
        if classes[k] == LOW and w_low:
            nl += 1
        elif classes[k] == HIGH and w_high:
            nh += 1
    si = n
    ui = n + (1 if nl > 0 else 0)
    nv = ui + (1 if nh > 0 else 0)
    c = np.zeros(nv)
    if w_mod:
        for k in range(K):
            if classes[k] == MODERATE:
                for j in range(n):
                    c[j] += c1 * a[k, cols[j]]
    if nl > 0:
        c[si] = 1.0
    if nh > 0:
        c[ui] = -c2
    n_ub = nl + nh + (0 if equality else 1)
    A_ub = np.zeros((n_ub, nv))
    b_ub = np.zeros(n_ub)
    r = 0
    for k in range(K):
        if classes[k] == LOW and w_low:
            A_ub[r, si] = 1.0
            for j in range(n):
                A_ub[r, j] = -a[k, cols[j]]
            r += 1
        elif classes[k] == HIGH and w_high:
            A_ub[r, ui] = -1.0
            for j in range(n):
                A_ub[r, j] = a[k, cols[j]]
            r += 1
    if equality:
        A_eq = np.zeros((1, nv))
        A_eq[0, :n] = 1.0
        b_eq = np.ones(1)
    else:
        A_ub[r, :n] = 1.0
        b_ub[r] = 1.0
        A_eq = np.zeros((0, nv))
        b_eq = np.zeros(0)
    status, x, obj, piv = simplex(c, A_ub, b_ub, A_eq, b_eq)
    p = np.zeros(N)
    for j in range(n):
        p[cols[j]] = max(x[j], 0.0)
    return status, p


@njit(cache=True)
def mcc_powers(hhat, classes, cols, c1, c2, equality):
    amax = _scale(hhat, classes)
    n = hhat.shape[1]
    if amax <= 0.0:
        return OPTIMAL, uniform_powers(n)
    return _mcc_lp(hhat / amax, classes, cols, c1, c2, equality, True, True, True)


@njit(cache=True)
def maxmin_target(classes):
    for cls in (LOW, MODERATE, HIGH):
        for k in range(classes.size):
            if classes[k] == cls:
                return cls
    return -1


@njit(cache=True)
def maxmin_powers(hhat, classes, cols):
    n = hhat.shape[1]
    target = maxmin_target(classes)
    amax = _scale(hhat, classes)
    if target < 0 or amax <= 0.0:
        return OPTIMAL, uniform_powers(n)
    # reuse the epigraph builder with the target class relabelled LOW
    relabel = np.full(classes.size, -1, dtype=np.int64)
    for k in range(classes.size):
        if classes[k] == target:
            relabel[k] = LOW
    return _mcc_lp(hhat / amax, relabel, cols, 1.0, 1.0, True, True, False, False)


@njit(cache=True)
def policy_powers(policy, hhat, classes, cols, c1, c2, equality):
    """Unit-budget powers for ``policy``; status is OPTIMAL unless an LP failed.

    ``cols`` lists the sub-channels the LP policies may use. Any column left
    out must duplicate (for every reporting device) a column that is kept.
    """
    n = hhat.shape[1]
    if policy == UNI:
        return OPTIMAL, uniform_powers(n)
    has_any = False
    for k in range(classes.size):
        if classes[k] >= 0:
            has_any = True
    if not has_any:
        return OPTIMAL, uniform_powers(n)
    if policy == MAXRATE:
        return OPTIMAL, maxrate_powers(hhat, classes)
    if policy == MAXMIN:
        return maxmin_powers(hhat, classes, cols)
    return mcc_powers(hhat, classes, cols, c1, c2, equality)


def distinct_columns(knowledge: EnKnowledge) -> np.ndarray:
    """Sorted first-occurrence indices of the distinct columns over reporting rows.

    Unreported sub-channels share one imputed value per device, so they
    collapse to a single column; merging identical columns does not change
    the optimum.
    """
    rows = knowledge.estimated_gains[knowledge.reporting]
    _, first = np.unique(rows, axis=1, return_index=True)
    return np.sort(first).astype(np.int64)


def _require_reports(knowledge: EnKnowledge):
    if knowledge.reporting.size == 0:
        raise AllocationError("no device reported in this block")


def _finish(status, unit_powers, budget, equality=True):
    if status != OPTIMAL:
        raise AllocationError(f"allocation LP failed with status {status}")
    return PowerAllocation(unit_powers * budget, budget).check(equality)


def allocate_uni(budget: float, n_subchannels: int) -> PowerAllocation:
    if n_subchannels < 1:
        raise ValueError("need at least one sub-channel")
    return PowerAllocation(np.full(n_subchannels, budget / n_subchannels), budget)


def allocate_maxrate(knowledge: EnKnowledge, budget: float, use_lp: bool = False) -> PowerAllocation:
    """All power on the sub-channel with the largest summed estimate.

    ``use_lp`` routes the same problem through the simplex instead, for
    cross-checking the closed form.
    """
    _require_reports(knowledge)
    if use_lp:
        classes = np.where(knowledge.classes >= 0, MODERATE, -1)
        status, p = mcc_powers(knowledge.estimated_gains, classes, distinct_columns(knowledge),
                               1.0, 1.0, True)
        return _finish(status, p, budget)
    return _finish(OPTIMAL, maxrate_powers(knowledge.estimated_gains, knowledge.classes), budget)


def allocate_maxmin(knowledge: EnKnowledge, budget: float) -> PowerAllocation:
    _require_reports(knowledge)
    status, p = maxmin_powers(knowledge.estimated_gains, knowledge.classes,
                              distinct_columns(knowledge))
    return _finish(status, p, budget)


def allocate_mcc(knowledge: EnKnowledge, weights: MccWeights, budget: float,
                 budget_mode: str = "equality") -> PowerAllocation:
    _require_reports(knowledge)
    if budget_mode not in ("equality", "inequality"):
        raise ValueError(f"unknown budget_mode {budget_mode!r}")
    equality = budget_mode == "equality"
    status, p = mcc_powers(knowledge.estimated_gains, knowledge.classes,
                           distinct_columns(knowledge), weights.c1, weights.c2, equality)
    return _finish(status, p, budget, equality)


def allocate(policy: str, knowledge: EnKnowledge, budget: float,
             weights: MccWeights | None = None, budget_mode: str = "equality") -> PowerAllocation:
    if policy == "uni":
        return allocate_uni(budget, knowledge.estimated_gains.shape[1])
    if policy == "maxrate":
        return allocate_maxrate(knowledge, budget)
    if policy == "maxmin":
        return allocate_maxmin(knowledge, budget)
    if policy == "mcc":
        return allocate_mcc(knowledge, weights or MccWeights(), budget, budget_mode)
    raise ValueError(f"unknown policy {policy!r}")


def estimated_harvest(knowledge: EnKnowledge, allocation: PowerAllocation,
                      efficiency: float = 1.0, block_length: float = 1.0) -> np.ndarray:
    """Q_hat[k] = eta * T * sum_i P_i * h_hat[k, i]."""
    return efficiency * block_length * (knowledge.estimated_gains @ allocation.powers)


def maxmin_objective(knowledge: EnKnowledge, powers, efficiency=1.0, block_length=1.0) -> float:
    q = efficiency * block_length * (knowledge.estimated_gains @ np.asarray(powers))
    target = maxmin_target(knowledge.classes)
    return float(q[knowledge.classes == target].min())


def mcc_objective(knowledge: EnKnowledge, powers, weights: MccWeights,
                  efficiency=1.0, block_length=1.0) -> float:
    q = efficiency * block_length * (knowledge.estimated_gains @ np.asarray(powers))
    value = 0.0
    if knowledge.low.size:
        value += q[knowledge.low].min()
    if knowledge.moderate.size:
        value += weights.c1 * q[knowledge.moderate].sum()
    if knowledge.high.size:
        value -= weights.c2 * q[knowledge.high].max()
    return float(value)
