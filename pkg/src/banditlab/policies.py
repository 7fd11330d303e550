"""Arm-selection policies behind a common get_arm/update_arm interface.

Arms are 1-indexed (1..K). Rewards are integer Likert ratings on a 1..9
scale. Every policy is a pure function of an explicit ``PolicyState`` plus
the pull history, so sessions can be serialized after each update and
replayed exactly.

Tie-breaking is deterministic (lowest arm index) for UCB, ETC, and the
greedy step of epsilon-greedy; Thompson sampling breaks ties on the sampled
virtual rewards uniformly at random from the step generator.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

LIKERT_MIN = 1
LIKERT_MAX = 9

SELF_SELECTED = "self_selected"
UCB = "ucb"
TS = "ts"
ETC = "etc"
EPS_GREEDY = "eps_greedy"
FIXED_SEQUENCE = "fixed_sequence"

POLICY_KINDS = (SELF_SELECTED, UCB, TS, ETC, EPS_GREEDY, FIXED_SEQUENCE)

DEFAULT_EPSILON = 0.1
DEFAULT_ETC_CONSTANT = 0.5


@dataclass(frozen=True)
class PullEntry:
    t: int
    arm: int
    reward: int


class PullHistory:
    """Ordered pull log with times 1,2,... and per-arm views."""

    def __init__(self, entries: Optional[Iterable[PullEntry]] = None, likert_max: int = LIKERT_MAX):
        self.likert_max = likert_max
        self.entries: list[PullEntry] = []
        for e in entries or ():
            self.append(e.arm, e.reward)

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[int, int, int]], likert_max: int = LIKERT_MAX) -> "PullHistory":
        h = cls(likert_max=likert_max)
        for t, arm, reward in triples:
            if t != len(h.entries) + 1:
                raise ValueError(f"history times must be 1,2,... without gaps, got t={t}")
            h.append(arm, reward)
        return h

    def append(self, arm: int, reward: int) -> PullEntry:
        if arm < 1:
            raise ValueError(f"arm index must be >= 1, got {arm}")
        if not (LIKERT_MIN <= reward <= self.likert_max):
            raise ValueError(f"reward {reward} outside [{LIKERT_MIN}, {self.likert_max}]")
        entry = PullEntry(t=len(self.entries) + 1, arm=arm, reward=reward)
        self.entries.append(entry)
        return entry

    def arm_rewards(self, k: int) -> list[int]:
        return [e.reward for e in self.entries if e.arm == k]

    def pull_count(self, k: int) -> int:
        return sum(1 for e in self.entries if e.arm == k)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True)
class PolicyState:
    """Serializable per-session policy state.

    ``pull_counts``/``reward_sums`` are maintained for every kind (the
    self-selected recorder included); ``dirichlet_params`` only for TS,
    ``epsilon`` only for epsilon-greedy, ``exploration_len`` only for ETC,
    and ``fixed_seq`` only for fixed sequences.
    """

    kind: str
    K: int
    T: int
    pull_counts: tuple[int, ...]
    reward_sums: tuple[int, ...]
    dirichlet_params: Optional[tuple[tuple[float, ...], ...]] = None
    epsilon: Optional[float] = None
    exploration_len: Optional[int] = None
    fixed_seq: Optional[tuple[int, ...]] = None
    rng_seed: int = 0

    @property
    def likert_max(self) -> int:
        if self.dirichlet_params is not None:
            return len(self.dirichlet_params[0])
        return LIKERT_MAX


def etc_exploration_len(T: int, constant: float = DEFAULT_ETC_CONSTANT) -> int:
    """Length of the reward-independent cyclic phase: floor(c * T^(2/3))."""
    return int(math.floor(constant * T ** (2.0 / 3.0)))


def make_policy_state(
    kind: str,
    K: int,
    T: int,
    rng_seed: int,
    *,
    likert_max: int = LIKERT_MAX,
    epsilon: float = DEFAULT_EPSILON,
    etc_constant: float = DEFAULT_ETC_CONSTANT,
    fixed_seq: Optional[Sequence[int]] = None,
) -> PolicyState:
    if kind not in POLICY_KINDS:
        raise ValueError(f"unknown policy kind {kind!r}")
    if K < 2:
        raise ValueError("K must be >= 2")
    if T < 1:
        raise ValueError("T must be >= 1")
    dirichlet = None
    eps = None
    exploration = None
    seq = None
    if kind == TS:
        dirichlet = tuple(tuple(1.0 for _ in range(likert_max)) for _ in range(K))
    elif kind == EPS_GREEDY:
        if not (0.0 < epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        eps = float(epsilon)
    elif kind == ETC:
        exploration = etc_exploration_len(T, etc_constant)
    elif kind == FIXED_SEQUENCE:
        if fixed_seq is None:
            raise ValueError("fixed_seq required for fixed-sequence policies")
        seq = tuple(int(a) for a in fixed_seq)
        if len(seq) != T:
            raise ValueError(f"fixed_seq length {len(seq)} != T={T}")
        if any(a < 1 or a > K for a in seq):
            raise ValueError("fixed_seq entries must lie in [1, K]")
    return PolicyState(
        kind=kind,
        K=K,
        T=T,
        pull_counts=tuple(0 for _ in range(K)),
        reward_sums=tuple(0 for _ in range(K)),
        dirichlet_params=dirichlet,
        epsilon=eps,
        exploration_len=exploration,
        fixed_seq=seq,
        rng_seed=int(rng_seed),
    )


def empirical_mean(history: PullHistory, k: int) -> Optional[float]:
    """Mean reward over pulls of arm k so far; None if k was never pulled."""
    rewards = history.arm_rewards(k)
    if not rewards:
        return None
    return sum(rewards) / len(rewards)


def _greedy_arm(history: PullHistory, K: int, *, require_all: bool = True) -> int:
    best_arm = None
    best_mean = -math.inf
    for k in range(1, K + 1):
        mean = empirical_mean(history, k)
        if mean is None:
            if require_all:
                raise ValueError(f"arm {k} has never been pulled; greedy selection undefined")
            continue
        if mean > best_mean:
            best_mean, best_arm = mean, k
    if best_arm is None:
        raise ValueError("no arm has been pulled; greedy selection undefined")
    return best_arm


def ucb_select(history: PullHistory, t: int, K: int) -> int:
    """Arm t for the forced first K rounds, then the highest mean-plus-bonus arm.

    The bonus for an arm with n pulls at time t is sqrt(2*ln(t)/n); ties go
    to the lowest arm index.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    if t <= K:
        return t
    best_arm = None
    best_index = -math.inf
    for k in range(1, K + 1):
        n = history.pull_count(k)
        if n == 0:
            raise ValueError(f"arm {k} unpulled at t={t}; forced initialization was skipped")
        mean = sum(history.arm_rewards(k)) / n
        index = mean + math.sqrt(2.0 * math.log(t) / n)
        if index > best_index:
            best_index, best_arm = index, k
    return best_arm


def ts_select(state: PolicyState, rng: np.random.Generator) -> tuple[int, tuple[int, ...]]:
    """Sample a virtual reward per arm (Dirichlet then categorical) and take the argmax.

    Returns the selected arm and the per-arm virtual rewards. Ties on the
    virtual rewards are broken uniformly at random from the same generator.
    The state is not modified.
    """
    if state.kind != TS:
        raise ValueError(f"ts_select requires a TS state, got {state.kind!r}")
    levels = state.likert_max
    # Dirichlet draws realized as normalized Gamma draws, batched over arms.
    gammas = rng.standard_gamma(np.asarray(state.dirichlet_params, dtype=float))
    probs = gammas / gammas.sum(axis=1, keepdims=True)
    u = rng.random(state.K)
    picks = (probs.cumsum(axis=1) <= u[:, None]).sum(axis=1)
    virtual = [int(min(p, levels - 1)) + 1 for p in picks]
    best = max(virtual)
    candidates = [k + 1 for k, v in enumerate(virtual) if v == best]
    if len(candidates) == 1:
        arm = candidates[0]
    else:
        arm = candidates[int(rng.integers(len(candidates)))]
    return arm, tuple(virtual)


def ts_update(state: PolicyState, arm: int, reward: int) -> PolicyState:
    """Increment the reward-th Dirichlet parameter of the pulled arm."""
    if state.kind != TS:
        raise ValueError(f"ts_update requires a TS state, got {state.kind!r}")
    if not (1 <= arm <= state.K):
        raise ValueError(f"arm {arm} outside [1, {state.K}]")
    if not (LIKERT_MIN <= reward <= state.likert_max):
        raise ValueError(f"reward {reward} outside [{LIKERT_MIN}, {state.likert_max}]")
    params = [list(p) for p in state.dirichlet_params]
    params[arm - 1][reward - 1] += 1.0
    return dataclasses.replace(state, dirichlet_params=tuple(tuple(p) for p in params))


def etc_select(
    history: PullHistory,
    t: int,
    T: int,
    K: int,
    *,
    constant: float = DEFAULT_ETC_CONSTANT,
    exploration_len: Optional[int] = None,
) -> int:
    """Cyclic arm during the exploration phase, then the empirical-mean argmax.

    Exploration visits ((t-1) mod K) + 1; afterwards the argmax is computed
    over all pulls so far, with ties going to the lowest arm index. Arms
    never pulled are skipped; selection fails only on an empty history.
    """
    if not (1 <= t <= T):
        raise ValueError(f"t={t} outside [1, {T}]")
    n_explore = etc_exploration_len(T, constant) if exploration_len is None else exploration_len
    if t <= n_explore:
        return ((t - 1) % K) + 1
    return _greedy_arm(history, K, require_all=False)


def eps_greedy_select(
    history: PullHistory,
    t: int,
    K: int,
    epsilon: float,
    rng: np.random.Generator,
) -> int:
    """Arm t for the forced first K rounds, then greedy except with prob epsilon uniform."""
    if t < 1:
        raise ValueError("t must be >= 1")
    if not (0.0 < epsilon < 1.0):
        raise ValueError("epsilon must lie in (0, 1)")
    if t <= K:
        return t
    greedy = _greedy_arm(history, K, require_all=True)
    if rng.random() < epsilon:
        return int(rng.integers(1, K + 1))
    return greedy


def cycle_sequence(T: int, K: int) -> list[int]:
    """(1, 2, ..., K) repeated T/K times."""
    if K < 2:
        raise ValueError("K must be >= 2")
    if T % K != 0:
        raise ValueError(f"T={T} is not divisible by K={K}")
    return list(range(1, K + 1)) * (T // K)


def repeat_sequence(T: int, K: int, block_order: Optional[Sequence[int]] = None) -> list[int]:
    """Each arm repeated T/K times in one solid block, default block order (2, 1, 3, ..., K)."""
    if K < 2:
        raise ValueError("K must be >= 2")
    if T % K != 0:
        raise ValueError(f"T={T} is not divisible by K={K}")
    if block_order is None:
        block_order = [2, 1] + list(range(3, K + 1))
    order = [int(a) for a in block_order]
    if sorted(order) != list(range(1, K + 1)):
        raise ValueError(f"block_order {order} is not a permutation of 1..{K}")
    m = T // K
    seq: list[int] = []
    for arm in order:
        seq.extend([arm] * m)
    return seq


def get_arm(
    state: PolicyState,
    history: PullHistory,
    t: int,
    rng: Optional[np.random.Generator] = None,
) -> int:
    """Dispatch selection to the policy for step t (1-based)."""
    if not (1 <= t <= state.T):
        raise ValueError(f"t={t} outside [1, {state.T}]")
    if state.kind == SELF_SELECTED:
        raise ValueError("self-selected sessions choose arms externally; get_arm has no policy to run")
    if state.kind == UCB:
        return ucb_select(history, t, state.K)
    if state.kind == TS:
        if rng is None:
            raise ValueError("TS selection needs a generator")
        return ts_select(state, rng)[0]
    if state.kind == ETC:
        return etc_select(history, t, state.T, state.K, exploration_len=state.exploration_len)
    if state.kind == EPS_GREEDY:
        if rng is None:
            raise ValueError("epsilon-greedy selection needs a generator")
        return eps_greedy_select(history, t, state.K, state.epsilon, rng)
    if state.kind == FIXED_SEQUENCE:
        return state.fixed_seq[t - 1]
    raise ValueError(f"unknown policy kind {state.kind!r}")


def update_arm(state: PolicyState, t: int, arm: int, reward: int) -> PolicyState:
    """Fold one observed (arm, reward) into the state; returns a new state."""
    if not (1 <= t <= state.T):
        raise ValueError(f"t={t} outside [1, {state.T}]")
    if not (1 <= arm <= state.K):
        raise ValueError(f"arm {arm} outside [1, {state.K}]")
    if not (LIKERT_MIN <= reward <= state.likert_max):
        raise ValueError(f"reward {reward} outside [{LIKERT_MIN}, {state.likert_max}]")
    counts = list(state.pull_counts)
    sums = list(state.reward_sums)
    counts[arm - 1] += 1
    sums[arm - 1] += reward
    new = dataclasses.replace(state, pull_counts=tuple(counts), reward_sums=tuple(sums))
    if state.kind == TS:
        new = ts_update(new, arm, reward)
    return new


def state_to_dict(state: PolicyState) -> dict:
    return {
        "kind": state.kind,
        "K": state.K,
        "T": state.T,
        "pull_counts": list(state.pull_counts),
        "reward_sums": list(state.reward_sums),
        "dirichlet_params": None if state.dirichlet_params is None else [list(p) for p in state.dirichlet_params],
        "epsilon": state.epsilon,
        "exploration_len": state.exploration_len,
        "fixed_seq": None if state.fixed_seq is None else list(state.fixed_seq),
        "rng_seed": state.rng_seed,
    }


def state_from_dict(doc: dict) -> PolicyState:
    return PolicyState(
        kind=doc["kind"],
        K=doc["K"],
        T=doc["T"],
        pull_counts=tuple(doc["pull_counts"]),
        reward_sums=tuple(doc["reward_sums"]),
        dirichlet_params=None
        if doc.get("dirichlet_params") is None
        else tuple(tuple(p) for p in doc["dirichlet_params"]),
        epsilon=doc.get("epsilon"),
        exploration_len=doc.get("exploration_len"),
        fixed_seq=None if doc.get("fixed_seq") is None else tuple(doc["fixed_seq"]),
        rng_seed=doc.get("rng_seed", 0),
    )


def state_to_json(state: PolicyState) -> str:
    return json.dumps(state_to_dict(state))


def state_from_json(text: str) -> PolicyState:
    return state_from_dict(json.loads(text))
