"""The cumulative offer mechanism and exhaustive stability verification.

The mechanism runs in rounds: an agent no branch currently holds proposes
her favorite contract among those not yet rejected; the target branch adds
it to its accumulated pool and re-chooses from the whole pool.  Pools only
grow, and a contract that drops out of a branch's chosen set counts as
rejected.  The outcome is the union of every branch's choice from its final
pool.

Stability is verified by brute force: individual rationality plus an
exhaustive search over candidate blocking sets, feasible per branch.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping

from .choice import ChoiceResult, sspwct_choose
from .model import AgentId, BranchId, ContractId, Instance, Outcome, outcome_violations

POLICY_LEX = "lex"
POLICY_RANDOM = "random"

#: Candidate blocking sets are enumerated over each branch's contract
#: universe; refuse branches larger than this.
DEFAULT_BLOCKING_BOUND = 14


class InstanceTooLarge(ValueError):
    """An exhaustive search was asked to run past its configured bound."""


@dataclass(frozen=True)
class ComStep:
    t: int
    agent: AgentId
    contract: ContractId
    verdict: str  # "held" or "rejected"
    pools: Mapping[BranchId, frozenset]

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "agent": self.agent,
            "contract": self.contract,
            "verdict": self.verdict,
            "pools": {b: sorted(pool) for b, pool in self.pools.items()},
        }


@dataclass(frozen=True)
class ComTrace:
    steps: tuple[ComStep, ...]
    outcome: Outcome

    def to_json(self) -> dict:
        return {
            "steps": [s.to_json() for s in self.steps],
            "outcome": sorted(self.outcome),
        }


def branch_choice(inst: Instance, branch: BranchId, pool: Iterable[ContractId]) -> ChoiceResult:
    return sspwct_choose(inst.branches[branch], pool, inst.contract_index)


def cumulative_offer(inst: Instance, policy: str = POLICY_LEX, seed: int = 0) -> ComTrace:
    """Run the cumulative offer process and return the full trace.

    ``policy`` picks the proposer among eligible agents each round:
    ``"lex"`` takes the smallest agent id (the canonical, deterministic
    default), ``"random"`` draws uniformly with the given seed.  The outcome
    is policy-independent; the random policy exists to test exactly that.
    """
    if policy not in (POLICY_LEX, POLICY_RANDOM):
        raise ValueError(f"unknown proposal policy {policy!r}")
    rng = random.Random(seed)

    pools: dict[BranchId, set[ContractId]] = {b: set() for b in inst.branches}
    current: dict[BranchId, frozenset] = {b: frozenset() for b in inst.branches}
    rejected: set[ContractId] = set()
    steps: list[ComStep] = []

    t = 0
    while True:
        held_agents = {
            inst.contract_index[cid].agent for ch in current.values() for cid in ch
        }
        eligible: list[tuple[AgentId, ContractId]] = []
        for agent in inst.agents:
            if agent in held_agents:
                continue
            favorite = next(
                (cid for cid in inst.preferences.get(agent, ()) if cid not in rejected),
                None,
            )
            if favorite is not None:
                eligible.append((agent, favorite))
        if not eligible:
            break

        agent, cid = eligible[0] if policy == POLICY_LEX else rng.choice(eligible)
        t += 1
        branch = inst.contract_index[cid].branch
        pools[branch].add(cid)
        result = branch_choice(inst, branch, pools[branch])
        current[branch] = result.chosen
        rejected |= pools[branch] - result.chosen
        verdict = "held" if cid in result.chosen else "rejected"
        steps.append(
            ComStep(t, agent, cid, verdict, {b: frozenset(p) for b, p in pools.items()})
        )

    outcome = frozenset().union(*current.values()) if current else frozenset()
    return ComTrace(tuple(steps), outcome)


def assigned_contract(inst: Instance, outcome: Outcome, agent: AgentId) -> ContractId | None:
    for cid in outcome:
        if inst.contract_index[cid].agent == agent:
            return cid
    return None


def _branch_part(inst: Instance, outcome: Outcome, branch: BranchId) -> frozenset:
    return frozenset(c for c in outcome if inst.contract_index[c].branch == branch)


def is_individually_rational(inst: Instance, outcome: Outcome) -> bool:
    """Every signed contract is acceptable to its agent, and every branch
    would re-choose exactly its assigned set."""
    for cid in outcome:
        if not inst.acceptable(inst.contract_index[cid].agent, cid):
            return False
    for branch in inst.branches:
        part = _branch_part(inst, outcome, branch)
        if branch_choice(inst, branch, part).chosen != part:
            return False
    return True


def find_blocking_set(
    inst: Instance, outcome: Outcome, bound: int = DEFAULT_BLOCKING_BOUND
) -> tuple[BranchId, frozenset] | None:
    """Exhaustively search for a branch and contract set blocking ``outcome``.

    A set Y of contracts at branch b blocks if Y differs from what b holds,
    b would choose exactly Y from outcome + Y, and every agent in Y finds her
    Y-contract the best among her contracts in outcome + Y.  Enumeration is
    deterministic (branches by id, candidates by size then lexicographically),
    restricted to feasible sets, and pruned to contracts each agent weakly
    prefers to her current assignment (any other Y fails the agent-side
    condition outright).
    """
    for branch in inst.branches:
        universe = inst.contracts_of_branch.get(branch, ())
        if len(universe) > bound:
            raise InstanceTooLarge(
                f"branch {branch} has {len(universe)} contracts; blocking "
                f"enumeration is capped at {bound}"
            )
        cfg = inst.branches[branch]
        out_b = _branch_part(inst, outcome, branch)
        base = branch_choice(inst, branch, out_b).chosen

        current_of = {
            inst.contract_index[c].agent: c for c in outcome
        }
        candidates = []
        for cid in universe:
            agent = inst.contract_index[cid].agent
            now = current_of.get(agent)
            if cid == now or inst.prefers(agent, cid, now):
                candidates.append(cid)

        for size in range(1, cfg.n + 1):
            for combo in combinations(candidates, size):
                agents = [inst.contract_index[c].agent for c in combo]
                if len(set(agents)) != len(agents):
                    continue
                y = frozenset(combo)
                if y == base:
                    continue
                pool = out_b | y
                if branch_choice(inst, branch, pool).chosen != y:
                    continue
                if all(
                    _best_in(inst, agent, outcome | y) == ycid
                    for ycid, agent in zip(combo, agents)
                ):
                    return branch, y
    return None


def _best_in(inst: Instance, agent: AgentId, contracts: Iterable[ContractId]) -> ContractId | None:
    """The agent's most preferred *acceptable* contract among her own."""
    best: ContractId | None = None
    for cid in contracts:
        if inst.contract_index[cid].agent != agent or not inst.acceptable(agent, cid):
            continue
        if best is None or inst.prefers(agent, cid, best):
            best = cid
    return best


def is_stable(inst: Instance, outcome: Outcome, bound: int = DEFAULT_BLOCKING_BOUND) -> bool:
    if outcome_violations(inst, outcome):
        return False
    if not is_individually_rational(inst, outcome):
        return False
    return find_blocking_set(inst, outcome, bound) is None
