"""Executable verification of the theory behind the choice rules and the
mechanism: completion agreement, substitutability, irrelevance of rejected
contracts, law of aggregate demand, strategy-proofness, respect for
improvements, and proposal-order independence.

Each check is exhaustive within an explicit bound or randomized with an
explicit seed, and returns a :class:`PropertyVerdict`.  A fail verdict
always carries a witness payload that can be replayed through the public
API to reproduce the violation.

The checks that take a ``rule`` accept any callable with the signature of
``completion_choose``; tests exploit this to confirm that each oracle
actually fires on deliberately corrupted rules.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from itertools import combinations, permutations
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from .choice import ChoiceResult, completion_choose, sspwct_choose
from .mechanism import (
    InstanceTooLarge,
    assigned_contract,
    cumulative_offer,
    find_blocking_set,
    is_individually_rational,
)
from .model import (
    ORIGINAL,
    AgentId,
    BranchConfig,
    BranchId,
    Contract,
    ContractId,
    Instance,
    outcome_violations,
    parse_instance,
    serialize_instance,
)

ChoiceRule = Callable[[BranchConfig, Iterable[ContractId], Mapping[ContractId, Contract]], ChoiceResult]

COMPLETION_BOUND = 8
EXHAUSTIVE_BOUND = 7
MISREPORT_BOUND = 4


@dataclass(frozen=True)
class PropertyVerdict:
    name: str
    status: str  # "pass" or "fail"
    witness: Mapping | None
    instances_checked: int

    @property
    def ok(self) -> bool:
        return self.status == "pass"

    def to_json(self) -> dict:
        return {
            "property": self.name,
            "status": self.status,
            "witness": dict(self.witness) if self.witness is not None else None,
            "instances_checked": self.instances_checked,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "PropertyVerdict":
        return cls(doc["property"], doc["status"], doc["witness"], doc["instances_checked"])


def _passed(name: str, checked: int) -> PropertyVerdict:
    return PropertyVerdict(name, "pass", None, checked)


def _failed(name: str, checked: int, witness: Mapping) -> PropertyVerdict:
    return PropertyVerdict(name, "fail", witness, checked)


def merge_verdicts(name: str, verdicts: Sequence[PropertyVerdict]) -> PropertyVerdict:
    checked = sum(v.instances_checked for v in verdicts)
    for v in verdicts:
        if not v.ok:
            return _failed(name, checked, v.witness or {})
    return _passed(name, checked)


def _branch_universe(inst: Instance, branch: BranchId, bound: int, what: str) -> tuple[ContractId, ...]:
    universe = inst.contracts_of_branch.get(branch, ())
    if len(universe) > bound:
        raise InstanceTooLarge(
            f"branch {branch} has {len(universe)} contracts; {what} is exhaustive "
            f"and capped at {bound}"
        )
    return universe


def _all_subsets(universe: Sequence[ContractId]) -> Iterator[frozenset]:
    for size in range(len(universe) + 1):
        for combo in combinations(universe, size):
            yield frozenset(combo)


def _chosen_table(
    inst: Instance, branch: BranchId, universe: Sequence[ContractId], rule: ChoiceRule
) -> dict[frozenset, frozenset]:
    cfg = inst.branches[branch]
    return {
        offers: rule(cfg, offers, inst.contract_index).chosen
        for offers in _all_subsets(universe)
    }


# -- choice-rule properties --


def check_completion(
    inst: Instance,
    branch: BranchId,
    bound: int = COMPLETION_BOUND,
    rule: ChoiceRule = sspwct_choose,
    completion_rule: ChoiceRule = completion_choose,
) -> PropertyVerdict:
    """For every offer set, the completion either agrees with the base rule
    or holds two contracts of one agent."""
    universe = _branch_universe(inst, branch, bound, "the completion check")
    cfg = inst.branches[branch]
    checked = 0
    for offers in _all_subsets(universe):
        checked += 1
        base = rule(cfg, offers, inst.contract_index).chosen
        comp = completion_rule(cfg, offers, inst.contract_index).chosen
        if comp == base:
            continue
        agents = [inst.contract_index[c].agent for c in comp]
        if len(set(agents)) < len(agents):
            continue
        return _failed(
            "completion",
            checked,
            {
                "branch": branch,
                "offers": sorted(offers),
                "chosen": sorted(base),
                "completion": sorted(comp),
            },
        )
    return _passed("completion", checked)


def check_substitutability(
    inst: Instance,
    branch: BranchId,
    bound: int = EXHAUSTIVE_BOUND,
    rule: ChoiceRule = completion_choose,
) -> PropertyVerdict:
    """Once rejected, always rejected: z out of C(Y + z) implies z out of
    C(Y + z + z'), for every Y, z, z'."""
    universe = _branch_universe(inst, branch, bound, "the substitutability check")
    table = _chosen_table(inst, branch, universe, rule)
    checked = 0
    for offers, chosen in table.items():
        for z in offers - chosen:
            for z2 in universe:
                if z2 in offers:
                    continue
                checked += 1
                if z in table[offers | {z2}]:
                    return _failed(
                        "substitutability",
                        checked,
                        {
                            "branch": branch,
                            "base_offers": sorted(offers),
                            "rejected": z,
                            "added": z2,
                            "chosen_after": sorted(table[offers | {z2}]),
                        },
                    )
    return _passed("substitutability", checked)


def check_irc(
    inst: Instance,
    branch: BranchId,
    bound: int = EXHAUSTIVE_BOUND,
    rule: ChoiceRule = completion_choose,
) -> PropertyVerdict:
    """Dropping a rejected contract never changes the chosen set."""
    universe = _branch_universe(inst, branch, bound, "the IRC check")
    table = _chosen_table(inst, branch, universe, rule)
    checked = 0
    for offers, chosen in table.items():
        for x in offers - chosen:
            checked += 1
            if table[offers - {x}] != chosen:
                return _failed(
                    "irc",
                    checked,
                    {
                        "branch": branch,
                        "offers": sorted(offers),
                        "removed": x,
                        "chosen": sorted(chosen),
                        "chosen_without": sorted(table[offers - {x}]),
                    },
                )
    return _passed("irc", checked)


def check_lad(
    inst: Instance,
    branch: BranchId,
    bound: int = EXHAUSTIVE_BOUND,
    rule: ChoiceRule = completion_choose,
) -> PropertyVerdict:
    """Law of aggregate demand over one-element extensions, which implies
    the general nested-pair statement by induction."""
    universe = _branch_universe(inst, branch, bound, "the LAD check")
    table = _chosen_table(inst, branch, universe, rule)
    checked = 0
    for offers, chosen in table.items():
        for x in offers:
            checked += 1
            if len(table[offers - {x}]) > len(chosen):
                return _failed(
                    "lad",
                    checked,
                    {
                        "branch": branch,
                        "offers": sorted(offers),
                        "removed": x,
                        "smaller_set_chose": sorted(table[offers - {x}]),
                        "larger_set_chose": sorted(chosen),
                    },
                )
    return _passed("lad", checked)


# -- reduction to plain slot-specific priorities --


def slot_specific_reference(
    cfg: BranchConfig,
    offers: Iterable[ContractId],
    contracts: Mapping[ContractId, Contract],
) -> frozenset:
    """Independently coded slot-specific priorities rule: original seats
    only, in precedence order, each taking its best remaining contract and
    knocking out the chosen agent's other contracts.  Kept deliberately
    separate from the main implementation so the all-zero-transfer reduction
    has a second opinion."""
    offer_set = frozenset(offers)
    chosen: list[ContractId] = []
    taken_agents: set[str] = set()
    for ranking in cfg.original_priorities:
        for cid in ranking:
            if cid in offer_set and contracts[cid].agent not in taken_agents:
                chosen.append(cid)
                taken_agents.add(contracts[cid].agent)
                break
    return frozenset(chosen)


def check_slot_specific_reduction(
    inst: Instance, branch: BranchId, bound: int = EXHAUSTIVE_BOUND
) -> PropertyVerdict:
    """With every transfer bit forced to zero the full rule must coincide
    with the reference slot-specific rule on every offer set."""
    universe = _branch_universe(inst, branch, bound, "the reduction check")
    cfg = inst.branches[branch]
    zeroed = BranchConfig(
        cfg.id,
        cfg.n,
        cfg.location,
        (0,) * cfg.n,
        cfg.original_priorities,
        cfg.shadow_priorities,
    )
    checked = 0
    for offers in _all_subsets(universe):
        checked += 1
        ours = sspwct_choose(zeroed, offers, inst.contract_index).chosen
        reference = slot_specific_reference(zeroed, offers, inst.contract_index)
        if ours != reference:
            return _failed(
                "slot-specific-reduction",
                checked,
                {
                    "branch": branch,
                    "offers": sorted(offers),
                    "sspwct": sorted(ours),
                    "reference": sorted(reference),
                },
            )
    return _passed("slot-specific-reduction", checked)


# -- strategy-proofness --


def misreports(universe: Sequence[ContractId]) -> Iterator[tuple[ContractId, ...]]:
    """All strict rankings of all subsets of the given contracts, including
    the empty report."""
    for size in range(len(universe) + 1):
        for combo in combinations(universe, size):
            yield from permutations(combo)


def check_strategy_proofness(inst: Instance, limit: int = MISREPORT_BOUND) -> PropertyVerdict:
    """No agent can obtain a strictly better contract (by her true ranking)
    by reporting any alternative ranking of any subset of her contracts."""
    for agent in inst.agents:
        if len(inst.contracts_of_agent.get(agent, ())) > limit:
            raise InstanceTooLarge(
                f"agent {agent} has more than {limit} contracts; misreport "
                f"enumeration is exhaustive and capped"
            )
    truthful = cumulative_offer(inst).outcome
    checked = 0
    for agent in inst.agents:
        truth_cid = assigned_contract(inst, truthful, agent)
        for report in misreports(inst.contracts_of_agent.get(agent, ())):
            if report == inst.preferences.get(agent, ()):
                continue
            checked += 1
            deviated = cumulative_offer(inst.with_preference(agent, report)).outcome
            got = assigned_contract(inst, deviated, agent)
            if inst.prefers(agent, got, truth_cid):
                return _failed(
                    "strategy-proofness",
                    checked,
                    {
                        "agent": agent,
                        "misreport": list(report),
                        "truthful_assignment": truth_cid,
                        "deviation_assignment": got,
                    },
                )
    return _passed("strategy-proofness", checked)


# -- priority improvements --


def _others_sequence(ranking: Sequence[ContractId], agent: AgentId, inst: Instance) -> list[ContractId]:
    return [cid for cid in ranking if inst.contract_index[cid].agent != agent]


def is_priority_improvement(base: Instance, improved: Instance, agent: AgentId) -> bool:
    """Pairwise check of the two improvement conditions on every slot:
    the agent's contracts only gain priority (and stay acceptable), while
    other agents' contracts keep their relative order and acceptability."""
    if set(base.branches) != set(improved.branches):
        return False
    for b, cfg in base.branches.items():
        new_cfg = improved.branches[b]
        if (cfg.n, cfg.location, cfg.transfer) != (new_cfg.n, new_cfg.location, new_cfg.transfer):
            return False
        for slot in cfg.slots():
            old = cfg.priority(slot)
            new = new_cfg.priority(slot)
            if _others_sequence(old, agent, base) != _others_sequence(new, agent, base):
                return False
            for pos, cid in enumerate(old):
                if base.contract_index[cid].agent != agent:
                    continue
                if cid not in new:
                    return False
                others_above_old = sum(
                    1 for c in old[:pos] if base.contract_index[c].agent != agent
                )
                others_above_new = sum(
                    1
                    for c in new[: new.index(cid)]
                    if base.contract_index[c].agent != agent
                )
                if others_above_new > others_above_old:
                    return False
    return True


def generate_improvement(
    inst: Instance, agent: AgentId, seed: int = 0, moves: int | None = None
) -> Instance:
    """Randomly promote the agent's contracts in slot priority orders.

    Applies between one and three single-contract promotions (each either
    moves a listed contract strictly up or inserts an unlisted one), which
    composes to an arbitrary improvement.  Returns the instance unchanged
    when the agent already tops every ranking it could appear in.
    """
    rng = random.Random(seed)
    if moves is None:
        moves = rng.randint(1, 3)
    current = inst
    for _ in range(moves):
        options = []
        for b, cfg in current.branches.items():
            mine = [
                cid
                for cid in current.contracts_of_agent.get(agent, ())
                if current.contract_index[cid].branch == b
            ]
            if not mine:
                continue
            for slot in cfg.slots():
                ranking = cfg.priority(slot)
                for cid in mine:
                    if cid in ranking:
                        pos = ranking.index(cid)
                        if pos > 0:
                            options.append((b, slot, cid, "raise"))
                    else:
                        options.append((b, slot, cid, "insert"))
        if not options:
            break
        b, slot, cid, kind = rng.choice(options)
        cfg = current.branches[b]
        ranking = list(cfg.priority(slot))
        if kind == "raise":
            pos = ranking.index(cid)
            ranking.remove(cid)
            ranking.insert(rng.randrange(0, pos), cid)
        else:
            ranking.insert(rng.randint(0, len(ranking)), cid)
        rows = list(cfg.original_priorities if slot.kind == ORIGINAL else cfg.shadow_priorities)
        rows[slot.index - 1] = tuple(ranking)
        if slot.kind == ORIGINAL:
            new_cfg = BranchConfig(
                cfg.id, cfg.n, cfg.location, cfg.transfer, tuple(rows), cfg.shadow_priorities
            )
        else:
            new_cfg = BranchConfig(
                cfg.id, cfg.n, cfg.location, cfg.transfer, cfg.original_priorities, tuple(rows)
            )
        current = current.with_branch(new_cfg)
    return current


def check_respects_improvements(
    inst: Instance, agent: AgentId, trials: int = 20, seed: int = 0
) -> PropertyVerdict:
    """Raising the agent's priorities never makes her worse off under the
    mechanism, for ``trials`` randomly generated improvements."""
    base_outcome = cumulative_offer(inst).outcome
    base_cid = assigned_contract(inst, base_outcome, agent)
    checked = 0
    for trial in range(trials):
        improved = generate_improvement(inst, agent, seed=seed + trial)
        if not is_priority_improvement(inst, improved, agent):
            raise RuntimeError(
                f"generated priority change for {agent} fails the improvement conditions"
            )
        checked += 1
        new_cid = assigned_contract(inst, cumulative_offer(improved).outcome, agent)
        if inst.prefers(agent, base_cid, new_cid):
            return _failed(
                "respects-improvements",
                checked,
                {
                    "agent": agent,
                    "seed": seed + trial,
                    "baseline_assignment": base_cid,
                    "improved_assignment": new_cid,
                },
            )
    return _passed("respects-improvements", checked)


# -- stability of the mechanism's outcome --


def check_stability(inst: Instance, bound: int = 14) -> PropertyVerdict:
    """The mechanism's outcome is feasible, individually rational, and
    survives the exhaustive blocking-set search."""
    outcome = cumulative_offer(inst).outcome
    problems = outcome_violations(inst, outcome)
    if problems:
        return _failed("stability", 1, {"outcome": sorted(outcome), "violations": problems})
    if not is_individually_rational(inst, outcome):
        return _failed(
            "stability", 1, {"outcome": sorted(outcome), "violations": ["not individually rational"]}
        )
    block = find_blocking_set(inst, outcome, bound)
    if block is not None:
        branch, contracts = block
        return _failed(
            "stability",
            1,
            {"outcome": sorted(outcome), "blocking_branch": branch, "blocking_set": sorted(contracts)},
        )
    return _passed("stability", 1)


# -- order independence --


def check_order_independence(inst: Instance, seeds: Sequence[int]) -> PropertyVerdict:
    """The outcome must not depend on who proposes when: the lexicographic
    policy and every seeded random policy must produce the same set."""
    reference = cumulative_offer(inst, policy="lex").outcome
    checked = 0
    for seed in seeds:
        checked += 1
        other = cumulative_offer(inst, policy="random", seed=seed).outcome
        if other != reference:
            return _failed(
                "order-independence",
                checked,
                {
                    "seed": seed,
                    "lexicographic_outcome": sorted(reference),
                    "random_outcome": sorted(other),
                },
            )
    return _passed("order-independence", checked)


# -- suite runner --

ALL_SUITES = (
    "completion",
    "substitutability",
    "irc",
    "lad",
    "reduction",
    "stability",
    "strategy-proofness",
    "improvements",
    "order-independence",
)


def run_suite_on_instance(
    inst: Instance,
    suites: Sequence[str],
    trials: int = 20,
    seed: int = 0,
    bound: int = COMPLETION_BOUND,
) -> list[PropertyVerdict]:
    """All requested checks on one instance (config checks run per branch)."""
    verdicts: list[PropertyVerdict] = []
    for suite in suites:
        if suite == "completion":
            verdicts += [check_completion(inst, b, bound) for b in inst.branches]
        elif suite == "substitutability":
            verdicts += [check_substitutability(inst, b, bound) for b in inst.branches]
        elif suite == "irc":
            verdicts += [check_irc(inst, b, bound) for b in inst.branches]
        elif suite == "lad":
            verdicts += [check_lad(inst, b, bound) for b in inst.branches]
        elif suite == "reduction":
            verdicts += [check_slot_specific_reduction(inst, b, bound) for b in inst.branches]
        elif suite == "stability":
            verdicts.append(check_stability(inst))
        elif suite == "strategy-proofness":
            verdicts.append(check_strategy_proofness(inst))
        elif suite == "improvements":
            per_agent = max(1, trials // max(1, len(inst.agents)))
            verdicts += [
                check_respects_improvements(inst, agent, per_agent, seed)
                for agent in inst.agents
            ]
        elif suite == "order-independence":
            verdicts.append(
                check_order_independence(inst, list(range(seed + 1, seed + 1 + trials)))
            )
        else:
            raise ValueError(f"unknown suite {suite!r}; expected one of {ALL_SUITES}")
    return verdicts


def _suite_worker(payload: tuple[str, tuple[str, ...], int, int, int]) -> list[dict]:
    text, suites, trials, seed, bound = payload
    inst = parse_instance(text)
    return [v.to_json() for v in run_suite_on_instance(inst, suites, trials, seed, bound)]


def run_suite(
    instances: Sequence[Instance],
    suites: Sequence[str],
    trials: int = 20,
    seed: int = 0,
    bound: int = COMPLETION_BOUND,
    jobs: int = 1,
) -> list[PropertyVerdict]:
    """Run the requested suites over a batch, merging verdicts per property.

    With ``jobs > 1`` the per-instance work fans out to a process pool;
    every check is a pure function of an immutable instance, so only the
    instance text crosses the process boundary.
    """
    requested = list(ALL_SUITES) if "all" in suites else list(suites)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        payloads = [
            (serialize_instance(inst), tuple(requested), trials, seed, bound)
            for inst in instances
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            batches = [
                [PropertyVerdict.from_json(doc) for doc in result]
                for result in pool.map(_suite_worker, payloads)
            ]
    else:
        batches = [
            run_suite_on_instance(inst, requested, trials, seed, bound)
            for inst in instances
        ]
    by_name: dict[str, list[PropertyVerdict]] = {}
    for batch in batches:
        for verdict in batch:
            by_name.setdefault(verdict.name, []).append(verdict)
    return [merge_verdicts(name, vs) for name, vs in by_name.items()]
