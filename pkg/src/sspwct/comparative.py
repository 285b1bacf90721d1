"""Comparative statics: how the mechanism's outcome responds to relaxing a
transfer restriction, adding an original seat, or adding contracts.

Every experiment builds a modified instance, runs the mechanism on both, and
compares each agent's assignment under her own ranking.  The verdict only
reflects the agents the comparative claim protects; anyone else's loss is
recorded but is not a violation.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .mechanism import assigned_contract, cumulative_offer
from .model import (
    ORIGINAL,
    SHADOW,
    AgentId,
    BranchConfig,
    BranchId,
    Contract,
    ContractId,
    Instance,
    Outcome,
    SlotId,
    validate_instance,
)
from .choice import sspwct_choose

STRICTLY_BETTER = "strictly_better"
EQUAL = "equal"
STRICTLY_WORSE = "strictly_worse"

PARETO_DOMINATES = "pareto-dominates"
WEAKLY_IMPROVES_FOR = "weakly-improves-for"
VIOLATES = "violates"

MODE_BOTTOM = "bottom"
MODE_SINGLE_AGENT = "single-agent-anywhere"


class AlreadyFlexible(ValueError):
    """The transfer bit to flip is already 1."""


class PreconditionUnmet(ValueError):
    """The improvement chain only runs when the flipped bit actually puts a
    contract on the activated shadow seat."""


class ConditionViolation(ValueError):
    """A contract addition breaks the relative-order preservation rules."""


class ImprovementChainError(RuntimeError):
    """Chain reconstruction disagrees with the slot assignments; raised
    instead of guessing."""


@dataclass(frozen=True)
class ComparisonReport:
    baseline: Outcome
    modified: Outcome
    per_agent: Mapping[AgentId, str]
    protected: frozenset
    verdict: str

    @property
    def strict_improvers(self) -> tuple[AgentId, ...]:
        return tuple(a for a, s in sorted(self.per_agent.items()) if s == STRICTLY_BETTER)

    def to_json(self) -> dict:
        return {
            "baseline": sorted(self.baseline),
            "modified": sorted(self.modified),
            "per_agent": dict(sorted(self.per_agent.items())),
            "protected": sorted(self.protected),
            "verdict": self.verdict,
        }


def compare_outcomes(
    base_inst: Instance,
    mod_inst: Instance,
    protected: frozenset | None = None,
) -> ComparisonReport:
    """Run the mechanism on both instances and compare per agent.

    Comparison uses the modified instance's rankings (a superset of the
    baseline rankings in every experiment here, so baseline contracts keep
    their relative order).  ``protected`` defaults to every agent.
    """
    baseline = cumulative_offer(base_inst).outcome
    modified = cumulative_offer(mod_inst).outcome
    agents = sorted(set(base_inst.agents) | set(mod_inst.agents))
    if protected is None:
        protected = frozenset(agents)
    per_agent: dict[AgentId, str] = {}
    for agent in agents:
        before = assigned_contract(base_inst, baseline, agent)
        after = assigned_contract(mod_inst, modified, agent)
        if mod_inst.prefers(agent, after, before):
            per_agent[agent] = STRICTLY_BETTER
        elif mod_inst.prefers(agent, before, after):
            per_agent[agent] = STRICTLY_WORSE
        else:
            per_agent[agent] = EQUAL
    if any(per_agent[a] == STRICTLY_WORSE for a in protected):
        verdict = VIOLATES
    elif protected == frozenset(agents):
        verdict = PARETO_DOMINATES
    else:
        verdict = WEAKLY_IMPROVES_FOR
    return ComparisonReport(baseline, modified, per_agent, protected, verdict)


# -- transfer flexibility (one bit 0 -> 1) --


def flip_transfer(inst: Instance, branch: BranchId, k: int) -> Instance:
    cfg = inst.branches[branch]
    if not 1 <= k <= cfg.n:
        raise ValueError(f"slot index {k} out of range for branch {branch} (n={cfg.n})")
    if cfg.transfer[k - 1] == 1:
        raise AlreadyFlexible(f"transfer bit {k} of branch {branch} is already 1")
    return inst.with_transfer_bit(branch, k, 1)


def flexibility_compare(inst: Instance, branch: BranchId, k: int) -> ComparisonReport:
    """Relax one transfer restriction and compare outcomes.  The modified
    outcome weakly Pareto dominates the baseline."""
    return compare_outcomes(inst, flip_transfer(inst, branch, k))


def _slot_assignments(inst: Instance, pools: Mapping[BranchId, frozenset]) -> dict[SlotId, ContractId]:
    """Per-seat view of the outcome, read off each branch's choice from its
    final accumulated pool."""
    placed: dict[SlotId, ContractId] = {}
    for b, pool in pools.items():
        result = sspwct_choose(inst.branches[b], pool, inst.contract_index)
        for slot, fill in result.per_slot.items():
            if fill.contract is not None:
                placed[slot] = fill.contract
    return placed


def improvement_chain(inst: Instance, baseline: Outcome, branch: BranchId, k: int) -> Outcome:
    """Reconstruct the modified outcome by walking the chain of reassignments
    that activating shadow seat k sets off.

    The newly active shadow seat takes some contract x1.  If x1's agent was
    unmatched before, the chain ends; otherwise she vacates her old seat,
    which (or whose shadow) picks up the next contract, and so on until the
    chain reaches an agent who previously held nothing.  Every step strictly
    improves one agent, so the walk terminates.

    Seat assignments are read from each run's final accumulated pools.
    Raises :class:`PreconditionUnmet` when the activated shadow stays empty,
    and :class:`ImprovementChainError` instead of guessing when the walk
    cannot be completed from the recorded assignments.
    """
    base_trace = cumulative_offer(inst)
    if base_trace.outcome != frozenset(baseline):
        raise PreconditionUnmet("baseline outcome does not match the mechanism's output")
    mod_inst = flip_transfer(inst, branch, k)
    mod_trace = cumulative_offer(mod_inst)

    base_pools = base_trace.steps[-1].pools if base_trace.steps else {b: frozenset() for b in inst.branches}
    mod_pools = mod_trace.steps[-1].pools if mod_trace.steps else {b: frozenset() for b in mod_inst.branches}
    base_slot_of = {cid: slot for slot, cid in _slot_assignments(inst, base_pools).items()}
    mod_fill = _slot_assignments(mod_inst, mod_pools)

    activated = SlotId(branch, SHADOW, k)
    x = mod_fill.get(activated)
    if x is None:
        raise PreconditionUnmet(
            f"shadow seat {activated} stays vacant after the transfer flip"
        )

    added: list[ContractId] = []
    removed: list[ContractId] = []
    read: set[SlotId] = {activated}
    while True:
        added.append(x)
        agent = inst.contract_index[x].agent
        z = assigned_contract(inst, baseline, agent)
        if z is None:
            break
        removed.append(z)
        vacated = base_slot_of.get(z)
        if vacated is None:
            raise ImprovementChainError(
                f"cannot locate the seat displaced contract {z} held"
            )
        # the vacated seat's replacement is whatever now sits there, or on
        # its paired shadow; a seat the chain already consumed means the
        # chain has closed on itself and no further agent is pulled in
        candidates = [vacated]
        if vacated.kind == ORIGINAL:
            candidates.append(SlotId(vacated.branch, SHADOW, vacated.index))
        x_next: ContractId | None = None
        for slot in candidates:
            if slot in read:
                continue
            fill = mod_fill.get(slot)
            if fill is not None:
                read.add(slot)
                x_next = fill
                break
        if x_next is None:
            break
        x = x_next

    return (frozenset(baseline) - frozenset(removed)) | frozenset(added)


# -- capacity expansion (add an original seat) --


def extend_branch(
    inst: Instance,
    branch: BranchId,
    ranking: Sequence[ContractId],
    position: int | None = None,
) -> Instance:
    """Add one original seat (with the given priority ranking) plus an inert
    paired shadow seat: empty ranking, transfer bit 0.

    By default the pair is appended after the existing seats with location
    n+1.  A ``position`` p inserts the pair at precedence position p in both
    orders, bumping later locations so the merged processing order stays
    valid; the comparative claim is placement-independent, the knob exists
    to probe that.
    """
    cfg = inst.branches[branch]
    n = cfg.n
    p = n + 1 if position is None else position
    if not 1 <= p <= n + 1:
        raise ValueError(f"position {p} out of range for branch {branch} (n={n})")

    new_location = [l + 1 if l >= p else l for l in cfg.location]
    own_location = n + 1 if p == n + 1 else new_location[p - 1]
    new_location.insert(p - 1, own_location)
    transfer = list(cfg.transfer)
    transfer.insert(p - 1, 0)
    originals = list(cfg.original_priorities)
    originals.insert(p - 1, tuple(ranking))
    shadows = list(cfg.shadow_priorities)
    shadows.insert(p - 1, ())

    extended = BranchConfig(
        cfg.id, n + 1, tuple(new_location), tuple(transfer), tuple(originals), tuple(shadows)
    )
    out = inst.with_branch(extended)
    report = validate_instance(out)
    if not report.ok:
        raise ValueError("extended branch is invalid: " + "; ".join(report.violations))
    return out


def add_original_slot(
    inst: Instance,
    branch: BranchId,
    ranking: Sequence[ContractId],
    position: int | None = None,
) -> ComparisonReport:
    """Pure capacity expansion: every agent weakly gains."""
    return compare_outcomes(inst, extend_branch(inst, branch, ranking, position))


# -- adding contracts --


@dataclass(frozen=True)
class AddedContract:
    """One new contract plus where it lands.

    ``pref_position`` is the insertion index into the owning agent's ranking
    (existing entries keep their order).  ``slot_positions`` maps each slot
    listing the contract to the insertion index into that slot's ranking; in
    bottom mode the index must equal the current length of the ranking.
    """

    contract: Contract
    pref_position: int
    slot_positions: Mapping[SlotId, int]


def apply_additions(
    inst: Instance, additions: Sequence[AddedContract], mode: str
) -> Instance:
    if mode not in (MODE_BOTTOM, MODE_SINGLE_AGENT):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == MODE_SINGLE_AGENT:
        owners = {a.contract.agent for a in additions}
        if len(owners) > 1:
            raise ConditionViolation(
                f"single-agent mode requires one owner, got {sorted(owners)}"
            )

    current = inst
    for a in additions:
        c = a.contract
        if c.id in current.contract_index:
            raise ConditionViolation(f"contract id {c.id} already exists")
        if c.branch not in current.branches:
            raise ConditionViolation(f"contract {c.id} references unknown branch {c.branch}")

        ranking = list(current.preferences.get(c.agent, ()))
        if not 0 <= a.pref_position <= len(ranking):
            raise ConditionViolation(
                f"preference position {a.pref_position} out of range for {c.agent}"
            )
        ranking.insert(a.pref_position, c.id)

        cfg = current.branches[c.branch]
        originals = [list(r) for r in cfg.original_priorities]
        shadows = [list(r) for r in cfg.shadow_priorities]
        for slot, pos in sorted(a.slot_positions.items()):
            if slot.branch != c.branch:
                raise ConditionViolation(
                    f"contract {c.id} cannot be listed at foreign slot {slot}"
                )
            rows = originals if slot.kind == ORIGINAL else shadows
            row = rows[slot.index - 1]
            if mode == MODE_BOTTOM and pos != len(row):
                raise ConditionViolation(
                    f"bottom mode: contract {c.id} must land at the end of {slot} "
                    f"(position {len(row)}, got {pos})"
                )
            if not 0 <= pos <= len(row):
                raise ConditionViolation(f"position {pos} out of range for slot {slot}")
            row.insert(pos, c.id)

        new_cfg = BranchConfig(
            cfg.id,
            cfg.n,
            cfg.location,
            cfg.transfer,
            tuple(tuple(r) for r in originals),
            tuple(tuple(r) for r in shadows),
        )
        current = replace(
            current,
            contracts=current.contracts + (c,),
            preferences={**current.preferences, c.agent: tuple(ranking)},
            branches={**current.branches, c.branch: new_cfg},
        )

    report = validate_instance(current)
    if not report.ok:
        raise ConditionViolation("additions produced an invalid instance: " + "; ".join(report.violations))
    return current


def add_contracts(
    inst: Instance, additions: Sequence[AddedContract], mode: str
) -> ComparisonReport:
    """Compare outcomes after adding contracts.

    Bottom mode appends the new contracts below every existing contract in
    each slot that lists them, which protects every agent.  Single-agent
    mode lets one agent's new contracts land anywhere in slot rankings and
    protects only that agent; displaced third parties are recorded in the
    per-agent breakdown without failing the verdict.
    """
    modified = apply_additions(inst, additions, mode)
    if mode == MODE_BOTTOM:
        protected = None
    else:
        protected = frozenset({a.contract.agent for a in additions})
    return compare_outcomes(inst, modified, protected)


# -- randomized experiment material (used by the CLI and the test batteries) --


def random_slot_ranking(inst: Instance, branch: BranchId, rng: random.Random) -> tuple[ContractId, ...]:
    universe = list(inst.contracts_of_branch.get(branch, ()))
    listed = [cid for cid in universe if rng.random() < 0.7]
    rng.shuffle(listed)
    return tuple(listed)


def random_added_contracts(
    inst: Instance,
    rng: random.Random,
    mode: str,
    count: int = 1,
    agent: AgentId | None = None,
) -> list[AddedContract]:
    """Draw new contracts with valid placements for the requested mode."""
    agents = list(inst.agents)
    branches = list(inst.branches)
    if mode == MODE_SINGLE_AGENT and agent is None:
        agent = rng.choice(agents)
    additions: list[AddedContract] = []
    branch_growth: dict[BranchId, dict[SlotId, int]] = {
        b: {s: 0 for s in cfg.slots()} for b, cfg in inst.branches.items()
    }
    pref_growth: dict[AgentId, int] = {a: 0 for a in agents}
    for j in range(count):
        owner = agent if mode == MODE_SINGLE_AGENT else rng.choice(agents)
        branch = rng.choice(branches)
        cid = f"new{j + 1:02d}"
        contract = Contract(cid, owner, branch, terms=f"added-{j + 1}")
        cfg = inst.branches[branch]
        slot_positions: dict[SlotId, int] = {}
        for slot in cfg.slots():
            if rng.random() >= 0.7:
                continue
            base_len = len(cfg.priority(slot)) + branch_growth[branch][slot]
            pos = base_len if mode == MODE_BOTTOM else rng.randint(0, base_len)
            slot_positions[slot] = pos
            branch_growth[branch][slot] += 1
        pref_len = len(inst.preferences.get(owner, ())) + pref_growth.get(owner, 0)
        pref_growth[owner] = pref_growth.get(owner, 0) + 1
        additions.append(
            AddedContract(contract, rng.randint(0, pref_len), slot_positions)
        )
    return additions
