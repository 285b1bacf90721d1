"""Branch choice rules: sequential slot filling with capacity transfers.

A branch processes its 2n seats in a single merged order determined by the
location vector: original seats keep their precedence order, and shadow seat
k is slotted in right after the l_k-th original seat (and after any earlier
shadow seat).  Original seats always hold one unit of capacity.  A shadow
seat holds capacity only if its paired original seat ended up vacant *and*
the branch's transfer bit for that pair is set; otherwise it is inactive.

Two rules share this skeleton and differ only in what they remove between
seats:

* ``sspwct_choose`` removes every remaining contract of an agent once one of
  her contracts is taken, so the result never holds two contracts of the
  same agent.
* ``completion_choose`` removes only the specific contracts already taken.
  It may select two contracts of one agent, and in exchange it is
  substitutable, satisfies the irrelevance of rejected contracts, and the
  law of aggregate demand (see the oracles module for executable checks).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .model import (
    ORIGINAL,
    BranchConfig,
    BranchId,
    Contract,
    ContractId,
    SlotId,
)


class ForeignContract(ValueError):
    """An offered contract does not belong to the choosing branch."""


@dataclass(frozen=True)
class SlotSequence:
    branch: BranchId
    order: tuple[SlotId, ...]


@dataclass(frozen=True)
class SlotFill:
    """What one seat did: ``contract`` is the assignment (None if empty);
    ``active`` is False for a shadow seat that never received capacity."""

    contract: ContractId | None
    active: bool


@dataclass(frozen=True)
class ChoiceResult:
    chosen: frozenset
    per_slot: Mapping[SlotId, SlotFill]
    filled: Mapping[SlotId, int]  # original seats only, 1 if assigned


def build_slot_sequence(cfg: BranchConfig) -> SlotSequence:
    """Merge original and shadow seats into the processing order.

    Shadow seat k is appended immediately after the l_k-th original seat;
    shadows sharing the same location value keep their own precedence order.
    Assumes the config passed validation (location nondecreasing, k <= l_k).
    """
    order: list[SlotId] = []
    k = 1
    for i in range(1, cfg.n + 1):
        order.append(cfg.original_slot(i))
        while k <= cfg.n and cfg.location[k - 1] == i:
            order.append(cfg.shadow_slot(k))
            k += 1
    return SlotSequence(cfg.id, tuple(order))


def _choose(
    cfg: BranchConfig,
    offers: Iterable[ContractId],
    contracts: Mapping[ContractId, Contract],
    completion: bool,
) -> ChoiceResult:
    offer_set = frozenset(offers)
    for cid in offer_set:
        c = contracts.get(cid)
        if c is None:
            raise ForeignContract(f"unknown contract {cid} offered to branch {cfg.id}")
        if c.branch != cfg.id:
            raise ForeignContract(f"contract {cid} belongs to branch {c.branch}, not {cfg.id}")

    per_slot: dict[SlotId, SlotFill] = {}
    filled: dict[SlotId, int] = {}
    chosen: list[ContractId] = []
    taken_ids: set[ContractId] = set()
    taken_agents: set[str] = set()

    for slot in build_slot_sequence(cfg).order:
        if slot.kind == ORIGINAL:
            active = True
        else:
            # capacity arrives only if the paired original stayed vacant and
            # the transfer bit allows it; l_k >= k guarantees the original
            # was already processed
            paired = cfg.original_slot(slot.index)
            active = filled[paired] == 0 and cfg.transfer[slot.index - 1] == 1
        pick: ContractId | None = None
        if active:
            for cid in cfg.priority(slot):
                if cid not in offer_set or cid in taken_ids:
                    continue
                if not completion and contracts[cid].agent in taken_agents:
                    continue
                pick = cid
                break
        if slot.kind == ORIGINAL:
            filled[slot] = 1 if pick is not None else 0
        per_slot[slot] = SlotFill(pick, active)
        if pick is not None:
            chosen.append(pick)
            taken_ids.add(pick)
            taken_agents.add(contracts[pick].agent)

    return ChoiceResult(frozenset(chosen), per_slot, filled)


def sspwct_choose(
    cfg: BranchConfig,
    offers: Iterable[ContractId],
    contracts: Mapping[ContractId, Contract],
) -> ChoiceResult:
    """The branch's choice from an offer set (one contract per agent)."""
    return _choose(cfg, offers, contracts, completion=False)


def completion_choose(
    cfg: BranchConfig,
    offers: Iterable[ContractId],
    contracts: Mapping[ContractId, Contract],
) -> ChoiceResult:
    """The completion: identical procedure, but an agent's remaining
    contracts stay available after one of hers is taken."""
    return _choose(cfg, offers, contracts, completion=True)


def rejected(
    cfg: BranchConfig,
    offers: Iterable[ContractId],
    contracts: Mapping[ContractId, Contract],
    rule: str = "sspwct",
) -> frozenset:
    """Offers minus the chosen set of the named rule."""
    offer_set = frozenset(offers)
    if rule == "sspwct":
        result = sspwct_choose(cfg, offer_set, contracts)
    elif rule == "completion":
        result = completion_choose(cfg, offer_set, contracts)
    else:
        raise ValueError(f"unknown rule {rule!r}; expected 'sspwct' or 'completion'")
    return offer_set - result.chosen
