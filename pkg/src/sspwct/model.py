"""Domain model: contracts, agent preferences, branch configurations, instances.

Everything is an immutable value object.  Constructors normalize collections
to tuples so instances can be shared across threads and compared
structurally.  JSON serialization is canonical (sorted keys, sorted contract
and branch lists, two-space indent), which makes serialize -> parse ->
serialize byte-identical.

Rankings encode unacceptability implicitly: a contract is acceptable to an
agent (or to a slot) iff it appears in the ranking.  The outside option sits
at the end of every list.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Any, Iterable, Mapping, Sequence

ContractId = str
AgentId = str
BranchId = str

ORIGINAL = "original"
SHADOW = "shadow"

#: An outcome is just the set of signed contracts.
Outcome = frozenset


class ParseError(ValueError):
    """Malformed instance document; the message names the offending field."""


@dataclass(frozen=True, order=True)
class SlotId:
    """Identifies one seat of a branch.

    ``index`` is the 1-based position in the branch's precedence order for
    that kind of seat.  The shadow seat with index k is paired with the
    original seat with the same index.
    """

    branch: BranchId
    kind: str  # ORIGINAL or SHADOW
    index: int

    def __str__(self) -> str:
        tag = "o" if self.kind == ORIGINAL else "e"
        return f"{self.branch}:{tag}{self.index}"


@dataclass(frozen=True)
class Contract:
    id: ContractId
    agent: AgentId
    branch: BranchId
    terms: str = ""


@dataclass(frozen=True)
class AgentPreference:
    agent: AgentId
    ranking: tuple[ContractId, ...]


@dataclass(frozen=True)
class SlotPriority:
    slot: SlotId
    ranking: tuple[ContractId, ...]


def _tupled(rows: Iterable[Iterable[str]]) -> tuple[tuple[str, ...], ...]:
    return tuple(tuple(row) for row in rows)


@dataclass(frozen=True)
class BranchConfig:
    """Static configuration of one branch.

    ``n`` is the physical capacity: the branch has n original seats and n
    paired shadow seats.  ``location[k-1]`` says how many original seats are
    processed before shadow seat k; ``transfer[k-1]`` is 1 if a vacancy at
    original seat k hands its capacity to shadow seat k.  Priority arrays are
    indexed by precedence position (entry k-1 ranks seat k).
    """

    id: BranchId
    n: int
    location: tuple[int, ...]
    transfer: tuple[int, ...]
    original_priorities: tuple[tuple[ContractId, ...], ...]
    shadow_priorities: tuple[tuple[ContractId, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "location", tuple(self.location))
        object.__setattr__(self, "transfer", tuple(self.transfer))
        object.__setattr__(self, "original_priorities", _tupled(self.original_priorities))
        object.__setattr__(self, "shadow_priorities", _tupled(self.shadow_priorities))

    def original_slot(self, k: int) -> SlotId:
        return SlotId(self.id, ORIGINAL, k)

    def shadow_slot(self, k: int) -> SlotId:
        return SlotId(self.id, SHADOW, k)

    def slots(self) -> tuple[SlotId, ...]:
        """All 2n seats, originals first, in precedence order."""
        orig = tuple(self.original_slot(k) for k in range(1, self.n + 1))
        shad = tuple(self.shadow_slot(k) for k in range(1, self.n + 1))
        return orig + shad

    def priority(self, slot: SlotId) -> tuple[ContractId, ...]:
        if slot.branch != self.id:
            raise KeyError(f"slot {slot} does not belong to branch {self.id}")
        rows = self.original_priorities if slot.kind == ORIGINAL else self.shadow_priorities
        return rows[slot.index - 1]

    def slot_priorities(self) -> tuple[SlotPriority, ...]:
        return tuple(SlotPriority(s, self.priority(s)) for s in self.slots())


@dataclass(frozen=True)
class Instance:
    """A complete market: contracts, agent preferences, branch configurations.

    ``preferences`` maps each agent to its ranking (most preferred first);
    agents with an empty tuple find every contract unacceptable.
    """

    contracts: tuple[Contract, ...]
    preferences: Mapping[AgentId, tuple[ContractId, ...]]
    branches: Mapping[BranchId, BranchConfig]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "contracts", tuple(sorted(self.contracts, key=lambda c: c.id))
        )
        object.__setattr__(
            self,
            "preferences",
            {agent: tuple(r) for agent, r in sorted(self.preferences.items())},
        )
        object.__setattr__(
            self, "branches", {b: cfg for b, cfg in sorted(self.branches.items())}
        )

    # -- derived lookups (cached; instances are immutable) --

    @cached_property
    def contract_index(self) -> dict[ContractId, Contract]:
        return {c.id: c for c in self.contracts}

    @cached_property
    def agents(self) -> tuple[AgentId, ...]:
        owners = {c.agent for c in self.contracts}
        return tuple(sorted(owners | set(self.preferences)))

    @cached_property
    def contracts_of_agent(self) -> dict[AgentId, tuple[ContractId, ...]]:
        out: dict[AgentId, list[ContractId]] = {a: [] for a in self.agents}
        for c in self.contracts:
            out.setdefault(c.agent, []).append(c.id)
        return {a: tuple(v) for a, v in out.items()}

    @cached_property
    def contracts_of_branch(self) -> dict[BranchId, tuple[ContractId, ...]]:
        out: dict[BranchId, list[ContractId]] = {b: [] for b in self.branches}
        for c in self.contracts:
            out.setdefault(c.branch, []).append(c.id)
        return {b: tuple(v) for b, v in out.items()}

    @cached_property
    def _pref_rank(self) -> dict[AgentId, dict[ContractId, int]]:
        return {
            agent: {cid: i for i, cid in enumerate(ranking)}
            for agent, ranking in self.preferences.items()
        }

    def acceptable(self, agent: AgentId, cid: ContractId) -> bool:
        return cid in self._pref_rank.get(agent, {})

    def pref_value(self, agent: AgentId, cid: ContractId | None) -> int:
        """Position of ``cid`` in the agent's ranking; lower is better.

        The outside option (``None``) sits right after the listed contracts,
        and an unlisted contract sits below the outside option.
        """
        ranking = self._pref_rank.get(agent, {})
        if cid is None:
            return len(ranking)
        if cid in ranking:
            return ranking[cid]
        return len(ranking) + 1

    def prefers(self, agent: AgentId, a: ContractId | None, b: ContractId | None) -> bool:
        """True iff the agent strictly prefers ``a`` to ``b``."""
        return self.pref_value(agent, a) < self.pref_value(agent, b)

    def agent_preferences(self) -> tuple[AgentPreference, ...]:
        return tuple(AgentPreference(a, r) for a, r in self.preferences.items())

    # -- functional updates --

    def with_preference(self, agent: AgentId, ranking: Sequence[ContractId]) -> "Instance":
        prefs = dict(self.preferences)
        prefs[agent] = tuple(ranking)
        return replace(self, preferences=prefs)

    def with_branch(self, cfg: BranchConfig) -> "Instance":
        branches = dict(self.branches)
        branches[cfg.id] = cfg
        return replace(self, branches=branches)

    def with_transfer_bit(self, branch: BranchId, k: int, bit: int) -> "Instance":
        cfg = self.branches[branch]
        transfer = list(cfg.transfer)
        transfer[k - 1] = bit
        return self.with_branch(replace(cfg, transfer=tuple(transfer)))


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _strict_order_violations(label: str, ranking: Sequence[ContractId]) -> list[str]:
    seen: set[ContractId] = set()
    out = []
    for cid in ranking:
        if cid in seen:
            out.append(f"{label}: strict order violated (duplicate contract {cid})")
        seen.add(cid)
    return out


def validate_instance(inst: Instance) -> ValidationReport:
    """Check every structural invariant; returns all violations found.

    An empty report means the instance is well-formed.  Violations are data,
    not exceptions: callers decide whether to proceed.
    """
    v: list[str] = []

    seen_ids: set[ContractId] = set()
    seen_triples: set[tuple[str, str, str]] = set()
    for c in inst.contracts:
        if c.id in seen_ids:
            v.append(f"contract {c.id}: duplicate contract id")
        seen_ids.add(c.id)
        triple = (c.agent, c.branch, c.terms)
        if triple in seen_triples:
            v.append(f"contract {c.id}: duplicate (agent, branch, terms) triple {triple}")
        seen_triples.add(triple)
        if c.branch not in inst.branches:
            v.append(f"contract {c.id}: unknown branch {c.branch}")

    owners = {c.agent for c in inst.contracts}
    for agent in sorted(owners):
        if agent not in inst.preferences:
            v.append(f"agent {agent}: owns contracts but has no preference record")

    for agent, ranking in inst.preferences.items():
        v.extend(_strict_order_violations(f"preference {agent}", ranking))
        for cid in ranking:
            c = inst.contract_index.get(cid)
            if c is None:
                v.append(f"preference {agent}: unknown contract {cid}")
            elif c.agent != agent:
                v.append(f"preference {agent}: contract {cid} belongs to {c.agent}")

    for b, cfg in inst.branches.items():
        if cfg.id != b:
            v.append(f"branch {b}: config id mismatch ({cfg.id})")
        if cfg.n < 1:
            v.append(f"branch {b}: capacity n must be positive (n={cfg.n})")
            continue
        if len(cfg.location) != cfg.n:
            v.append(f"branch {b}: location vector has length {len(cfg.location)}, expected {cfg.n}")
        if len(cfg.transfer) != cfg.n:
            v.append(f"branch {b}: transfer vector has length {len(cfg.transfer)}, expected {cfg.n}")
        if len(cfg.original_priorities) != cfg.n:
            v.append(f"branch {b}: expected {cfg.n} original priority orders")
        if len(cfg.shadow_priorities) != cfg.n:
            v.append(f"branch {b}: expected {cfg.n} shadow priority orders")
        for k, l_k in enumerate(cfg.location, start=1):
            if l_k < k:
                v.append(f"branch {b}: location lower bound k <= l_k violated at k={k} (l_k={l_k})")
            if l_k > cfg.n:
                v.append(f"branch {b}: location upper bound l_k <= n violated at k={k} (l_k={l_k})")
            if k >= 2 and l_k < cfg.location[k - 2]:
                v.append(f"branch {b}: location vector not nondecreasing at k={k}")
        for k, bit in enumerate(cfg.transfer, start=1):
            if bit not in (0, 1):
                v.append(f"branch {b}: transfer bit at k={k} must be 0 or 1 (got {bit})")
        if len(cfg.original_priorities) != cfg.n or len(cfg.shadow_priorities) != cfg.n:
            continue
        for sp in cfg.slot_priorities():
            v.extend(_strict_order_violations(f"slot {sp.slot}", sp.ranking))
            for cid in sp.ranking:
                c = inst.contract_index.get(cid)
                if c is None:
                    v.append(f"slot {sp.slot}: unknown contract {cid}")
                elif c.branch != b:
                    v.append(f"slot {sp.slot}: contract {cid} belongs to branch {c.branch}")

    return ValidationReport(tuple(v))


def outcome_violations(inst: Instance, assignment: Iterable[ContractId]) -> list[str]:
    """Feasibility check for an outcome: at most one contract per agent, at
    most n_b per branch, all contract ids known."""
    v: list[str] = []
    per_agent: dict[AgentId, int] = {}
    per_branch: dict[BranchId, int] = {}
    for cid in assignment:
        c = inst.contract_index.get(cid)
        if c is None:
            v.append(f"outcome: unknown contract {cid}")
            continue
        per_agent[c.agent] = per_agent.get(c.agent, 0) + 1
        per_branch[c.branch] = per_branch.get(c.branch, 0) + 1
    for agent, count in sorted(per_agent.items()):
        if count > 1:
            v.append(f"outcome: agent {agent} holds {count} contracts")
    for b, count in sorted(per_branch.items()):
        cfg = inst.branches.get(b)
        if cfg is not None and count > cfg.n:
            v.append(f"outcome: branch {b} holds {count} contracts, capacity {cfg.n}")
    return v


# -- JSON --


def _require(obj: Mapping[str, Any], key: str, where: str) -> Any:
    if not isinstance(obj, Mapping):
        raise ParseError(f"{where}: expected an object")
    if key not in obj:
        raise ParseError(f"{where}: missing required field '{key}'")
    return obj[key]


def _string_list(value: Any, where: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
        raise ParseError(f"{where}: expected an array of strings")
    return tuple(value)


def _int_list(value: Any, where: str) -> tuple[int, ...]:
    if not isinstance(value, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in value):
        raise ParseError(f"{where}: expected an array of integers")
    return tuple(value)


def parse_instance(text: str | bytes) -> Instance:
    """Parse the canonical JSON instance format.

    Structural problems raise :class:`ParseError` naming the field; semantic
    invariants are left to :func:`validate_instance`.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("top level: expected an object")

    raw_contracts = _require(doc, "contracts", "top level")
    if not isinstance(raw_contracts, list):
        raise ParseError("contracts: expected an array")
    contracts = []
    for i, rc in enumerate(raw_contracts):
        where = f"contracts[{i}]"
        cid = _require(rc, "id", where)
        agent = _require(rc, "agent", where)
        branch = _require(rc, "branch", where)
        terms = rc.get("terms", "")
        if not all(isinstance(x, str) for x in (cid, agent, branch, terms)):
            raise ParseError(f"{where}: id, agent, branch, terms must be strings")
        contracts.append(Contract(cid, agent, branch, terms))

    raw_prefs = _require(doc, "preferences", "top level")
    if not isinstance(raw_prefs, dict):
        raise ParseError("preferences: expected an object")
    preferences = {
        agent: _string_list(ranking, f"preferences[{agent}]")
        for agent, ranking in raw_prefs.items()
    }

    raw_branches = _require(doc, "branches", "top level")
    if not isinstance(raw_branches, list):
        raise ParseError("branches: expected an array")
    branches: dict[BranchId, BranchConfig] = {}
    for i, rb in enumerate(raw_branches):
        where = f"branches[{i}]"
        bid = _require(rb, "id", where)
        n = _require(rb, "n", where)
        if not isinstance(n, int) or isinstance(n, bool):
            raise ParseError(f"{where}.n: expected an integer")
        location = _int_list(_require(rb, "location", where), f"{where}.location")
        transfer = _int_list(_require(rb, "transfer", where), f"{where}.transfer")
        orig = _require(rb, "original_priorities", where)
        shad = _require(rb, "shadow_priorities", where)
        if not isinstance(orig, list) or not isinstance(shad, list):
            raise ParseError(f"{where}: priority fields must be arrays of arrays")
        original_priorities = tuple(
            _string_list(row, f"{where}.original_priorities[{k}]") for k, row in enumerate(orig)
        )
        shadow_priorities = tuple(
            _string_list(row, f"{where}.shadow_priorities[{k}]") for k, row in enumerate(shad)
        )
        if bid in branches:
            raise ParseError(f"{where}: duplicate branch id {bid}")
        branches[bid] = BranchConfig(
            bid, n, location, transfer, original_priorities, shadow_priorities
        )

    return Instance(tuple(contracts), preferences, branches)


def instance_to_dict(inst: Instance) -> dict[str, Any]:
    return {
        "contracts": [
            {"id": c.id, "agent": c.agent, "branch": c.branch, "terms": c.terms}
            for c in inst.contracts
        ],
        "preferences": {a: list(r) for a, r in inst.preferences.items()},
        "branches": [
            {
                "id": cfg.id,
                "n": cfg.n,
                "location": list(cfg.location),
                "transfer": list(cfg.transfer),
                "original_priorities": [list(row) for row in cfg.original_priorities],
                "shadow_priorities": [list(row) for row in cfg.shadow_priorities],
            }
            for cfg in inst.branches.values()
        ],
    }


def serialize_instance(inst: Instance) -> str:
    """Canonical serialization: sorted keys, sorted lists, trailing newline."""
    return json.dumps(instance_to_dict(inst), sort_keys=True, indent=2) + "\n"
