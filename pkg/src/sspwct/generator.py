"""Random instance generation for experiments and oracle batteries.

All randomness flows from one seed through :class:`random.Random` (the
stdlib Mersenne Twister, whose seeded streams are stable across platforms
and versions), so any generated batch and any counterexample found on it
can be reproduced exactly.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, replace

from .model import BranchConfig, Contract, Instance

LOCATION_ADJACENT = "adjacent"
LOCATION_TERMINAL = "terminal"
LOCATION_RANDOM = "random"


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    agents: int = 4
    branches: int = 2
    capacity: tuple[int, int] = (1, 3)
    contracts_per_pair: tuple[int, int] = (0, 2)
    density: float = 0.8
    transfer_density: float = 0.5
    location_policy: str = LOCATION_RANDOM
    ensure_acceptable: bool = True


def _location_vector(n: int, policy: str, rng: random.Random) -> tuple[int, ...]:
    if policy == LOCATION_ADJACENT:
        return tuple(range(1, n + 1))
    if policy == LOCATION_TERMINAL:
        return (n,) * n
    if policy == LOCATION_RANDOM:
        loc: list[int] = []
        for k in range(1, n + 1):
            lower = max(k, loc[-1] if loc else 1)
            loc.append(rng.randint(lower, n))
        return tuple(loc)
    raise ValueError(f"unknown location policy {policy!r}")


def generate_instance(cfg: GeneratorConfig) -> Instance:
    """Deterministically generate a valid instance from the config's seed.

    Acceptability density controls both how much of her own contract list an
    agent ranks and how much of the branch's contract pool each slot ranks.
    Unless disabled, every agent with contracts ranks at least one so markets
    are not trivially empty.
    """
    rng = random.Random(cfg.seed)
    agents = [f"i{j:02d}" for j in range(1, cfg.agents + 1)]
    branch_ids = [f"b{j:02d}" for j in range(1, cfg.branches + 1)]

    contracts: list[Contract] = []
    counter = 0
    for agent in agents:
        for branch in branch_ids:
            for t in range(rng.randint(*cfg.contracts_per_pair)):
                counter += 1
                contracts.append(Contract(f"c{counter:03d}", agent, branch, terms=f"t{t + 1}"))

    preferences = {}
    for agent in agents:
        own = [c.id for c in contracts if c.agent == agent]
        listed = [cid for cid in own if rng.random() < cfg.density]
        if cfg.ensure_acceptable and own and not listed:
            listed = [rng.choice(own)]
        rng.shuffle(listed)
        preferences[agent] = tuple(listed)

    branches = {}
    for branch in branch_ids:
        n = rng.randint(*cfg.capacity)
        pool = [c.id for c in contracts if c.branch == branch]

        def ranking() -> tuple[str, ...]:
            listed = [cid for cid in pool if rng.random() < cfg.density]
            rng.shuffle(listed)
            return tuple(listed)

        branches[branch] = BranchConfig(
            branch,
            n,
            _location_vector(n, cfg.location_policy, rng),
            tuple(1 if rng.random() < cfg.transfer_density else 0 for _ in range(n)),
            tuple(ranking() for _ in range(n)),
            tuple(ranking() for _ in range(n)),
        )

    return Instance(tuple(contracts), preferences, branches)


def generate_batch(cfg: GeneratorConfig, count: int) -> list[Instance]:
    """``count`` instances with seeds cfg.seed, cfg.seed+1, ..."""
    return [generate_instance(replace(cfg, seed=cfg.seed + i)) for i in range(count)]
