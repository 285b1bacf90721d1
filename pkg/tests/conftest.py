from sspwct.model import BranchConfig, Contract, Instance


def make_instance(contracts, prefs, branches) -> Instance:
    """Compact instance builder for fixtures.

    ``contracts`` is a list of (id, agent, branch) triples; terms default to
    the contract id so the (agent, branch, terms) uniqueness invariant never
    trips by accident.
    """
    built = tuple(Contract(cid, agent, branch, terms=cid) for cid, agent, branch in contracts)
    return Instance(built, prefs, {cfg.id: cfg for cfg in branches})


def branch(bid="b", n=1, location=None, transfer=None, original=None, shadow=None) -> BranchConfig:
    location = tuple(location) if location is not None else tuple(range(1, n + 1))
    transfer = tuple(transfer) if transfer is not None else (0,) * n
    original = tuple(tuple(r) for r in original) if original is not None else ((),) * n
    shadow = tuple(tuple(r) for r in shadow) if shadow is not None else ((),) * n
    return BranchConfig(bid, n, location, transfer, original, shadow)
