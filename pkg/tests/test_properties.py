"""Invariant checks over randomized inputs."""

import random
from fractions import Fraction

from hypothesis import given, settings, strategies as st

from graftsim.contract import PayoutShare, resolve_payout, subtree_height, validate_tree
from graftsim.harness import MODE_OFFCHAIN, MODE_ONCHAIN, Scenario, run
from graftsim.onchain import Exchange, exchange_plan
from graftsim.trace import GRAFT_PROPOSED, GRAFT_SEALED, replay_appends
from graftsim.treegen import random_tree
from graftsim.witness import tx_digest

NO_DEADLINE = settings(deadline=None)


# -- payouts ----------------------------------------------------------------

@st.composite
def share_splits(draw):
    weights = draw(st.lists(st.integers(1, 9), min_size=1, max_size=4))
    total = sum(weights)
    return tuple(PayoutShare(f"P{i}", Fraction(w, total))
                 for i, w in enumerate(weights))


@given(balance=st.integers(0, 10**6), shares=share_splits())
def test_payout_conserves_and_stays_non_negative(balance, shares):
    outputs = resolve_payout(shares, balance)
    assert sum(o.value for o in outputs) == balance
    assert all(o.value >= 0 for o in outputs)
    assert outputs == resolve_payout(shares, balance)


# -- digests ----------------------------------------------------------------

@given(name=st.text(min_size=1, max_size=8),
       salt=st.binary(min_size=1, max_size=8),
       rel=st.integers(0, 50),
       value=st.integers(1, 10**6))
def test_digest_binds_every_field(name, salt, rel, value):
    inputs = (("aa", 0), ("bb", 1))
    outputs = ((value, "A"),)
    base = tx_digest(name, salt, inputs, rel, outputs)
    assert base == tx_digest(name, salt, inputs, rel, outputs)
    assert base != tx_digest(name + "x", salt, inputs, rel, outputs)
    assert base != tx_digest(name, salt + b"x", inputs, rel, outputs)
    assert base != tx_digest(name, salt, inputs[::-1], rel, outputs)
    assert base != tx_digest(name, salt, inputs, rel + 1, outputs)
    assert base != tx_digest(name, salt, inputs, rel, ((value + 1, "A"),))
    assert base != tx_digest(name, salt, inputs, rel, ((value, "B"),))


# -- generated contracts ----------------------------------------------------

@NO_DEADLINE
@given(seed=st.integers(0, 10**6))
def test_generated_contracts_always_validate(seed):
    tree, path_names, oracle = random_tree(seed)
    assert validate_tree(tree) == []
    assert len(path_names) >= 1
    assert all(h >= 0 for h, _ in oracle)


# -- exchange gating --------------------------------------------------------

@NO_DEADLINE
@given(seed=st.integers(0, 10**6),
       parties=st.sampled_from((("A", "B"), ("A", "B", "C"))),
       body_size=st.integers(0, 5))
def test_any_legal_delivery_order_is_phase_monotone(seed, parties, body_size):
    body = [(f"T{i}", f"d{i}") for i in range(body_size)]
    exchange = Exchange(exchange_plan(parties, body, ("R", "dr"), True))
    rng = random.Random(seed)
    phases = []
    while not exchange.complete:
        open_now = [i for i, done in enumerate(exchange.delivered)
                    if not done and exchange._phase_open(exchange.messages[i].phase)]
        assert open_now, "gating deadlocked with messages pending"
        index = rng.choice(open_now)
        phases.append(exchange.deliver(index).phase)
    assert phases == sorted(phases)
    assert len(phases) == len(exchange.messages)


# -- end-to-end honest runs -------------------------------------------------

def _honest_scenario(seed: int, mode: str) -> Scenario:
    tree, path_names, oracle = random_tree(seed)
    return Scenario(
        label=f"prop-{seed}", tree=tree, mode=mode,
        strategies={p: ("honest", {}) for p in tree.participants},
        path=tuple(path_names), oracle=tuple(oracle),
        t=1 + seed % 2, patience=2, seed=seed)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 5000), offchain=st.booleans())
def test_honest_runs_settle_cleanly(seed, offchain):
    scenario = _honest_scenario(seed, MODE_OFFCHAIN if offchain else MODE_ONCHAIN)
    trace = run(scenario)
    assert trace.summary["outcome"] == "leaf"

    # value is conserved down to the fee on every appended transaction
    chain = replay_appends(trace, scenario.tree.fee)
    assert chain.conservation_holds()
    assert chain.snapshot() == trace.summary["chain"]

    # no append ever jumped a relative timelock
    height_of = {}
    for tx, _, height in trace.appends:
        for digest, _idx in tx.inputs:
            assert height - height_of[digest] >= tx.rel_timelock
        height_of[tx.digest] = height

    # the payouts plus burned fees add back up to the deposits
    paid = sum(trace.summary["payouts"].values())
    assert paid + trace.summary["fees_paid"] == trace.summary["deposits"]


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 5000))
def test_honest_runs_are_reproducible(seed):
    scenario = _honest_scenario(seed, MODE_OFFCHAIN)
    assert run(scenario).serialize() == run(scenario).serialize()


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 5000))
def test_sealed_graft_timelocks_strictly_decrease(seed):
    scenario = _honest_scenario(seed, MODE_OFFCHAIN)
    trace = run(scenario)
    proposed = {e.data["index"]: e.data["rel_timelock"]
                for e in trace.find(GRAFT_PROPOSED)}
    shadow_lock = subtree_height(scenario.tree, scenario.tree.root) * scenario.t
    ladder = [shadow_lock if e.data["index"] == 0 else proposed[e.data["index"]]
              for e in trace.find(GRAFT_SEALED)]
    assert all(a > b for a, b in zip(ladder, ladder[1:]))
