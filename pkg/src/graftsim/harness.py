"""Scenario runner: a deterministic round scheduler over strategy players.

A scenario names a contract, an execution mode, one strategy per
participant, an oracle reveal schedule, and the branch the cooperating
participants intend to follow.  ``run`` replays it round by round:

* each round starts by publishing any oracle reveals due at the current
  height, then polls every participant in a fixed order;
* a polled participant acts repeatedly (observe -> decide -> execute)
  until its action makes no progress — a failed chain append counts as
  no progress, which limits retries to one attempt per round;
* after the polls the chain ticks one block, unless the run has reached
  a terminal state or the height cap.

All randomness is confined to seeds, so a scenario always produces a
byte-identical trace.  Strategies communicate only through the session
(message delivery, published material, the chain) and through the
engine's step-agreement bookkeeping; a step proposal needs every
participant's agreement off-chain, and the edge's authorizers and
secret owners on-chain.
"""

from __future__ import annotations

import importlib.resources
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

from .contract import (
    ContractTree,
    NodeId,
    contract_to_dict,
    deepest_leaf_path,
    load_contract_file,
    resolve_path,
    subtree_height,
)
from .ledger import AppendError
from .onchain import (
    ABORTED,
    FINALIZED,
    OnchainSession,
    ProtocolError,
    RUNNING,
    STIPULATING,
    edge_parts,
    run_onchain_baseline,
)
from .offchain import (
    OffchainSession,
    offchain_step,
    start_offchain,
    stipulate_offchain,
)
from .strategies import (
    AGREE,
    APPEND,
    Action,
    IDLE,
    Observation,
    PROPOSE,
    REFUSE,
    SEND,
    STRATEGIES,
    TARGET_CONTINUE,
    TARGET_FAILSAFE,
    TARGET_HEAD,
    TARGET_INIT,
    TARGET_LATEST_GRAFT,
    TARGET_OLDEST_GRAFT,
    TARGET_ROOT,
    TARGET_STEP,
    WITHHOLD,
)
from .trace import (
    Event,
    ORACLE_REVEAL,
    OUTCOME_ABORTED,
    OUTCOME_HEIGHT_CAP,
    OUTCOME_LEAF,
    SECRET_PUBLISHED,
    SIGNATURE_SENT,
    STEP_AGREED,
    STEP_PROPOSED,
    STEP_REFUSED,
    Trace,
    summarize_run,
)
from .witness import CommitmentSet, scenario_salt

MODE_ONCHAIN = "onchain"
MODE_OFFCHAIN = "offchain"

_POLL_GUARD = 10_000


class ScenarioError(ValueError):
    """The scenario file or dict is malformed or inconsistent."""


@dataclass
class Scenario:
    """A fully-resolved run configuration (contract already loaded)."""
    label: str
    tree: ContractTree
    mode: str
    strategies: Dict[str, Tuple[str, Dict]]
    path: Tuple[str, ...]
    oracle: Tuple[Tuple[int, str], ...] = ()
    t: int = 1
    patience: int = 2
    seed: int = 0
    order: Optional[Tuple[str, ...]] = None
    height_cap: Optional[int] = None
    source: Optional[str] = None


def default_height_cap(scenario: Scenario) -> int:
    """A generous bound: ten times the span a worst-case run can need."""
    last_reveal = max((h for h, _ in scenario.oracle), default=0)
    span = (subtree_height(scenario.tree, scenario.tree.root) + 2) * max(scenario.t, 1)
    return 10 * (last_reveal + span + scenario.patience + 5)


def scenario_from_dict(data: Dict, base_dir: Union[str, Path, None] = None,
                       source: Optional[str] = None) -> Scenario:
    """Build a Scenario from parsed JSON; ``contract`` paths are resolved
    relative to ``base_dir`` (the scenario file's directory)."""
    try:
        label = data["label"]
        contract_ref = data["contract"]
        mode = data["mode"]
        raw_strategies = data["strategies"]
        path_names = tuple(data["path"])
    except KeyError as missing:
        raise ScenarioError(f"scenario is missing required key {missing}") from None
    if mode not in (MODE_ONCHAIN, MODE_OFFCHAIN):
        raise ScenarioError(f"unknown mode {mode!r}")
    contract_path = Path(base_dir or ".") / contract_ref
    tree = load_contract_file(contract_path)
    if "fee" in data:
        tree = tree.with_fee(int(data["fee"]))
    strategies: Dict[str, Tuple[str, Dict]] = {}
    for participant, entry in raw_strategies.items():
        if participant not in tree.participants:
            raise ScenarioError(f"strategy given for unknown participant {participant!r}")
        name = entry.get("name")
        if name not in STRATEGIES:
            raise ScenarioError(f"unknown strategy {name!r} for {participant}")
        strategies[participant] = (name, dict(entry.get("params", {})))
    for participant in tree.participants:
        strategies.setdefault(participant, ("honest", {}))
    path_ids = resolve_path(tree, list(path_names))
    if not path_ids or tree.node(path_ids[-1]).children:
        raise ScenarioError("the scenario path must end at a leaf")
    oracle = tuple(sorted((int(h), str(lbl)) for h, lbl in data.get("oracle", [])))
    known = {s.label for s in tree.secrets}
    for height, lbl in oracle:
        if lbl not in known:
            raise ScenarioError(f"oracle reveals unknown secret {lbl!r}")
        if height < 0:
            raise ScenarioError("oracle heights must be non-negative")
    order = data.get("order")
    if order is not None:
        if sorted(order) != sorted(tree.participants):
            raise ScenarioError("order must be a permutation of the participants")
        order = tuple(order)
    return Scenario(
        label=label, tree=tree, mode=mode, strategies=strategies,
        path=path_names, oracle=oracle,
        t=int(data.get("t", 1)), patience=int(data.get("patience", 2)),
        seed=int(data.get("seed", 0)), order=order,
        height_cap=int(data["height_cap"]) if "height_cap" in data else None,
        source=source,
    )


def bundled_data_dir() -> Path:
    """The directory of contracts and scenarios shipped with the package."""
    return Path(str(importlib.resources.files("graftsim").joinpath("data")))


def bundled_scenarios() -> List[Path]:
    return sorted(bundled_data_dir().glob("*.scn"))


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ScenarioError(f"{path}: invalid JSON ({err})") from err
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: scenario must be a JSON object")
    return scenario_from_dict(data, base_dir=path.parent, source=str(path))


# ---------------------------------------------------------------------------
# The engine


@dataclass
class _Proposal:
    proposer: str
    child: NodeId
    needed: Set[str]
    agreed: Set[str] = field(default_factory=set)


class _Engine:
    def __init__(self, scenario: Scenario, commitments: CommitmentSet,
                 session: Union[OnchainSession, OffchainSession], trace: Trace) -> None:
        self.scn = scenario
        self.tree = scenario.tree
        self.commitments = commitments
        self.session = session
        self.chain = session.chain
        self.trace = trace
        self.offchain = isinstance(session, OffchainSession)
        self.order: List[str] = list(scenario.order or sorted(self.tree.participants))
        self.players = {p: (STRATEGIES[name], dict(params))
                        for p, (name, params) in scenario.strategies.items()}
        self.path: List[NodeId] = resolve_path(self.tree, list(scenario.path))
        self.oracle = list(scenario.oracle)
        self.oracle_cursor = 0
        self.proposal: Optional[_Proposal] = None
        self.step_refused = False
        self.agreed_steps: Set[NodeId] = set()
        self.last_progress = self.chain.height
        self.cap = scenario.height_cap or default_height_cap(scenario)

    # -- scheduling ----------------------------------------------------------

    def run_rounds(self) -> str:
        while True:
            self._deliver_oracle()
            for participant in self.order:
                self._poll(participant)
                if self._terminal():
                    return self._outcome()
            if self.session.phase == STIPULATING and \
                    self.chain.height - self.last_progress > self.scn.patience:
                blocker = self._stipulation_exchange().first_blocker() or "unknown"
                self.session.abort(blocker)
                return OUTCOME_ABORTED
            if self.chain.height >= self.cap:
                return OUTCOME_HEIGHT_CAP
            self.chain.tick()

    def _poll(self, participant: str) -> None:
        fn, params = self.players[participant]
        for _ in range(_POLL_GUARD):
            action = fn(self._observe(participant), params)
            if not self._execute(participant, action):
                return
            self.last_progress = self.chain.height
            if self._terminal():
                return
        raise ProtocolError(f"{participant} exceeded the per-round action guard")

    def _terminal(self) -> bool:
        return self.session.phase in (FINALIZED, ABORTED)

    def _outcome(self) -> str:
        return OUTCOME_LEAF if self.session.phase == FINALIZED else OUTCOME_ABORTED

    def _deliver_oracle(self) -> None:
        while self.oracle_cursor < len(self.oracle) and \
                self.oracle[self.oracle_cursor][0] <= self.chain.height:
            _, label = self.oracle[self.oracle_cursor]
            self.oracle_cursor += 1
            if label in self.session.reveal_pool:
                continue
            self.session.publish_reveal(self.commitments.reveal(label))
            self.trace.add(Event(self.chain.height, "oracle", ORACLE_REVEAL,
                                 {"label": label}))

    def _stipulation_exchange(self):
        return self.session.stipulation if self.offchain else self.session.exchange

    # -- observation ---------------------------------------------------------

    def _next_on_path(self, at: Optional[NodeId]) -> Optional[NodeId]:
        if at is None or at not in self.path:
            return None
        index = self.path.index(at)
        return self.path[index + 1] if index + 1 < len(self.path) else None

    def _others_owe(self, participant: str) -> bool:
        if self.offchain:
            if self.session.pending_from_others(participant):
                return True
        elif self.session.phase == STIPULATING and \
                self.session.exchange.pending_from_others(participant):
            return True
        proposal = self.proposal
        return proposal is not None and participant in proposal.agreed \
            and not proposal.needed <= proposal.agreed

    def _proposal_view(self, participant: str) -> Tuple[Optional[Tuple[str, NodeId]], bool]:
        if self.proposal is None:
            return None, True
        agreed = participant in self.proposal.agreed or \
            participant not in self.proposal.needed
        return (self.proposal.proposer, self.proposal.child), agreed

    def _observe(self, participant: str) -> Observation:
        if self.offchain:
            return self._observe_offchain(participant)
        return self._observe_onchain(participant)

    def _observe_onchain(self, participant: str) -> Observation:
        session = self.session
        proposal, i_agreed = self._proposal_view(participant)
        nxt = self._next_on_path(session.current)
        return Observation(
            actor=participant, height=self.chain.height, mode=MODE_ONCHAIN,
            phase=session.phase,
            owes_message=session.next_owed(participant) is not None,
            others_owe_me=self._others_owe(participant),
            waiting_rounds=self.chain.height - self.last_progress,
            root_appendable=session.root_appendable(participant),
            proposal=proposal, i_agreed=i_agreed, step_refused=self.step_refused,
            next_child=nxt,
            next_child_ready=nxt is not None and self._onchain_ready(participant, nxt),
            next_child_proposable=nxt is not None and self._onchain_proposable(nxt),
        )

    def _onchain_ready(self, participant: str, child: NodeId) -> bool:
        tx = self.session.instances[child]
        enabled = self.chain.enabled_at(tx)
        if not isinstance(enabled, int) or enabled > self.chain.height:
            return False
        granted = self.session.edge_pool.get(tx.digest, set())
        if any(s != participant and s not in granted for s in tx.edge_signers):
            return False
        return all(c.label in self.session.reveal_pool or c.owner == participant
                   for c in tx.required_reveals)

    def _onchain_needed(self, child: NodeId) -> Set[str]:
        _, auth, labels = edge_parts(self.tree.node(child).edge)
        owners = {self.commitments.owner(lbl) for lbl in labels
                  if lbl in self.commitments}
        return (set(auth) | owners) & set(self.tree.participants)

    def _onchain_proposable(self, child: NodeId) -> bool:
        if child in self.agreed_steps or not self._onchain_needed(child):
            return False
        tx = self.session.instances[child]
        enabled = self.chain.enabled_at(tx)
        if not isinstance(enabled, int) or enabled > self.chain.height:
            return False
        for commitment in tx.required_reveals:
            label = commitment.label
            if label in self.session.reveal_pool:
                continue
            if commitment.owner not in self.tree.participants:
                return False
        return True

    def _observe_offchain(self, participant: str) -> Observation:
        session = self.session
        proposal, i_agreed = self._proposal_view(participant)
        head = session.offchain_head
        nxt = self._next_on_path(head)
        latest = session.latest_sealed
        continuation_child: Optional[NodeId] = None
        continuation_ready = False
        if session.cursor is not None:
            graft, at = session.cursor
            candidate = self._next_on_path(at)
            if candidate is not None and candidate in graft.instances:
                continuation_child = candidate
                continuation_ready = session.continuation_ready(participant, candidate)
        return Observation(
            actor=participant, height=self.chain.height, mode=MODE_OFFCHAIN,
            phase=session.phase,
            owes_message=session.next_owed(participant) is not None,
            others_owe_me=self._others_owe(participant),
            waiting_rounds=self.chain.height - self.last_progress,
            head_appendable=session.head_appendable(participant),
            init_on_chain=session.init_on_chain,
            steps_sealed=session.steps_sealed,
            pending_graft=session.pending_graft is not None,
            proposal=proposal, i_agreed=i_agreed, step_refused=self.step_refused,
            next_child=nxt,
            next_child_proposable=nxt is not None and session.edge_satisfiable(nxt),
            at_leaf=not self.tree.node(head).children,
            latest_root_ready=latest is not None
            and session.graft_root_ready(participant, latest),
            continuation_child=continuation_child,
            continuation_ready=continuation_ready,
            rollback_target=self._rollback_target(),
        )

    def _rollback_target(self) -> Optional[int]:
        session = self.session
        if not session.init_on_chain or \
                not self.chain.is_unspent((session.init.digest, 0)):
            return None
        for graft in session.sealed_grafts():
            if not self.chain.is_appended(graft.root_instance.digest):
                return graft.index
        return None

    # -- execution -----------------------------------------------------------

    def _execute(self, participant: str, action: Action) -> bool:
        kind = action.kind
        if kind in (IDLE, WITHHOLD):
            return False
        if kind == SEND:
            return self.session.deliver_next(participant) is not None
        if kind == PROPOSE:
            return self._execute_propose(participant, action.child)
        if kind == AGREE:
            return self._execute_agree(participant)
        if kind == REFUSE:
            return self._execute_refuse(participant)
        if kind == APPEND:
            return self._execute_append(participant, action)
        raise ProtocolError(f"unknown action kind {kind!r} from {participant}")

    def _execute_propose(self, participant: str, child: Optional[NodeId]) -> bool:
        if child is None or self.proposal is not None:
            return False
        if self.offchain:
            if self.session.pending_graft is not None:
                return False
            needed = set(self.tree.participants)
        else:
            needed = self._onchain_needed(child)
        self.proposal = _Proposal(participant, child, needed, {participant})
        self.trace.add(Event(self.chain.height, participant, STEP_PROPOSED,
                             {"child": self.tree.node(child).name}))
        if self.proposal.needed <= self.proposal.agreed:
            self._complete_agreement()
        return True

    def _execute_agree(self, participant: str) -> bool:
        proposal = self.proposal
        if proposal is None or participant in proposal.agreed \
                or participant not in proposal.needed:
            return False
        proposal.agreed.add(participant)
        self.trace.add(Event(self.chain.height, participant, STEP_AGREED,
                             {"child": self.tree.node(proposal.child).name}))
        if proposal.needed <= proposal.agreed:
            self._complete_agreement()
        return True

    def _execute_refuse(self, participant: str) -> bool:
        proposal = self.proposal
        if proposal is None:
            return False
        self.trace.add(Event(self.chain.height, participant, STEP_REFUSED,
                             {"child": self.tree.node(proposal.child).name}))
        self.proposal = None
        self.step_refused = True
        return True

    def _complete_agreement(self) -> None:
        child = self.proposal.child
        self.proposal = None
        if self.offchain:
            for agreer in sorted(self.tree.participants):
                self.session.publish_step_material(child, agreer)
            self.session.create_graft(child)
            return
        tx = self.session.instances[child]
        _, auth, labels = edge_parts(self.tree.node(child).edge)
        for agreer in sorted(self._onchain_needed(child)):
            if agreer in auth:
                self.session.publish_edge_auth(tx.digest, agreer)
            for label in labels:
                if label in self.commitments \
                        and self.commitments.owner(label) == agreer \
                        and label not in self.session.reveal_pool:
                    self.session.publish_reveal(self.commitments.reveal(label))
                    self.trace.add(Event(self.chain.height, agreer,
                                         SECRET_PUBLISHED, {"label": label}))
        self.agreed_steps.add(child)

    def _execute_append(self, participant: str, action: Action) -> bool:
        target = action.target
        session = self.session
        error: Optional[AppendError]
        if target == TARGET_ROOT:
            error = session.append_root(participant)
        elif target == TARGET_STEP:
            if action.child is None:
                return False
            error = session.step(action.child, participant)
        elif target == TARGET_HEAD:
            error = session.append_head(participant)
        elif target == TARGET_INIT:
            error = session.append_init(participant)
        elif target == TARGET_FAILSAFE:
            error = session.trigger_failsafe(participant)
        elif target == TARGET_LATEST_GRAFT:
            graft = session.latest_sealed
            if graft is None:
                return False
            error = session.append_graft_root(participant, graft)
        elif target == TARGET_OLDEST_GRAFT:
            index = self._rollback_target()
            if index is None:
                return False
            error = session.append_graft_root(participant, session.grafts[index])
        elif target == TARGET_CONTINUE:
            if action.child is None:
                return False
            error = session.append_continuation(participant, action.child)
        else:
            raise ProtocolError(f"unknown append target {target!r} from {participant}")
        return error is None


# ---------------------------------------------------------------------------
# Running and reporting


def run(scenario: Scenario) -> Trace:
    """Execute one scenario to its terminal state and return the trace."""
    tree = scenario.tree
    commitments = CommitmentSet([(s.label, s.owner) for s in tree.secrets],
                                scenario.seed)
    salt = scenario_salt(scenario.seed, scenario.mode)
    header = {
        "label": scenario.label,
        "mode": scenario.mode,
        "seed": scenario.seed,
        "t": scenario.t,
        "fee": tree.fee,
        "patience": scenario.patience,
        "path": list(scenario.path),
        "oracle": [list(item) for item in scenario.oracle],
        "order": list(scenario.order or sorted(tree.participants)),
        "strategies": {p: {"name": name, "params": params}
                       for p, (name, params) in sorted(scenario.strategies.items())},
    }
    trace = Trace(header)
    if scenario.mode == MODE_OFFCHAIN:
        session: Union[OnchainSession, OffchainSession] = OffchainSession(
            tree, commitments, salt, trace, scenario.t)
    else:
        session = OnchainSession(tree, commitments, salt, trace)
    engine = _Engine(scenario, commitments, session, trace)
    outcome = engine.run_rounds()
    summarize_run(trace, session.chain, tree.fee, outcome,
                  completion_height=session.chain.height
                  if outcome == OUTCOME_LEAF else None)
    return trace


@dataclass(frozen=True)
class Report:
    label: str
    mode: str
    outcome: str
    onchain_tx_count: int
    fees_paid: int
    completion_height: Optional[int]
    final_height: int
    message_count: int
    deposits: int
    payouts: Dict[str, int]


def report_from_trace(trace: Trace) -> Report:
    summary = trace.summary
    if not summary:
        raise ValueError("trace has no terminal summary")
    return Report(
        label=trace.header.get("label", ""),
        mode=trace.header.get("mode", ""),
        outcome=summary["outcome"],
        onchain_tx_count=summary["onchain_tx_count"],
        fees_paid=summary["fees_paid"],
        completion_height=summary["completion_height"],
        final_height=summary["final_height"],
        message_count=summary["message_count"],
        deposits=summary["deposits"],
        payouts=dict(summary["payouts"]),
    )


@dataclass(frozen=True)
class Comparison:
    offchain: Report
    onchain: Report
    fees_saved_vs_baseline: int
    extra_delay_blocks: int


def compare(offchain_scenario: Scenario, onchain_scenario: Scenario) -> Comparison:
    """Run an off-chain scenario against its on-chain baseline.

    The two scenarios must describe the same contract, branch, oracle
    schedule, and fee, or the comparison would be meaningless.
    """
    if offchain_scenario.mode != MODE_OFFCHAIN or onchain_scenario.mode != MODE_ONCHAIN:
        raise ValueError("compare wants one offchain and one onchain scenario")
    if contract_to_dict(offchain_scenario.tree) != contract_to_dict(onchain_scenario.tree):
        raise ValueError("scenarios use different contracts")
    if offchain_scenario.path != onchain_scenario.path:
        raise ValueError("scenarios follow different branches")
    if offchain_scenario.oracle != onchain_scenario.oracle:
        raise ValueError("scenarios use different oracle schedules")
    off_report = report_from_trace(run(offchain_scenario))
    on_report = report_from_trace(run(onchain_scenario))
    off_done = off_report.completion_height
    on_done = on_report.completion_height
    delay = (off_done - on_done) if off_done is not None and on_done is not None else 0
    return Comparison(
        offchain=off_report, onchain=on_report,
        fees_saved_vs_baseline=on_report.fees_paid - off_report.fees_paid,
        extra_delay_blocks=delay,
    )


def message_census(tree: ContractTree, path_names: Optional[Sequence[str]] = None,
                   *, mode: str = MODE_OFFCHAIN, t: int = 1, seed: int = 0) -> int:
    """Count the signature messages a cooperative run of ``tree`` needs.

    The walk descends to the deepest leaf unless ``path_names`` says
    otherwise.  Off-chain that covers stipulation plus one graft per
    step; on-chain, stipulation alone.
    """
    if path_names is None:
        ids = deepest_leaf_path(tree)
    else:
        ids = resolve_path(tree, list(path_names))
    if mode == MODE_ONCHAIN:
        names = [tree.node(n).name for n in ids]
        owner_of = {s.label: s.owner for s in tree.secrets}
        outside = {}
        for child in ids[1:]:
            _, _, labels = edge_parts(tree.node(child).edge)
            for label in labels:
                if owner_of.get(label) not in tree.participants:
                    outside[label] = (0, label)
        trace = run_onchain_baseline(tree, names, oracle=tuple(outside.values()),
                                     seed=seed, label="census")
        return trace.count(SIGNATURE_SENT)
    session = start_offchain(tree, seed=seed, t=t, label="census")
    stipulate_offchain(session)
    for child in ids[1:]:
        _, _, labels = edge_parts(tree.node(child).edge)
        for label in labels:
            if label not in session.reveal_pool:
                session.publish_reveal(session.commitments.reveal(label))
        while not session.edge_satisfiable(child):
            session.chain.tick()
        offchain_step(session, child)
    return session.trace.count(SIGNATURE_SENT)
