"""On-chain contract execution.

``compile_onchain`` turns a contract tree into concrete transaction
instances: the root spends the participants' deposits, every other node
spends its parent's continuation output, and edge requirements become
execution-time signature/reveal/timelock conditions.  Stipulation then
exchanges, pairwise and one signature per message, everything needed to
make the whole tree spendable:

  phase 0  every participant sends the full transaction set to every other
  phase 1  all-participant signatures on every non-root instance
  phase 2  signatures on the root (the deposit-spending transaction), last

A message may only be sent once every lower-phase message has been
delivered, so withholding any single message freezes the exchange before
any deposit can be spent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .contract import (
    CONTINUATION,
    After,
    AuthBy,
    ContractTree,
    NodeId,
    OutputSpec,
    RevealReq,
    iter_preorder,
    resolve_path,
    resolve_payout,
    validate_tree,
)
from .ledger import (
    EMPTY_WITNESS,
    AppendError,
    AppendWitness,
    ChainState,
    TxInstance,
    make_tx,
)
from .trace import (
    APPEND,
    DEPOSIT,
    ORACLE_REVEAL,
    SIGNATURE_SENT,
    STIPULATION_ABORTED,
    STIPULATION_COMPLETE,
    TXSET_SENT,
    OUTCOME_LEAF,
    Event,
    Trace,
    summarize_run,
    witness_summary,
)
from .witness import (
    EDGE,
    IMPLICIT,
    CommitmentSet,
    Reveal,
    SignatureStore,
    scenario_salt,
    sign,
)

# Session phases
STIPULATING = "stipulating"
RUNNING = "running"
FAILSAFE = "failsafe"
FINALIZED = "finalized"
ABORTED = "aborted"

# Append roles used in trace events
ROLE_DEPOSIT = "deposit"
ROLE_NODE = "node"
ROLE_HEAD = "head"
ROLE_INIT = "init"
ROLE_GRAFT_ROOT = "graft_root"

_BASELINE_GUARD = 100_000


class ProtocolError(RuntimeError):
    pass


def edge_parts(edge: Tuple) -> Tuple[int, frozenset, Tuple[str, ...]]:
    """Split an edge into (wait blocks, authorizing signers, reveal labels)."""
    delay = 0
    signers: Set[str] = set()
    labels: List[str] = []
    for req in edge:
        if isinstance(req, After):
            delay = max(delay, req.blocks)
        elif isinstance(req, AuthBy):
            signers |= req.signers
        elif isinstance(req, RevealReq):
            labels.append(req.label)
    return delay, frozenset(signers), tuple(labels)


def make_deposits(tree: ContractTree, salt: bytes) -> Dict[str, TxInstance]:
    """Pre-existing deposit transactions, one per participant."""
    return {
        p: make_tx(f"Dep_{p}", salt, (), 0,
                   outputs=(OutputSpec(tree.deposits[p], p),))
        for p in tree.participants
    }


def instantiate_subtree(
    tree: ContractTree,
    commitments: CommitmentSet,
    salt: bytes,
    sub_root: NodeId,
    root_inputs: Tuple[Tuple[str, int], ...],
    root_input_value: int,
    root_rel_timelock: int,
    clear_root_edge: bool,
) -> Dict[NodeId, TxInstance]:
    """Build transaction instances for the subtree rooted at ``sub_root``.

    The subtree root spends ``root_inputs`` under ``root_rel_timelock``;
    every transaction burns one fee.  With ``clear_root_edge`` the root's
    own edge requirements are dropped (used for grafts, whose root is
    guarded by the graft timelock and implicit signatures instead).
    """
    everyone = frozenset(tree.participants)
    instances: Dict[NodeId, TxInstance] = {}

    def build(node_id: NodeId, inputs: Tuple[Tuple[str, int], ...],
              input_value: int, rel: int, cleared: bool) -> None:
        node = tree.node(node_id)
        _, auth, labels = edge_parts(node.edge)
        if cleared:
            auth, labels = frozenset(), ()
        balance = input_value - tree.fee
        if node.children:
            outputs: Tuple[OutputSpec, ...] = (OutputSpec(balance, CONTINUATION),)
        else:
            outputs = resolve_payout(node.outputs, balance)
        inst = make_tx(node.name, salt, inputs, rel, everyone, auth,
                       frozenset(commitments[l] for l in labels), outputs)
        instances[node_id] = inst
        for child in node.children:
            child_delay, _, _ = edge_parts(tree.node(child).edge)
            build(child, ((inst.digest, 0),), balance, child_delay, False)

    build(sub_root, root_inputs, root_input_value, root_rel_timelock, clear_root_edge)
    return instances


def compile_onchain(
    tree: ContractTree,
    commitments: CommitmentSet,
    salt: bytes,
    deposits: Optional[Dict[str, TxInstance]] = None,
) -> Dict[NodeId, TxInstance]:
    """Instances for direct on-chain execution: the root spends every
    deposit, children spend their parent's continuation output."""
    if deposits is None:
        deposits = make_deposits(tree, salt)
    root_inputs = tuple((deposits[p].digest, 0) for p in tree.participants)
    return instantiate_subtree(tree, commitments, salt, tree.root, root_inputs,
                               tree.deposit_total(), 0, clear_root_edge=False)


# ---------------------------------------------------------------------------
# Pairwise message exchange with phase gating

@dataclass(frozen=True)
class Message:
    sender: str
    recipient: str
    kind: str        # "txset" | "sig"
    subject: str     # display name of the covered transaction ("" for txset)
    digest: str      # covered digest ("" for txset)
    phase: int


class Exchange:
    """An ordered plan of messages where phase k opens only once every
    phase < k message has been delivered."""

    def __init__(self, messages: Sequence[Message]) -> None:
        self.messages: List[Message] = list(messages)
        self.delivered: List[bool] = [False] * len(self.messages)
        self._left_in_phase: Dict[int, int] = {}
        for msg in self.messages:
            self._left_in_phase[msg.phase] = self._left_in_phase.get(msg.phase, 0) + 1
        self._by_sender: Dict[str, List[int]] = {}
        for index, msg in enumerate(self.messages):
            self._by_sender.setdefault(msg.sender, []).append(index)
        self._sender_pos: Dict[str, int] = {s: 0 for s in self._by_sender}

    def _phase_open(self, phase: int) -> bool:
        return all(left == 0 for ph, left in self._left_in_phase.items() if ph < phase)

    def next_for(self, sender: str) -> Optional[int]:
        queue = self._by_sender.get(sender, [])
        pos = self._sender_pos.get(sender, 0)
        while pos < len(queue) and self.delivered[queue[pos]]:
            pos += 1
        self._sender_pos[sender] = pos
        if pos >= len(queue):
            return None
        index = queue[pos]
        return index if self._phase_open(self.messages[index].phase) else None

    def peek(self, sender: str) -> Optional[Message]:
        index = self.next_for(sender)
        return None if index is None else self.messages[index]

    def deliver(self, index: int) -> Message:
        if self.delivered[index]:
            raise ProtocolError("message already delivered")
        msg = self.messages[index]
        if not self._phase_open(msg.phase):
            raise ProtocolError("message phase not open yet")
        self.delivered[index] = True
        self._left_in_phase[msg.phase] -= 1
        return msg

    @property
    def complete(self) -> bool:
        return all(self.delivered)

    def undelivered_count(self) -> int:
        return self.delivered.count(False)

    def pending_from_others(self, me: str) -> bool:
        return any(not done and msg.sender != me
                   for msg, done in zip(self.messages, self.delivered))

    def first_blocker(self) -> Optional[str]:
        """Sender of the first undelivered message in the lowest incomplete
        phase — with phase gating, the participant holding everyone up."""
        lowest = min((msg.phase for msg, done in zip(self.messages, self.delivered) if not done),
                     default=None)
        if lowest is None:
            return None
        for msg, done in zip(self.messages, self.delivered):
            if not done and msg.phase == lowest:
                return msg.sender
        return None


def exchange_plan(
    participants: Sequence[str],
    body: Sequence[Tuple[str, str]],
    final: Tuple[str, str],
    include_txset: bool,
) -> List[Message]:
    """Stipulation/graft plan: optional transaction-set announcements, then
    signatures on every body item, then signatures on ``final`` last."""
    plan: List[Message] = []
    ordered = sorted(participants)
    phase = 0
    if include_txset:
        for sender in ordered:
            for recipient in ordered:
                if sender != recipient:
                    plan.append(Message(sender, recipient, "txset", "", "", phase))
        phase += 1
    for sender in ordered:
        for recipient in ordered:
            if sender == recipient:
                continue
            for subject, digest in body:
                plan.append(Message(sender, recipient, "sig", subject, digest, phase))
    phase += 1
    for sender in ordered:
        for recipient in ordered:
            if sender != recipient:
                plan.append(Message(sender, recipient, "sig", final[0], final[1], phase))
    return plan


# ---------------------------------------------------------------------------
# Witness assembly

def build_witness(
    tx: TxInstance,
    actor: str,
    store: SignatureStore,
    commitments: Optional[CommitmentSet] = None,
    reveal_pool: Optional[Dict[str, Reveal]] = None,
    edge_sigs: Optional[Dict[str, Set[str]]] = None,
    extra: AppendWitness = EMPTY_WITNESS,
) -> AppendWitness:
    """Everything ``actor`` legitimately holds toward appending ``tx``:
    its own signatures, signatures received into its store, execution-time
    authorizations granted so far, published reveals, and openings of its
    own secrets.  The witness may be incomplete; the ledger will say so."""
    sigs = set(extra.signatures)
    for signer in tx.required_signers:
        if signer == actor or store.has(signer, tx.digest, IMPLICIT):
            sigs.add(sign(signer, tx.digest, IMPLICIT))
    for signer in tx.edge_signers:
        if signer == actor or (edge_sigs and signer in edge_sigs.get(tx.digest, ())):
            sigs.add(sign(signer, tx.digest, EDGE))
    reveals = set(extra.reveals)
    for commitment in tx.required_reveals:
        if reveal_pool and commitment.label in reveal_pool:
            reveals.add(reveal_pool[commitment.label])
        elif commitments is not None and commitment.owner == actor and commitment.label in commitments:
            reveals.add(commitments.reveal(commitment.label))
    return AppendWitness(frozenset(sigs), frozenset(reveals))


def record_append(trace: Trace, chain: ChainState, actor: str, tx: TxInstance,
                  witness: AppendWitness, role: str) -> Optional[AppendError]:
    """Attempt an append and log it, success or failure."""
    error = chain.try_append(tx, witness)
    outcome = "ok" if error is None else {"error": error.code, **error.detail()}
    trace.add(Event(chain.height, actor, APPEND, {
        "digest": tx.digest,
        "inputs": [[d, i] for d, i in tx.inputs],
        "name": tx.name,
        "outcome": outcome,
        "role": role,
        "witness": witness_summary(witness),
    }))
    if error is None:
        trace.appends.append((tx, witness, chain.height))
    return error


# ---------------------------------------------------------------------------
# Session

class OnchainSession:
    """State of one on-chain execution: compiled instances, per-participant
    signature stores, the stipulation exchange, and the execution cursor."""

    def __init__(self, tree: ContractTree, commitments: CommitmentSet, salt: bytes,
                 trace: Trace, chain: Optional[ChainState] = None) -> None:
        errors = validate_tree(tree)
        if errors:
            raise ProtocolError(f"invalid contract: {errors[0]}")
        self.tree = tree
        self.commitments = commitments
        self.salt = salt
        self.trace = trace
        self.chain = chain if chain is not None else ChainState(tree.fee)
        self.deposits = make_deposits(tree, salt)
        self.instances = compile_onchain(tree, commitments, salt, self.deposits)
        self.by_digest: Dict[str, TxInstance] = {i.digest: i for i in self.instances.values()}
        self.by_digest.update({d.digest: d for d in self.deposits.values()})
        self.stores: Dict[str, SignatureStore] = {p: SignatureStore() for p in tree.participants}
        # Public bulletin: reveals and execution-time edge authorizations,
        # visible to everyone once published.
        self.reveal_pool: Dict[str, Reveal] = {}
        self.edge_pool: Dict[str, Set[str]] = {}
        self.current: Optional[NodeId] = None
        self.phase = STIPULATING
        preorder = list(iter_preorder(tree))
        body = [(tree.node(i).name, self.instances[i].digest)
                for i in preorder if i != tree.root]
        root_item = (tree.node(tree.root).name, self.instances[tree.root].digest)
        self.exchange = Exchange(exchange_plan(tree.participants, body, root_item, True))
        self._inject_deposits()

    @property
    def root_instance(self) -> TxInstance:
        return self.instances[self.tree.root]

    def _inject_deposits(self) -> None:
        for p in self.tree.participants:
            dep = self.deposits[p]
            error = self.chain.try_append(dep)
            if error is not None:
                raise ProtocolError(f"deposit rejected: {error.code}")
            self.trace.add(Event(self.chain.height, p, DEPOSIT, {
                "digest": dep.digest, "name": dep.name, "value": dep.output_total()}))
            self.trace.appends.append((dep, EMPTY_WITNESS, self.chain.height))

    # -- stipulation --------------------------------------------------------

    def next_owed(self, sender: str) -> Optional[Message]:
        if self.phase != STIPULATING or self.exchange.complete:
            return None
        return self.exchange.peek(sender)

    def deliver_next(self, sender: str) -> Optional[Event]:
        index = self.exchange.next_for(sender)
        if index is None:
            return None
        msg = self.exchange.deliver(index)
        if msg.kind == "sig":
            self.stores[msg.recipient].add(sign(msg.sender, msg.digest, IMPLICIT))
            event = Event(self.chain.height, sender, SIGNATURE_SENT,
                          {"digest": msg.digest, "to": msg.recipient, "tx": msg.subject})
        else:
            event = Event(self.chain.height, sender, TXSET_SENT,
                          {"count": len(self.instances), "to": msg.recipient})
        self.trace.add(event)
        if self.exchange.complete:
            self.trace.add(Event(self.chain.height, sender, STIPULATION_COMPLETE,
                                 {"mode": "onchain"}))
        return event

    def root_appendable(self, actor: str) -> bool:
        if self.phase != STIPULATING or not self.exchange.complete:
            return False
        root = self.root_instance
        held = self.stores[actor].signers(root.digest, IMPLICIT) | {actor}
        return not self.chain.is_appended(root.digest) and held >= set(self.tree.participants)

    def append_root(self, actor: str) -> Optional[AppendError]:
        root = self.root_instance
        witness = build_witness(root, actor, self.stores[actor])
        error = record_append(self.trace, self.chain, actor, root, witness, ROLE_NODE)
        if error is None:
            self.current = self.tree.root
            self.phase = RUNNING if self.tree.node(self.tree.root).children else FINALIZED
        return error

    def abort(self, withholder: str) -> None:
        self.phase = ABORTED
        self.trace.add(Event(self.chain.height, withholder, STIPULATION_ABORTED,
                             {"withholder": withholder}))

    def stipulate(self, withhold_at: Optional[int] = None) -> bool:
        """Reference driver: deliver the whole plan in order and append the
        root.  ``withhold_at`` stops right before that message index and
        aborts instead, leaving every deposit untouched."""
        for index in range(len(self.exchange.messages)):
            if withhold_at is not None and index == withhold_at:
                self.abort(self.exchange.messages[index].sender)
                return False
            sender = self.exchange.messages[index].sender
            delivered = self.deliver_next(sender)
            if delivered is None:
                raise ProtocolError("stipulation plan is not deliverable in order")
        error = self.append_root(self.tree.participants[0])
        if error is not None:
            raise ProtocolError(f"root rejected after stipulation: {error.code}")
        return True

    # -- published material --------------------------------------------------

    def publish_reveal(self, reveal: Reveal) -> None:
        self.reveal_pool[reveal.commitment.label] = reveal

    def publish_edge_auth(self, digest: str, signer: str) -> None:
        self.edge_pool.setdefault(digest, set()).add(signer)

    # -- stepping -----------------------------------------------------------

    def step(self, child: NodeId, actor: Optional[str] = None,
             witness: AppendWitness = EMPTY_WITNESS) -> Optional[AppendError]:
        """Append the child's instance, advancing the cursor on success.
        Implicit signatures come from the actor's store, edge material from
        the public pools; ``witness`` may carry extras on top."""
        if self.current is None:
            raise ProtocolError("stipulation has not completed")
        if child not in self.tree.node(self.current).children:
            raise ProtocolError(f"{child} is not a child of the current node")
        actor = actor or self.tree.participants[0]
        tx = self.instances[child]
        full = build_witness(tx, actor, self.stores[actor], self.commitments,
                             self.reveal_pool, self.edge_pool, extra=witness)
        error = record_append(self.trace, self.chain, actor, tx, full, ROLE_NODE)
        if error is None:
            self.current = child
            if not self.tree.node(child).children:
                self.phase = FINALIZED
        return error


def step_onchain(session: OnchainSession, child: NodeId,
                 witness: AppendWitness = EMPTY_WITNESS,
                 actor: Optional[str] = None) -> Optional[AppendError]:
    return session.step(child, actor=actor, witness=witness)


# ---------------------------------------------------------------------------
# Reference baseline run

def run_onchain_baseline(
    tree: ContractTree,
    path_names: Sequence[str],
    oracle: Sequence[Tuple[int, str]] = (),
    seed: int = 0,
    label: str = "onchain-baseline",
) -> Trace:
    """Stipulate, then walk ``path_names`` from the root to a leaf,
    ticking until each step's reveals and timelocks allow it.  All
    participants are assumed cooperative: edge signers authorize at step
    time and secret owners open their commitments when needed."""
    commitments = CommitmentSet([(s.label, s.owner) for s in tree.secrets], seed)
    salt = scenario_salt(seed, "onchain")
    trace = Trace(header={"label": label, "mode": "onchain", "seed": seed})
    session = OnchainSession(tree, commitments, salt, trace)
    session.stipulate()

    path_ids = resolve_path(tree, path_names)
    if not path_ids or path_ids[0] != tree.root:
        raise ProtocolError("the path must start at the root")

    pending = sorted(oracle)

    def deliver_due() -> None:
        while pending and pending[0][0] <= session.chain.height:
            _, lbl = pending.pop(0)
            session.publish_reveal(commitments.reveal(lbl))
            trace.add(Event(session.chain.height, "oracle", ORACLE_REVEAL, {"label": lbl}))

    deliver_due()
    for child in path_ids[1:]:
        tx = session.instances[child]
        for _ in range(_BASELINE_GUARD):
            deliver_due()
            enabled = session.chain.enabled_at(tx)
            labels_ok = all(c.label in session.reveal_pool or c.owner in tree.participants
                            for c in tx.required_reveals)
            if isinstance(enabled, int) and enabled <= session.chain.height and labels_ok:
                # Cooperative run: edge signers authorize, secret owners open up.
                for signer in tx.edge_signers:
                    session.publish_edge_auth(tx.digest, signer)
                owner_reveals = frozenset(
                    commitments.reveal(c.label) for c in tx.required_reveals
                    if c.label not in session.reveal_pool)
                error = session.step(child, witness=AppendWitness(reveals=owner_reveals))
                if error is not None:
                    raise ProtocolError(f"baseline step to {tx.name} failed: {error.code}")
                break
            session.chain.tick()
        else:
            raise ProtocolError("baseline run exceeded its guard bound")

    summarize_run(trace, session.chain, tree.fee, OUTCOME_LEAF,
                  completion_height=session.chain.height)
    return trace
