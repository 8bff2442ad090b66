"""Off-chain contract execution anchored by Head and Init.

``compile_offchain`` wraps a contract in two anchor transactions:

  Head   spends every deposit; its single output carries the pot.
  Init   pre-signed spend of Head; appending it moves execution on-chain.

The contract itself becomes the *shadow* copy: the root now spends Init
under a relative timelock of subtree_height(root) × t blocks.  Stipulation
exchanges implicit signatures on Init and the whole shadow first and the
deposit-spending Head signatures last, then appends Head only.

Each agreed step clones the subtree rooted at the chosen child as a
*graft*: its root spends Init under a timelock of subtree_height(child) × t,
strictly smaller than every earlier graft's.  Within a graft, body
signatures are exchanged before root signatures, so a half-signed graft is
never appendable by anyone.  To settle — voluntarily or as a failsafe —
append Init, then the latest fully signed graft root once its timelock
expires, then continue through that graft's body on-chain.  The shrinking
timelocks guarantee the newest agreed state can always land first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .contract import (
    CONTINUATION,
    ContractTree,
    NodeId,
    OutputSpec,
    iter_preorder,
    resolve_path,
    subtree_height,
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
    DEPOSIT,
    FAILSAFE_TRIGGERED,
    GRAFT_APPENDED,
    GRAFT_PROPOSED,
    GRAFT_SEALED,
    INIT_APPENDED,
    SECRET_PUBLISHED,
    SIGNATURE_SENT,
    STIPULATION_ABORTED,
    STIPULATION_COMPLETE,
    TXSET_SENT,
    OUTCOME_LEAF,
    Event,
    Trace,
    summarize_run,
)
from .onchain import (
    ABORTED,
    FAILSAFE,
    FINALIZED,
    ROLE_GRAFT_ROOT,
    ROLE_HEAD,
    ROLE_INIT,
    ROLE_NODE,
    RUNNING,
    STIPULATING,
    Exchange,
    Message,
    ProtocolError,
    build_witness,
    edge_parts,
    exchange_plan,
    instantiate_subtree,
    make_deposits,
    record_append,
)
from .witness import IMPLICIT, CommitmentSet, Reveal, SignatureStore, scenario_salt, sign

_DRIVER_GUARD = 100_000

HEAD_NAME = "Head"
INIT_NAME = "Init"


@dataclass
class Graft:
    """One agreed off-chain state: a subtree copy rooted onto Init.

    Index 0 is the shadow copy of the whole contract created at
    compilation; it has no exchange of its own because its signatures
    travel with stipulation.  ``instances`` is keyed by the node ids of
    the original tree, so walking a graft body is ordinary tree walking.
    """
    index: int
    origin: NodeId
    instances: Dict[NodeId, TxInstance]
    root_timelock: int
    exchange: Optional[Exchange]
    sealed: bool = False
    seal_height: Optional[int] = None
    discarded: bool = False

    @property
    def root_instance(self) -> TxInstance:
        return self.instances[self.origin]


@dataclass(frozen=True)
class OffchainCompilation:
    head: TxInstance
    init: TxInstance
    shadow: Dict[NodeId, TxInstance]
    deposits: Dict[str, TxInstance]
    t: int


def compile_offchain(tree: ContractTree, commitments: CommitmentSet, salt: bytes,
                     t: int, deposits: Optional[Dict[str, TxInstance]] = None
                     ) -> OffchainCompilation:
    """Build Head, Init, and the shadow copy of the whole contract."""
    errors = validate_tree(tree)
    if errors:
        raise ProtocolError(f"invalid contract: {errors[0]}")
    if t < 1:
        raise ProtocolError(f"timelock unit must be at least 1 block, got {t}")
    if deposits is None:
        deposits = make_deposits(tree, salt)
    everyone = frozenset(tree.participants)
    pot = tree.deposit_total()
    head = make_tx(HEAD_NAME, salt,
                   tuple((deposits[p].digest, 0) for p in tree.participants),
                   0, everyone, outputs=(OutputSpec(pot - tree.fee, CONTINUATION),))
    init = make_tx(INIT_NAME, salt, ((head.digest, 0),), 0, everyone,
                   outputs=(OutputSpec(pot - 2 * tree.fee, CONTINUATION),))
    shadow = instantiate_subtree(
        tree, commitments, salt, tree.root, ((init.digest, 0),),
        pot - 2 * tree.fee, subtree_height(tree, tree.root) * t,
        clear_root_edge=True)
    return OffchainCompilation(head, init, shadow, deposits, t)


class OffchainSession:
    """State of one off-chain execution.

    Holds the compiled anchors, the ordered graft list, per-participant
    signature stores, and the public pools of published reveals and edge
    authorizations.  Message delivery, graft creation, and appends are
    individual methods so drivers and strategy engines can interleave
    them freely; the session only enforces protocol structure.
    """

    def __init__(self, tree: ContractTree, commitments: CommitmentSet, salt: bytes,
                 trace: Trace, t: int, chain: Optional[ChainState] = None) -> None:
        self.tree = tree
        self.commitments = commitments
        self.salt = salt
        self.trace = trace
        self.t = t
        self.chain = chain if chain is not None else ChainState(tree.fee)
        comp = compile_offchain(tree, commitments, salt, t)
        self.head = comp.head
        self.init = comp.init
        self.deposits = comp.deposits
        self.grafts: List[Graft] = [Graft(
            0, tree.root, comp.shadow,
            subtree_height(tree, tree.root) * t, exchange=None)]
        self.stores: Dict[str, SignatureStore] = {p: SignatureStore() for p in tree.participants}
        self.reveal_pool: Dict[str, Reveal] = {}
        self.edge_pool: Dict[str, Set[str]] = {}
        self.phase = STIPULATING
        self.init_on_chain = False
        # On-chain continuation cursor after a graft root lands: (graft, node).
        self.cursor: Optional[Tuple[Graft, NodeId]] = None
        self.by_digest: Dict[str, TxInstance] = {comp.head.digest: comp.head,
                                                 comp.init.digest: comp.init}
        self.by_digest.update({d.digest: d for d in comp.deposits.values()})
        self.by_digest.update({i.digest: i for i in comp.shadow.values()})
        body = [(INIT_NAME, self.init.digest)]
        body += [(tree.node(n).name, comp.shadow[n].digest) for n in iter_preorder(tree)]
        self.stipulation = Exchange(exchange_plan(
            tree.participants, body, (HEAD_NAME, comp.head.digest), include_txset=True))
        self._inject_deposits()

    @property
    def shadow(self) -> Graft:
        return self.grafts[0]

    def _inject_deposits(self) -> None:
        for p in self.tree.participants:
            dep = self.deposits[p]
            error = self.chain.try_append(dep)
            if error is not None:
                raise ProtocolError(f"deposit rejected: {error.code}")
            self.trace.add(Event(self.chain.height, p, DEPOSIT, {
                "digest": dep.digest, "name": dep.name, "value": dep.output_total()}))
            self.trace.appends.append((dep, EMPTY_WITNESS, self.chain.height))

    # -- graft bookkeeping ---------------------------------------------------

    @property
    def pending_graft(self) -> Optional[Graft]:
        last = self.grafts[-1]
        return last if not last.sealed and not last.discarded and last.index > 0 else None

    def sealed_grafts(self) -> List[Graft]:
        return [g for g in self.grafts if g.sealed]

    @property
    def latest_sealed(self) -> Optional[Graft]:
        sealed = self.sealed_grafts()
        return sealed[-1] if sealed else None

    @property
    def steps_sealed(self) -> int:
        return sum(1 for g in self.grafts[1:] if g.sealed)

    @property
    def offchain_head(self) -> NodeId:
        """The node the off-chain execution currently stands at."""
        latest = self.latest_sealed
        return latest.origin if latest else self.tree.root

    @property
    def last_settle_height(self) -> Optional[int]:
        """Height the latest sealed graft (or Head itself) landed/sealed —
        the anchor from which edge After delays are measured."""
        latest = self.latest_sealed
        return latest.seal_height if latest else None

    # -- published material --------------------------------------------------

    def publish_reveal(self, reveal: Reveal) -> None:
        self.reveal_pool[reveal.commitment.label] = reveal

    def publish_edge_auth(self, digest: str, signer: str) -> None:
        self.edge_pool.setdefault(digest, set()).add(signer)

    def publish_step_material(self, child: NodeId, actor: str) -> List[Event]:
        """What ``actor`` contributes when agreeing to step to ``child``:
        authorization signatures on every existing copy of the child's
        instance, and openings of its own secrets on that edge."""
        events: List[Event] = []
        _, auth, labels = edge_parts(self.tree.node(child).edge)
        if actor in auth:
            for graft in self.grafts:
                inst = graft.instances.get(child)
                if inst is not None and actor in inst.edge_signers:
                    self.publish_edge_auth(inst.digest, actor)
        for label in labels:
            if label in self.commitments and self.commitments.owner(label) == actor \
                    and label not in self.reveal_pool:
                self.publish_reveal(self.commitments.reveal(label))
                events.append(self.trace.add(Event(
                    self.chain.height, actor, SECRET_PUBLISHED, {"label": label})))
        return events

    def edge_satisfiable(self, child: NodeId) -> bool:
        """Can a step to ``child`` be agreed right now?  Reveals must be
        published (or held by a participant who would publish them on
        agreement), and After delays must have elapsed since the last
        settled step.  Authorizations are granted by the agreement itself."""
        delay, _, labels = edge_parts(self.tree.node(child).edge)
        for label in labels:
            published = label in self.reveal_pool
            owned = (label in self.commitments
                     and self.commitments.owner(label) in self.tree.participants)
            if not (published or owned):
                return False
        anchor = self.last_settle_height
        if delay and (anchor is None or self.chain.height < anchor + delay):
            return False
        return True

    # -- stipulation ---------------------------------------------------------

    def _active_exchange(self) -> Optional[Exchange]:
        if self.phase == STIPULATING:
            return self.stipulation
        if self.phase == RUNNING and self.pending_graft is not None:
            return self.pending_graft.exchange
        return None

    def next_owed(self, sender: str) -> Optional[Message]:
        exchange = self._active_exchange()
        return exchange.peek(sender) if exchange else None

    def pending_from_others(self, me: str) -> bool:
        exchange = self._active_exchange()
        return exchange.pending_from_others(me) if exchange else False

    def deliver_next(self, sender: str) -> Optional[Event]:
        exchange = self._active_exchange()
        if exchange is None:
            return None
        index = exchange.next_for(sender)
        if index is None:
            return None
        msg = exchange.deliver(index)
        if msg.kind == "sig":
            self.stores[msg.recipient].add(sign(msg.sender, msg.digest, IMPLICIT))
            event = Event(self.chain.height, sender, SIGNATURE_SENT,
                          {"digest": msg.digest, "to": msg.recipient, "tx": msg.subject})
        else:
            event = Event(self.chain.height, sender, TXSET_SENT,
                          {"count": len(self.by_digest) - len(self.deposits),
                           "to": msg.recipient})
        self.trace.add(event)
        if exchange.complete:
            if exchange is self.stipulation:
                self.shadow.sealed = True
                self.trace.add(Event(self.chain.height, sender, STIPULATION_COMPLETE,
                                     {"mode": "offchain"}))
                self.trace.add(Event(self.chain.height, sender, GRAFT_SEALED, {
                    "digest": self.shadow.root_instance.digest, "index": 0,
                    "origin": self.tree.node(self.tree.root).name}))
            else:
                graft = self.pending_graft
                graft.sealed = True
                graft.seal_height = self.chain.height
                self.trace.add(Event(self.chain.height, sender, GRAFT_SEALED, {
                    "digest": graft.root_instance.digest, "index": graft.index,
                    "origin": self.tree.node(graft.origin).name}))
        return event

    def abort(self, withholder: str) -> None:
        self.phase = ABORTED
        self.trace.add(Event(self.chain.height, withholder, STIPULATION_ABORTED,
                             {"withholder": withholder}))

    def head_appendable(self, actor: str) -> bool:
        if self.phase != STIPULATING or not self.stipulation.complete:
            return False
        held = self.stores[actor].signers(self.head.digest, IMPLICIT) | {actor}
        return not self.chain.is_appended(self.head.digest) and \
            held >= set(self.tree.participants)

    def append_head(self, actor: str) -> Optional[AppendError]:
        witness = build_witness(self.head, actor, self.stores[actor])
        error = record_append(self.trace, self.chain, actor, self.head, witness, ROLE_HEAD)
        if error is None:
            self.phase = RUNNING
            self.shadow.seal_height = self.chain.height
        return error

    # -- stepping (off-chain) ------------------------------------------------

    def create_graft(self, child: NodeId) -> Graft:
        """Clone the subtree at ``child`` onto Init.  The clone's root
        timelock is subtree_height(child) × t — strictly below every
        earlier graft's because child sits strictly deeper."""
        if self.phase != RUNNING:
            raise ProtocolError("grafts can only be created while running")
        if self.pending_graft is not None:
            raise ProtocolError("a graft exchange is already in progress")
        if child not in self.tree.node(self.offchain_head).children:
            raise ProtocolError(
                f"{child} is not a child of the current off-chain head")
        timelock = subtree_height(self.tree, child) * self.t
        instances = instantiate_subtree(
            self.tree, self.commitments, self.salt, child, ((self.init.digest, 0),),
            self.init.output_total(), timelock, clear_root_edge=True)
        body = [(self.tree.node(n).name, instances[n].digest)
                for n in iter_preorder(self.tree, child) if n != child]
        root_item = (self.tree.node(child).name, instances[child].digest)
        graft = Graft(len(self.grafts), child, instances, timelock,
                      Exchange(exchange_plan(self.tree.participants, body,
                                             root_item, include_txset=False)))
        self.grafts.append(graft)
        self.by_digest.update({i.digest: i for i in instances.values()})
        self.trace.add(Event(self.chain.height, "session", GRAFT_PROPOSED, {
            "digest": instances[child].digest, "index": graft.index,
            "origin": self.tree.node(child).name, "rel_timelock": timelock,
            "size": len(instances)}))
        return graft

    # -- moving on-chain -----------------------------------------------------

    def append_init(self, actor: str) -> Optional[AppendError]:
        if self.phase not in (RUNNING, FAILSAFE):
            raise ProtocolError("Init cannot be appended before Head")
        witness = build_witness(self.init, actor, self.stores[actor])
        error = record_append(self.trace, self.chain, actor, self.init, witness, ROLE_INIT)
        if error is None:
            self.init_on_chain = True
            self.phase = FAILSAFE
            pending = self.pending_graft
            if pending is not None:
                pending.discarded = True
            self.trace.add(Event(self.chain.height, actor, INIT_APPENDED,
                                 {"digest": self.init.digest}))
        return error

    def trigger_failsafe(self, actor: str) -> Optional[AppendError]:
        """Deliberate move on-chain: idempotent once Init has landed."""
        if self.init_on_chain:
            return None
        self.trace.add(Event(self.chain.height, actor, FAILSAFE_TRIGGERED,
                             {"steps_sealed": self.steps_sealed}))
        return self.append_init(actor)

    def graft_root_witness(self, actor: str, graft: Graft) -> AppendWitness:
        return build_witness(graft.root_instance, actor, self.stores[actor],
                             self.commitments, self.reveal_pool, self.edge_pool)

    def append_graft_root(self, actor: str, graft: Graft) -> Optional[AppendError]:
        tx = graft.root_instance
        witness = self.graft_root_witness(actor, graft)
        error = record_append(self.trace, self.chain, actor, tx, witness, ROLE_GRAFT_ROOT)
        if error is None:
            self.trace.add(Event(self.chain.height, actor, GRAFT_APPENDED, {
                "digest": tx.digest, "index": graft.index,
                "origin": self.tree.node(graft.origin).name}))
            if self.tree.node(graft.origin).children:
                self.cursor = (graft, graft.origin)
            else:
                self.cursor = None
                self.phase = FINALIZED
        return error

    def graft_root_ready(self, actor: str, graft: Graft) -> bool:
        """Could ``actor`` land this graft root right now?"""
        if not self.init_on_chain or self.chain.is_appended(graft.root_instance.digest):
            return False
        enabled = self.chain.enabled_at(graft.root_instance)
        if not isinstance(enabled, int) or enabled > self.chain.height:
            return False
        held = self.stores[actor].signers(graft.root_instance.digest, IMPLICIT) | {actor}
        return held >= set(self.tree.participants)

    def append_continuation(self, actor: str, child: NodeId) -> Optional[AppendError]:
        """Continue on-chain through the appended graft's body."""
        if self.cursor is None:
            raise ProtocolError("no graft root on-chain to continue from")
        graft, at = self.cursor
        if child not in self.tree.node(at).children:
            raise ProtocolError(f"{child} is not a child of the current node")
        tx = graft.instances[child]
        witness = build_witness(tx, actor, self.stores[actor], self.commitments,
                                self.reveal_pool, self.edge_pool)
        error = record_append(self.trace, self.chain, actor, tx, witness, ROLE_NODE)
        if error is None:
            if self.tree.node(child).children:
                self.cursor = (graft, child)
            else:
                self.cursor = None
                self.phase = FINALIZED
        return error

    def continuation_ready(self, actor: str, child: NodeId) -> bool:
        if self.cursor is None:
            return False
        graft, at = self.cursor
        if child not in self.tree.node(at).children:
            return False
        tx = graft.instances[child]
        enabled = self.chain.enabled_at(tx)
        if not isinstance(enabled, int) or enabled > self.chain.height:
            return False
        held = self.stores[actor].signers(tx.digest, IMPLICIT) | {actor}
        if not held >= set(tx.required_signers):
            return False
        for signer in tx.edge_signers:
            if signer not in self.edge_pool.get(tx.digest, ()):
                return False
        for commitment in tx.required_reveals:
            if commitment.label not in self.reveal_pool and \
                    commitment.owner != actor:
                return False
        return True


# ---------------------------------------------------------------------------
# Direct drivers (no strategy engine): used by tests and for reference runs.

def start_offchain(tree: ContractTree, seed: int = 0, t: int = 2,
                   label: str = "offchain") -> OffchainSession:
    commitments = CommitmentSet([(s.label, s.owner) for s in tree.secrets], seed)
    salt = scenario_salt(seed, "offchain")
    trace = Trace(header={"label": label, "mode": "offchain", "seed": seed, "t": t})
    return OffchainSession(tree, commitments, salt, trace, t)


def stipulate_offchain(session: OffchainSession,
                       withhold_at: Optional[int] = None) -> bool:
    """Deliver the stipulation plan in order and append Head; with
    ``withhold_at`` stop right before that message and abort instead."""
    plan = session.stipulation.messages
    for index in range(len(plan)):
        if withhold_at is not None and index == withhold_at:
            session.abort(plan[index].sender)
            return False
        if session.deliver_next(plan[index].sender) is None:
            raise ProtocolError("stipulation plan is not deliverable in order")
    error = session.append_head(session.tree.participants[0])
    if error is not None:
        raise ProtocolError(f"Head rejected after stipulation: {error.code}")
    return True


def offchain_step(session: OffchainSession, child: NodeId,
                  withhold_at: Optional[int] = None) -> Optional[Graft]:
    """Agree one step and run its graft exchange to completion.  With
    ``withhold_at`` the exchange stops at that message index, leaving the
    graft half signed (the caller would then trigger the failsafe)."""
    if not session.edge_satisfiable(child):
        raise ProtocolError(
            f"edge into {session.tree.node(child).name} is not satisfiable")
    for p in session.tree.participants:
        session.publish_step_material(child, p)
    graft = session.create_graft(child)
    plan = graft.exchange.messages
    for index in range(len(plan)):
        if withhold_at is not None and index == withhold_at:
            return None
        if session.deliver_next(plan[index].sender) is None:
            raise ProtocolError("graft plan is not deliverable in order")
    return graft


def finalize(session: OffchainSession, path_names: Optional[Sequence[str]] = None,
             actor: Optional[str] = None) -> Trace:
    """Append Init (if needed) and the latest sealed graft root at its
    enablement, then continue on-chain along ``path_names`` — cooperative:
    edge signers authorize and the oracle's remaining secrets are treated
    as revealed at need."""
    actor = actor or session.tree.participants[0]
    if not session.init_on_chain:
        error = session.append_init(actor)
        if error is not None:
            raise ProtocolError(f"Init rejected: {error.code}")
    latest = session.latest_sealed
    if latest is None:
        raise ProtocolError("nothing sealed to finalize with")
    for _ in range(_DRIVER_GUARD):
        if session.graft_root_ready(actor, latest):
            break
        session.chain.tick()
    else:
        raise ProtocolError("graft root never became enabled")
    error = session.append_graft_root(actor, latest)
    if error is not None:
        raise ProtocolError(f"graft root rejected: {error.code}")

    if session.phase != FINALIZED:
        if path_names is None:
            raise ProtocolError("a continuation path is required below the graft root")
        path_ids = resolve_path(session.tree, path_names)
        if latest.origin not in path_ids:
            raise ProtocolError("the path does not pass through the graft origin")
        remaining = path_ids[path_ids.index(latest.origin) + 1:]
        for child in remaining:
            tx = latest.instances[child]
            for signer in tx.edge_signers:
                session.publish_edge_auth(tx.digest, signer)
            for commitment in tx.required_reveals:
                if commitment.label not in session.reveal_pool:
                    session.publish_reveal(session.commitments.reveal(commitment.label))
            for _ in range(_DRIVER_GUARD):
                if session.continuation_ready(actor, child):
                    break
                session.chain.tick()
            else:
                raise ProtocolError("continuation never became enabled")
            error = session.append_continuation(actor, child)
            if error is not None:
                raise ProtocolError(
                    f"continuation to {tx.name} rejected: {error.code}")
    summarize_run(session.trace, session.chain, session.tree.fee, OUTCOME_LEAF,
                  completion_height=session.chain.height)
    return session.trace
