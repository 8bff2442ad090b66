"""Participant behavior models.

Each strategy is a pure function ``(Observation, params) -> Action``.  The
scheduler builds the Observation from a participant's legitimate local
view (its own stores, the chain, published material, and protocol state)
and executes the returned Action; strategies never touch shared state, so
the same observation sequence always yields the same action sequence.

``honest`` follows the protocol and the scenario's intended branch;
the remaining strategies model the classic ways a participant can
misbehave off-chain: stalling a signature exchange, appending Init
early, trying to roll the settled state back, and refusing to agree on
the next step.  The misbehavior models target the off-chain protocol;
under on-chain execution every bundled strategy simply cooperates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

from .contract import NodeId
from .onchain import FAILSAFE, RUNNING, STIPULATING

# Action kinds
SEND = "send"
WITHHOLD = "withhold"
APPEND = "append"
PROPOSE = "propose"
AGREE = "agree"
REFUSE = "refuse"
IDLE = "idle"

# Append targets
TARGET_ROOT = "root"            # on-chain root after stipulation
TARGET_STEP = "step"            # on-chain child append (carries .child)
TARGET_HEAD = "head"
TARGET_INIT = "init"
TARGET_FAILSAFE = "failsafe"    # deliberate Init append with a trigger event
TARGET_LATEST_GRAFT = "latest_graft"
TARGET_OLDEST_GRAFT = "oldest_graft"
TARGET_CONTINUE = "continue"    # graft-body continuation (carries .child)


@dataclass(frozen=True)
class Observation:
    """A participant's view of the run at poll time.

    Everything here is derivable from public chain state, the
    participant's own stores and obligations, and protocol bookkeeping;
    nothing exposes other participants' private holdings.
    """
    actor: str
    height: int
    mode: str                    # "onchain" | "offchain"
    phase: str
    owes_message: bool           # I could deliver a message right now
    others_owe_me: bool          # an exchange or agreement is waiting on others
    waiting_rounds: int          # rounds since anyone last made progress
    root_appendable: bool = False
    head_appendable: bool = False
    init_on_chain: bool = False
    steps_sealed: int = 0
    pending_graft: bool = False
    proposal: Optional[Tuple[str, NodeId]] = None   # (proposer, child)
    i_agreed: bool = True
    step_refused: bool = False
    next_child: Optional[NodeId] = None             # next node on the intended branch
    next_child_ready: bool = False                  # appendable now (on-chain step)
    next_child_proposable: bool = False             # edge satisfiable by agreement now
    at_leaf: bool = False                           # off-chain head is a leaf
    latest_root_ready: bool = False
    continuation_child: Optional[NodeId] = None
    continuation_ready: bool = False
    rollback_target: Optional[int] = None           # oldest appendable old-state graft


@dataclass(frozen=True)
class Action:
    kind: str
    target: str = ""
    child: Optional[NodeId] = None


_IDLE = Action(IDLE)
Params = Dict[str, object]
Strategy = Callable[[Observation, Params], Action]

STRATEGIES: Dict[str, Strategy] = {}


def register(name: str) -> Callable[[Strategy], Strategy]:
    def wrap(fn: Strategy) -> Strategy:
        STRATEGIES[name] = fn
        return fn
    return wrap


def _onchain_progress(obs: Observation) -> Action:
    """Cooperative on-chain play: stipulate, then walk the intended branch."""
    if obs.phase == STIPULATING:
        if obs.owes_message:
            return Action(SEND)
        if obs.root_appendable:
            return Action(APPEND, TARGET_ROOT)
        return _IDLE
    if obs.phase == RUNNING and obs.next_child is not None:
        if obs.proposal is not None and not obs.i_agreed:
            proposer, child = obs.proposal
            return Action(AGREE) if child == obs.next_child else Action(REFUSE)
        if obs.next_child_ready:
            return Action(APPEND, TARGET_STEP, obs.next_child)
        if obs.next_child_proposable and obs.proposal is None:
            return Action(PROPOSE, child=obs.next_child)
    return _IDLE


def _cooperative_offchain(obs: Observation) -> Optional[Action]:
    """The protocol-following moves shared by every strategy before its
    misbehavior kicks in: deliver stipulation messages and append Head."""
    if obs.phase == STIPULATING:
        if obs.owes_message:
            return Action(SEND)
        if obs.head_appendable:
            return Action(APPEND, TARGET_HEAD)
        return _IDLE
    return None


@register("honest")
def honest(obs: Observation, params: Params) -> Action:
    """Follow the protocol; on any sign of non-cooperation, move on-chain
    and land the newest agreed state the moment its timelock allows.

    params: ``patience`` — full stalled rounds tolerated while others owe
    messages (default 2); ``failsafe_after_steps`` — optionally abandon
    the off-chain phase deliberately once that many steps have sealed.
    """
    if obs.mode == "onchain":
        return _onchain_progress(obs)
    setup = _cooperative_offchain(obs)
    if setup is not None:
        return setup
    patience = int(params.get("patience", 2))
    deliberate = params.get("failsafe_after_steps")
    if obs.init_on_chain or obs.phase == FAILSAFE:
        if obs.latest_root_ready:
            return Action(APPEND, TARGET_LATEST_GRAFT)
        if obs.continuation_child is not None and obs.continuation_ready:
            return Action(APPEND, TARGET_CONTINUE, obs.continuation_child)
        return _IDLE
    if obs.phase != RUNNING:
        return _IDLE
    if deliberate is not None and obs.steps_sealed >= int(deliberate):
        return Action(APPEND, TARGET_FAILSAFE)
    if obs.step_refused:
        return Action(APPEND, TARGET_FAILSAFE)
    if obs.others_owe_me and obs.waiting_rounds > patience:
        return Action(APPEND, TARGET_FAILSAFE)
    if obs.owes_message:
        return Action(SEND)
    if obs.proposal is not None and not obs.i_agreed:
        proposer, child = obs.proposal
        return Action(AGREE) if child == obs.next_child else Action(REFUSE)
    if obs.at_leaf:
        # Nothing left to negotiate: settle by moving on-chain ourselves.
        return Action(APPEND, TARGET_INIT)
    if obs.next_child is not None and obs.next_child_proposable \
            and not obs.pending_graft and obs.proposal is None:
        return Action(PROPOSE, child=obs.next_child)
    return _IDLE


@register("staller")
def staller(obs: Observation, params: Params) -> Action:
    """Cooperate for ``stall_after_steps`` steps, then agree to further
    proposals but withhold every signature for them, forever."""
    if obs.mode == "onchain":
        return _onchain_progress(obs)
    setup = _cooperative_offchain(obs)
    if setup is not None:
        return setup
    if obs.phase != RUNNING:
        return _IDLE
    limit = int(params.get("stall_after_steps", 0))
    if obs.proposal is not None and not obs.i_agreed:
        return Action(AGREE)
    if obs.owes_message:
        return Action(SEND) if obs.steps_sealed < limit else Action(WITHHOLD)
    return _IDLE


@register("premature_init")
def premature_init(obs: Observation, params: Params) -> Action:
    """Cooperate — even propose steps — until step ``trigger_step`` is
    under negotiation, then append Init while it is still half signed."""
    if obs.mode == "onchain":
        return _onchain_progress(obs)
    setup = _cooperative_offchain(obs)
    if setup is not None:
        return setup
    if obs.init_on_chain or obs.phase != RUNNING:
        return _IDLE
    trigger = int(params.get("trigger_step", 1))
    if obs.steps_sealed >= trigger - 1:
        return Action(APPEND, TARGET_INIT)
    if obs.proposal is not None and not obs.i_agreed:
        return Action(AGREE)
    if obs.owes_message:
        return Action(SEND)
    if obs.next_child is not None and obs.next_child_proposable \
            and not obs.pending_graft and obs.proposal is None:
        return Action(PROPOSE, child=obs.next_child)
    return _IDLE


@register("rollback_attacker")
def rollback_attacker(obs: Observation, params: Params) -> Action:
    """Cooperate passively; once Init is on-chain, try every round to
    redeem it with the OLDEST settled state instead of the newest."""
    if obs.mode == "onchain":
        return _onchain_progress(obs)
    setup = _cooperative_offchain(obs)
    if setup is not None:
        return setup
    if obs.init_on_chain or obs.phase == FAILSAFE:
        if obs.rollback_target is not None:
            return Action(APPEND, TARGET_OLDEST_GRAFT)
        return _IDLE
    if obs.phase != RUNNING:
        return _IDLE
    if obs.proposal is not None and not obs.i_agreed:
        return Action(AGREE)
    if obs.owes_message:
        return Action(SEND)
    return _IDLE


@register("silent_aborter")
def silent_aborter(obs: Observation, params: Params) -> Action:
    """Cooperate for ``refuse_at_step`` steps, then refuse every further
    proposal and never sign another graft."""
    if obs.mode == "onchain":
        return _onchain_progress(obs)
    setup = _cooperative_offchain(obs)
    if setup is not None:
        return setup
    if obs.phase != RUNNING:
        return _IDLE
    limit = int(params.get("refuse_at_step", 0))
    if obs.proposal is not None and not obs.i_agreed:
        return Action(AGREE) if obs.steps_sealed < limit else Action(REFUSE)
    if obs.owes_message:
        return Action(SEND)
    return _IDLE
