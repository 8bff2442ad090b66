"""Run traces: an ordered event log plus everything needed to replay it.

Events serialize to JSON Lines with sorted keys, so two runs of the same
scenario produce byte-identical files.  A trace also keeps the actual
(instance, witness) pairs of every successful append, which lets tests
re-apply just the appends to a fresh ledger and compare terminal states.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from .ledger import AppendWitness, ChainState, TxInstance

# Event kinds
DEPOSIT = "Deposit"
TXSET_SENT = "TxSetSent"
SIGNATURE_SENT = "SignatureSent"
ORACLE_REVEAL = "OracleReveal"
STEP_PROPOSED = "StepProposed"
STEP_AGREED = "StepAgreed"
STEP_REFUSED = "StepRefused"
GRAFT_PROPOSED = "GraftProposed"
GRAFT_SEALED = "GraftSealed"
APPEND = "Append"
INIT_APPENDED = "InitAppended"
GRAFT_APPENDED = "GraftAppended"
FAILSAFE_TRIGGERED = "FailsafeTriggered"
SECRET_PUBLISHED = "SecretPublished"
STIPULATION_COMPLETE = "StipulationComplete"
STIPULATION_ABORTED = "StipulationAborted"

# Run outcomes
OUTCOME_LEAF = "leaf"
OUTCOME_ABORTED = "aborted"
OUTCOME_HEIGHT_CAP = "height_cap"


@dataclass(frozen=True)
class Event:
    height: int
    actor: str
    kind: str
    data: Dict

    def to_json(self) -> str:
        return json.dumps(
            {"actor": self.actor, "data": self.data, "height": self.height, "kind": self.kind},
            sort_keys=True, separators=(",", ":"))


@dataclass
class Trace:
    header: Dict
    events: List[Event] = field(default_factory=list)
    appends: List[Tuple[TxInstance, AppendWitness, int]] = field(default_factory=list)
    summary: Dict = field(default_factory=dict)

    def add(self, event: Event) -> Event:
        self.events.append(event)
        return event

    def count(self, kind: str) -> int:
        return sum(1 for e in self.events if e.kind == kind)

    def find(self, kind: str) -> List[Event]:
        return [e for e in self.events if e.kind == kind]

    @property
    def outcome(self) -> str:
        return self.summary.get("outcome", "")

    def serialize(self) -> str:
        lines = [json.dumps({"type": "header", **self.header},
                            sort_keys=True, separators=(",", ":"))]
        lines.extend(e.to_json() for e in self.events)
        lines.append(json.dumps({"type": "summary", **self.summary},
                                sort_keys=True, separators=(",", ":")))
        return "\n".join(lines) + "\n"

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.serialize(), encoding="utf-8")


def witness_summary(witness: AppendWitness) -> Dict:
    return {
        "reveals": sorted(r.commitment.label for r in witness.reveals),
        "sigs": sorted(f"{s.signer}:{s.role}" for s in witness.signatures),
    }


def summarize_run(trace: Trace, chain: ChainState, fee: int, outcome: str,
                  completion_height: Optional[int] = None) -> Dict:
    """Fill in the trace's terminal summary from the final chain state."""
    appended = [[e.data["name"], e.data["digest"], e.height, e.data["role"]]
                for e in trace.find(APPEND) if e.data["outcome"] == "ok"]
    trace.summary = {
        "outcome": outcome,
        "final_height": chain.height,
        "completion_height": completion_height,
        "onchain_tx_count": chain.non_deposit_count(),
        "fees_paid": fee * chain.non_deposit_count(),
        "deposits": chain.deposit_total(),
        "payouts": dict(sorted(chain.participant_utxo_values().items())),
        "message_count": trace.count(SIGNATURE_SENT),
        "appended": appended,
        "chain": chain.snapshot(),
    }
    return trace.summary


def replay_appends(trace: Trace, fee: int) -> ChainState:
    """Re-apply only the recorded appends to a fresh ledger.

    The replayed chain advances to each append's recorded height first;
    every append must succeed exactly as it did in the original run.
    """
    chain = ChainState(fee)
    for tx, witness, height in trace.appends:
        if height > chain.height:
            chain.tick(height - chain.height)
        error = chain.try_append(tx, witness)
        if error is not None:
            raise AssertionError(f"replay diverged at {tx.name}: {error.code}")
    final_height = trace.summary.get("final_height", chain.height)
    if final_height > chain.height:
        chain.tick(final_height - chain.height)
    return chain
