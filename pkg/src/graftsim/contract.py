"""Contract trees: transaction templates arranged as a rooted tree.

A contract is a tree of named transaction templates.  The root collects
the participants' deposits; every other node spends its parent's single
"continuation" output.  Each edge carries the requirements that must be
met to redeem the parent into the child: signatures from named
participants, revealed secrets, or a minimum wait in blocks.  Leaves
distribute the remaining balance to participants as fractional shares,
so the same tree can be instantiated with different fee totals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

# Beneficiary sentinel for the single output of an internal node, spent by
# whichever child transaction is appended next.
CONTINUATION = "contract"

NodeId = int


class UnknownNodeError(KeyError):
    pass


class ContractParseError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Edge requirements

@dataclass(frozen=True)
class AuthBy:
    """Signatures from each named participant, granted at execution time."""
    signers: frozenset

    def __init__(self, signers) -> None:
        object.__setattr__(self, "signers", frozenset(signers))


@dataclass(frozen=True)
class RevealReq:
    """A valid opening of the named secret commitment."""
    label: str


@dataclass(frozen=True)
class After:
    """At least ``blocks`` blocks elapsed since the previous step."""
    blocks: int


EdgeRequirement = Union[AuthBy, RevealReq, After]


@dataclass(frozen=True)
class PayoutShare:
    to: str
    share: Fraction


@dataclass(frozen=True)
class OutputSpec:
    """A concrete transaction output: an integer value and who may spend it."""
    value: int
    beneficiary: str


@dataclass(frozen=True)
class SecretDecl:
    label: str
    owner: str  # a participant, or an external party such as "oracle"


@dataclass(frozen=True)
class NodeTemplate:
    id: NodeId
    name: str
    edge: Tuple[EdgeRequirement, ...] = ()
    outputs: Tuple[PayoutShare, ...] = ()  # non-empty exactly at leaves
    children: Tuple[NodeId, ...] = ()


@dataclass(frozen=True)
class ContractTree:
    participants: Tuple[str, ...]
    deposits: Dict[str, int]
    fee: int
    root: NodeId
    nodes: Dict[NodeId, NodeTemplate]
    secrets: Tuple[SecretDecl, ...] = ()

    def node(self, node_id: NodeId) -> NodeTemplate:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def deposit_total(self) -> int:
        return sum(self.deposits.values())

    def with_fee(self, fee: int) -> "ContractTree":
        return replace(self, fee=fee)


@dataclass(frozen=True)
class TreeFragment:
    """A deep copy of a subtree with fresh ids.

    ``provenance`` maps each fresh id back to the id it was copied from.
    The copied root's edge requirements are cleared: when the fragment is
    grafted elsewhere they are replaced by the graft's own conditions.
    """
    root: NodeId
    nodes: Dict[NodeId, NodeTemplate]
    provenance: Dict[NodeId, NodeId]


@dataclass(frozen=True)
class StructuralError:
    kind: str
    where: str
    detail: str

    def __str__(self) -> str:  # pragma: no cover - display helper
        return f"{self.kind} at {self.where}: {self.detail}"


# ---------------------------------------------------------------------------
# Structural queries

def iter_preorder(tree: ContractTree, start: Optional[NodeId] = None) -> Iterator[NodeId]:
    stack = [tree.root if start is None else start]
    while stack:
        node_id = stack.pop()
        yield node_id
        stack.extend(reversed(tree.node(node_id).children))


def leaves(tree: ContractTree) -> List[NodeId]:
    return [n for n in iter_preorder(tree) if not tree.node(n).children]


def deepest_leaf_path(tree: ContractTree) -> List[NodeId]:
    """Root-to-leaf path to the deepest leaf (ties broken by smallest id)."""
    best = min(leaves(tree), key=lambda n: (-len(path_to(tree, n)), n))
    return path_to(tree, best)


def parent_map(tree: ContractTree) -> Dict[NodeId, NodeId]:
    parents: Dict[NodeId, NodeId] = {}
    for node_id in iter_preorder(tree):
        for child in tree.node(node_id).children:
            parents[child] = node_id
    return parents


def path_to(tree: ContractTree, node_id: NodeId) -> List[NodeId]:
    """Node ids from the root down to ``node_id``, inclusive."""
    tree.node(node_id)
    parents = parent_map(tree)
    path = [node_id]
    while path[-1] != tree.root:
        if path[-1] not in parents:
            raise UnknownNodeError(node_id)
        path.append(parents[path[-1]])
    return list(reversed(path))


def resolve_path(tree: ContractTree, names: Sequence[str]) -> List[NodeId]:
    """Translate a root-to-descendant list of node names into ids."""
    if not names:
        return []
    root = tree.node(tree.root)
    if names[0] != root.name:
        raise UnknownNodeError(names[0])
    ids = [tree.root]
    for name in names[1:]:
        for child in tree.node(ids[-1]).children:
            if tree.node(child).name == name:
                ids.append(child)
                break
        else:
            raise UnknownNodeError(name)
    return ids


def subtree_height(tree: ContractTree, node_id: NodeId) -> int:
    """Number of edges on the longest path from ``node_id`` to a leaf."""
    node = tree.node(node_id)
    if not node.children:
        return 0
    return 1 + max(subtree_height(tree, c) for c in node.children)


def subtree_size(tree: ContractTree, node_id: NodeId) -> int:
    return sum(1 for _ in iter_preorder(tree, node_id))


def balance_at(tree: ContractTree, node_id: NodeId) -> int:
    """Funds available to ``node_id`` when the tree is executed on-chain:
    the deposits minus one fee per transaction from the root down to and
    including this node."""
    return tree.deposit_total() - tree.fee * len(path_to(tree, node_id))


def extract_subtree(tree: ContractTree, node_id: NodeId) -> TreeFragment:
    """Deep-copy the subtree rooted at ``node_id`` with fresh dense ids."""
    order = list(iter_preorder(tree, node_id))
    fresh = {old: new for new, old in enumerate(order)}
    nodes: Dict[NodeId, NodeTemplate] = {}
    for old in order:
        template = tree.node(old)
        nodes[fresh[old]] = NodeTemplate(
            id=fresh[old],
            name=template.name,
            edge=() if old == node_id else template.edge,
            outputs=template.outputs,
            children=tuple(fresh[c] for c in template.children),
        )
    return TreeFragment(root=0, nodes=nodes, provenance={fresh[o]: o for o in order})


def resolve_payout(shares: Tuple[PayoutShare, ...], balance: int) -> Tuple[OutputSpec, ...]:
    """Turn fractional shares into integer outputs over ``balance``.

    Each share is floored; any remainder goes to the lexicographically
    first beneficiary of the leaf.  Outputs are emitted in beneficiary
    order so the result is canonical.
    """
    ordered = sorted(shares, key=lambda s: s.to)
    amounts = {s.to: (balance * s.share.numerator) // s.share.denominator for s in ordered}
    remainder = balance - sum(amounts.values())
    if remainder:
        amounts[ordered[0].to] += remainder
    return tuple(OutputSpec(amounts[s.to], s.to) for s in ordered)


# ---------------------------------------------------------------------------
# Validation

def validate_tree(tree: ContractTree) -> List[StructuralError]:
    """Structural checks; an empty result means the tree is well formed."""
    errors: List[StructuralError] = []

    def err(kind: str, where: str, detail: str) -> None:
        errors.append(StructuralError(kind, where, detail))

    if tree.fee < 0:
        err("NegativeValue", "fee", f"fee is {tree.fee}")
    if not tree.participants:
        err("NoParticipants", "contract", "a contract needs at least one participant")
    for p in tree.participants:
        if p == CONTINUATION:
            err("ReservedName", p, f"participant name {CONTINUATION!r} is reserved")
        if p not in tree.deposits:
            err("MissingDeposit", p, "participant has no deposit")
    for p, value in tree.deposits.items():
        if p not in tree.participants:
            err("UnknownParticipant", p, "deposit from a non-participant")
        if value < 0:
            err("NegativeValue", p, f"deposit is {value}")

    for node_id, template in tree.nodes.items():
        if template.id != node_id:
            err("IdMismatch", template.name, f"keyed {node_id}, declares {template.id}")

    if tree.root not in tree.nodes:
        err("UnknownNode", str(tree.root), "root id not present")
        return errors

    # Reachability / single-parent / acyclicity in one sweep.
    seen: Dict[NodeId, NodeId] = {}
    stack = [tree.root]
    while stack:
        node_id = stack.pop()
        template = tree.nodes.get(node_id)
        if template is None:
            err("UnknownNode", str(node_id), "child id not present")
            continue
        for child in template.children:
            if child in seen or child == tree.root:
                err("NotATree", tree.nodes[child].name if child in tree.nodes else str(child),
                    "node has more than one parent or closes a cycle")
                continue
            seen[child] = node_id
            stack.append(child)
    reachable = set(seen) | {tree.root}
    for node_id in tree.nodes:
        if node_id not in reachable:
            err("Orphan", tree.nodes[node_id].name, "unreachable from the root")

    declared = {s.label for s in tree.secrets}
    if len(declared) != len(tree.secrets):
        err("DuplicateSecret", "secrets", "secret label declared twice")
    for s in tree.secrets:
        if s.owner != "oracle" and s.owner not in tree.participants:
            err("UnknownParticipant", s.label, f"secret owner {s.owner!r} unknown")

    if tree.nodes[tree.root].edge:
        err("RootEdge", tree.nodes[tree.root].name, "the root has no parent edge to satisfy")

    names_ok = not errors
    for node_id in (iter_preorder(tree) if names_ok else []):
        template = tree.node(node_id)
        where = template.name
        for req in template.edge:
            if isinstance(req, AuthBy):
                for signer in req.signers:
                    if signer not in tree.participants:
                        err("UnknownParticipant", where, f"edge signer {signer!r} unknown")
            elif isinstance(req, RevealReq):
                if req.label not in declared:
                    err("UnknownSecret", where, f"edge reveals undeclared {req.label!r}")
            elif isinstance(req, After):
                if req.blocks < 0:
                    err("NegativeValue", where, f"negative wait {req.blocks}")
        if template.children:
            if template.outputs:
                err("BalanceMismatch", where, "internal node declares leaf payouts")
        else:
            total = sum((s.share for s in template.outputs), Fraction(0))
            if total != 1:
                err("BalanceMismatch", where, f"leaf shares sum to {total}, expected 1")
            for s in template.outputs:
                if s.to not in tree.participants:
                    err("UnknownParticipant", where, f"payout to {s.to!r}")
                if s.share < 0:
                    err("NegativeValue", where, f"negative share for {s.to}")
        if balance_at(tree, node_id) < 0:
            err("NegativeBalance", where, "fees exceed the deposits on this path")

    return errors


# ---------------------------------------------------------------------------
# File format: one JSON object per contract

def _requirement_from_dict(obj: Dict, where: str) -> EdgeRequirement:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ContractParseError(f"{where}: each edge entry is a one-key object")
    key, value = next(iter(obj.items()))
    if key == "auth":
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ContractParseError(f"{where}: auth takes a list of participant names")
        return AuthBy(value)
    if key == "reveal":
        if not isinstance(value, str):
            raise ContractParseError(f"{where}: reveal takes a secret label")
        return RevealReq(value)
    if key == "after":
        if not isinstance(value, int) or value < 0:
            raise ContractParseError(f"{where}: after takes a non-negative block count")
        return After(value)
    raise ContractParseError(f"{where}: unknown edge requirement {key!r}")


def _requirement_to_dict(req: EdgeRequirement) -> Dict:
    if isinstance(req, AuthBy):
        return {"auth": sorted(req.signers)}
    if isinstance(req, RevealReq):
        return {"reveal": req.label}
    return {"after": req.blocks}


def contract_from_dict(data: Dict) -> ContractTree:
    try:
        participants = tuple(sorted(data["participants"]))
        deposits = {str(k): int(v) for k, v in data["deposits"].items()}
        fee = int(data["fee"])
        secrets = tuple(SecretDecl(str(s["label"]), str(s["owner"]))
                        for s in data.get("secrets", []))
        root_obj = data["nodes"]
    except (KeyError, TypeError, AttributeError) as exc:
        raise ContractParseError(f"missing or malformed contract field: {exc}") from exc

    nodes: Dict[NodeId, NodeTemplate] = {}
    counter = iter(range(10 ** 9))

    def build(obj: Dict) -> NodeId:
        node_id = next(counter)
        try:
            name = str(obj["name"])
        except (KeyError, TypeError) as exc:
            raise ContractParseError(f"node without a name: {exc}") from exc
        edge = tuple(_requirement_from_dict(e, name) for e in obj.get("edge", []))
        outputs = []
        for entry in obj.get("outputs", []):
            try:
                outputs.append(PayoutShare(str(entry["to"]), Fraction(str(entry["share"]))))
            except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
                raise ContractParseError(f"{name}: bad payout entry: {exc}") from exc
        children = tuple(build(c) for c in obj.get("children", []))
        nodes[node_id] = NodeTemplate(node_id, name, edge, tuple(outputs), children)
        return node_id

    root = build(root_obj)
    return ContractTree(participants, deposits, fee, root, nodes, secrets)


def contract_to_dict(tree: ContractTree) -> Dict:
    def dump(node_id: NodeId) -> Dict:
        template = tree.node(node_id)
        return {
            "name": template.name,
            "edge": [_requirement_to_dict(r) for r in template.edge],
            "outputs": [{"to": s.to, "share": str(s.share)} for s in template.outputs],
            "children": [dump(c) for c in template.children],
        }

    return {
        "participants": list(tree.participants),
        "deposits": dict(sorted(tree.deposits.items())),
        "fee": tree.fee,
        "secrets": [{"label": s.label, "owner": s.owner} for s in tree.secrets],
        "nodes": dump(tree.root),
    }


def load_contract_file(path: Union[str, Path]) -> ContractTree:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContractParseError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ContractParseError(f"{path}: expected a single JSON object")
    return contract_from_dict(data)
