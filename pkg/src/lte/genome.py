"""Recurrent-cell genotypes: a DAG of activation nodes, each wired to one
earlier node (index 0 is the cell input). Mutation moves exactly one edit
step: change a node's activation, rewire a node, or append a node.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .autodiff import RandomStream
from .errors import GenotypeError, ParseError

NODE_CAP = 8
# Distance returned when two genotypes are not one append apart.
FAR_APART = 10**9


class Activation(str, Enum):
    RELU = "relu"
    IDENTITY = "identity"
    TANH = "tanh"
    SIGMOID = "sigmoid"


_ACTIVATION_ORDER = (Activation.RELU, Activation.IDENTITY, Activation.TANH, Activation.SIGMOID)


@dataclass(frozen=True)
class GenotypeNode:
    activation: Activation
    connection: int  # index of the predecessor node; 0 is the cell input


@dataclass(frozen=True)
class Genotype:
    nodes: tuple[GenotypeNode, ...]
    node_cap: int = NODE_CAP

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))

    def __len__(self) -> int:
        return len(self.nodes)


def validate_genotype(g: Genotype) -> list[str]:
    """Return all constraint violations; an empty list means valid."""
    problems = []
    if not 1 <= len(g.nodes) <= g.node_cap:
        problems.append(f"node count {len(g.nodes)} outside [1, {g.node_cap}]")
    for i, node in enumerate(g.nodes, start=1):
        if not isinstance(node.activation, Activation):
            problems.append(f"node {i}: unknown activation {node.activation!r}")
        if not 0 <= node.connection < i:
            problems.append(f"node {i}: connection {node.connection} must lie in [0, {i - 1}]")
    return problems


def _require_valid(g: Genotype) -> None:
    problems = validate_genotype(g)
    if problems:
        raise GenotypeError("; ".join(problems))


def initial_genotype(rng: RandomStream, node_cap: int = NODE_CAP) -> Genotype:
    """Single node wired to the cell input, activation drawn uniformly."""
    act = _ACTIVATION_ORDER[rng.integers(len(_ACTIVATION_ORDER))]
    return Genotype(nodes=(GenotypeNode(act, 0),), node_cap=node_cap)


def mutate_genotype(g: Genotype, rng: RandomStream) -> Genotype:
    """Copy of `g` exactly one edit away.

    The edit kind is uniform over whichever of the three are feasible:
    activation changes are always possible, rewiring needs a node with more
    than one predecessor choice, and appending needs room under the cap.
    Resampled values exclude the current one so the edit always lands.
    """
    _require_valid(g)
    nodes = list(g.nodes)
    kinds = ["activation"]
    if len(nodes) >= 2:
        kinds.append("connection")
    if len(nodes) < g.node_cap:
        kinds.append("append")
    kind = kinds[rng.integers(len(kinds))]

    if kind == "activation":
        j = int(rng.integers(len(nodes)))
        options = [a for a in _ACTIVATION_ORDER if a is not nodes[j].activation]
        nodes[j] = GenotypeNode(options[rng.integers(len(options))], nodes[j].connection)
    elif kind == "connection":
        # Only nodes past the first have an alternative predecessor.
        j = 1 + int(rng.integers(len(nodes) - 1))
        options = [c for c in range(j + 1) if c != nodes[j].connection]
        nodes[j] = GenotypeNode(nodes[j].activation, options[rng.integers(len(options))])
    else:
        act = _ACTIVATION_ORDER[rng.integers(len(_ACTIVATION_ORDER))]
        conn = int(rng.integers(len(nodes) + 1))
        nodes.append(GenotypeNode(act, conn))

    return Genotype(nodes=tuple(nodes), node_cap=g.node_cap)


def edit_distance(g1: Genotype, g2: Genotype) -> int:
    """Node-level edit count; FAR_APART when not reachable by one append."""
    _require_valid(g1)
    _require_valid(g2)
    if len(g1) == len(g2):
        return sum(a != b for a, b in zip(g1.nodes, g2.nodes))
    short, long_ = (g1, g2) if len(g1) < len(g2) else (g2, g1)
    if len(long_) - len(short) == 1:
        return 1 + sum(a != b for a, b in zip(short.nodes, long_.nodes))
    return FAR_APART


def serialize_genotype(g: Genotype) -> str:
    _require_valid(g)
    payload = {
        "nodes": [{"activation": n.activation.value, "connection": n.connection} for n in g.nodes],
        "node_cap": g.node_cap,
    }
    return json.dumps(payload, separators=(",", ":"))


def parse_genotype(text: str) -> Genotype:
    """Inverse of serialize_genotype; `node_cap` is optional and defaults to 8."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid genotype JSON: {e.msg}", position=e.pos) from e
    if not isinstance(payload, dict) or "nodes" not in payload:
        raise ParseError("genotype JSON must be an object with a 'nodes' array")
    raw_nodes = payload["nodes"]
    if not isinstance(raw_nodes, list):
        raise ParseError("'nodes' must be an array")
    nodes = []
    for i, entry in enumerate(raw_nodes):
        if not isinstance(entry, dict):
            raise ParseError(f"node {i} is not an object", position=f"nodes[{i}]")
        try:
            act = Activation(entry["activation"])
        except (KeyError, ValueError):
            raise ParseError(
                f"node {i}: activation must be one of {[a.value for a in _ACTIVATION_ORDER]}",
                position=f"nodes[{i}].activation",
            ) from None
        conn = entry.get("connection")
        if not isinstance(conn, int) or isinstance(conn, bool) or conn < 0:
            raise ParseError(f"node {i}: connection must be a non-negative integer",
                             position=f"nodes[{i}].connection")
        nodes.append(GenotypeNode(act, conn))
    cap = payload.get("node_cap", NODE_CAP)
    if not isinstance(cap, int) or isinstance(cap, bool) or cap < 1:
        raise ParseError("'node_cap' must be a positive integer", position="node_cap")
    g = Genotype(nodes=tuple(nodes), node_cap=cap)
    problems = validate_genotype(g)
    if problems:
        raise ParseError("; ".join(problems))
    return g
