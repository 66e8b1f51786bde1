"""
Semantic-aligned branch: visual embedding f_v and the semantic DAG g.

Node 0 of the DAG is the projection of the class attributes; intermediate
nodes 1..n_nodes each receive one edge from every earlier node. Edges are
keyed (i, j) with i < j.
"""
import enum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import attrs
import numpy as np

from dvbe_lab.exceptions import ValidationError
from numerics import Tensor
from numerics.rng import msra_mirrored, msra_normal

Edge = Tuple[int, int]


class OperationKind(str, enum.Enum):
    """Candidate edge operations; member order is the tie-break order"""
    FULLY_CONNECTED = "fully_connected"
    GRAPH_CONVOLUTION = "graph_convolution"
    SKIP_CONNECTION = "skip_connection"
    NONE = "none"

    @property
    def index(self) -> int:
        return list(OperationKind).index(self)

    @classmethod
    def from_index(cls, index: int) -> "OperationKind":
        return list(cls)[int(index)]


class SemanticHead(str, enum.Enum):
    HAND_DESIGNED = "hand_designed"
    SEARCHED = "searched"


def dag_edges(n_nodes: int) -> List[Edge]:
    """Every (i, j) with 0 <= i < j <= n_nodes, ordered by j then i."""
    return [(i, j) for j in range(1, n_nodes + 1) for i in range(j)]


def edge_key(edge: Edge) -> str:
    return f"{edge[0]}_{edge[1]}"


@attrs.define(eq=False)
class ArchParams:
    """Continuous architecture scores α, one 4-vector per DAG edge."""
    n_nodes: int
    alpha: Dict[Edge, Tensor]

    def __attrs_post_init__(self):
        missing = [edge for edge in dag_edges(self.n_nodes) if edge not in self.alpha]
        if missing:
            raise ValidationError(f"Architecture scores missing for edges {missing}")
        for edge, scores in self.alpha.items():
            if scores.shape != (len(OperationKind),):
                raise ValidationError(f"Edge {edge}: expected {len(OperationKind)} scores, got shape {scores.shape}")

    @classmethod
    def initialize(cls, n_nodes: int, rng: Optional[np.random.Generator] = None, scale: float = 1e-3) -> "ArchParams":
        if n_nodes < 1:
            raise ValidationError(f"n_nodes must be at least 1, got {n_nodes}")
        alpha = {}
        for edge in dag_edges(n_nodes):
            values = np.zeros(len(OperationKind)) if rng is None else scale * rng.normal(size=len(OperationKind))
            alpha[edge] = Tensor(values, requires_grad=True, name=f"alpha.{edge_key(edge)}")
        return cls(n_nodes=n_nodes, alpha=alpha)

    def parameters(self) -> Dict[str, Tensor]:
        return {f"alpha.{edge_key(edge)}": self.alpha[edge] for edge in dag_edges(self.n_nodes)}


@attrs.frozen
class CellSpec:
    """Discretized architecture: one operation per edge."""
    n_nodes: int
    operations: Dict[Edge, OperationKind] = attrs.field(
        converter=lambda ops: {tuple(edge): OperationKind(kind) for edge, kind in dict(ops).items()}
    )

    def __attrs_post_init__(self):
        expected = set(dag_edges(self.n_nodes))
        if set(self.operations) != expected:
            raise ValidationError(f"Cell edges {sorted(self.operations)} do not cover the DAG {sorted(expected)}")
        for node in range(1, self.n_nodes + 1):
            if not self.retained_inputs(node):
                raise ValidationError(f"Node {node} keeps no non-none input edge")

    def retained_inputs(self, node: int) -> List[int]:
        return [i for i in range(node) if self.operations[(i, node)] is not OperationKind.NONE]

    def edges(self) -> Iterator[Tuple[Edge, OperationKind]]:
        for edge in dag_edges(self.n_nodes):
            yield edge, self.operations[edge]


Architecture = Union[ArchParams, CellSpec, None]

HAND_LAYERS = 2
# every semantic-branch bias starts here; relu weights use msra_mirrored
BIAS_INIT = 0.1


@attrs.define(eq=False)
class S2vModel:
    """
    f_v: GAP → linear → relu → L2. g: attribute projection then either the DAG
    (ArchParams / CellSpec) or the hand-designed FC+relu then linear FC stack
    (arch None). The adjacency spans every class in class_ids order.
    """
    fv_weight: Tensor
    fv_bias: Tensor
    projection: Tensor
    head_weights: Dict[str, Tensor]
    adjacency: np.ndarray
    class_ids: tuple = attrs.field(converter=lambda ids: tuple(int(c) for c in ids))
    n_nodes: int = 3
    arch: Architecture = None

    def __attrs_post_init__(self):
        if list(self.class_ids) != sorted(set(self.class_ids)):
            raise ValidationError("class_ids must be strictly increasing")
        k = len(self.class_ids)
        if self.adjacency.shape != (k, k):
            raise ValidationError(f"Adjacency shape {self.adjacency.shape} does not match {k} classes")
        if self.arch is not None and self.arch.n_nodes != self.n_nodes:
            raise ValidationError(f"Architecture has {self.arch.n_nodes} nodes, model has {self.n_nodes}")

    @property
    def channels(self) -> int:
        return self.fv_weight.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.fv_weight.shape[1]

    @property
    def attr_dim(self) -> int:
        return self.projection.shape[0]

    @property
    def hand_designed(self) -> bool:
        return self.arch is None

    @property
    def searching(self) -> bool:
        return isinstance(self.arch, ArchParams)

    def class_rows(self, class_ids: Sequence[int]) -> np.ndarray:
        rows = {class_id: row for row, class_id in enumerate(self.class_ids)}
        unknown = sorted({int(c) for c in class_ids if int(c) not in rows})
        if unknown:
            raise ValidationError(f"Classes {unknown} are unknown to the semantic model")
        return np.array([rows[int(c)] for c in class_ids], dtype=np.int64)

    def weight(self, name: str) -> Tensor:
        return self.head_weights[name]

    def parameters(self) -> Dict[str, Tensor]:
        """Network weights; architecture scores are listed by arch_parameters()."""
        params = {"fv_weight": self.fv_weight, "fv_bias": self.fv_bias, "projection": self.projection}
        params.update((name, self.head_weights[name]) for name in sorted(self.head_weights))
        return params

    def arch_parameters(self) -> Dict[str, Tensor]:
        return self.arch.parameters() if self.searching else {}

    def with_cell(self, cell: CellSpec) -> "S2vModel":
        """Same weights, discrete architecture."""
        if self.hand_designed:
            raise ValidationError("A hand-designed semantic head has no architecture to replace")
        return attrs.evolve(self, arch=cell)

    @classmethod
    def initialize(
        cls,
        rng: np.random.Generator,
        channels: int,
        attr_dim: int,
        embed_dim: int,
        class_ids: Sequence[int],
        adjacency: np.ndarray,
        n_nodes: int = 3,
        head=SemanticHead.SEARCHED,
    ) -> "S2vModel":
        head = SemanticHead(head)

        def weight(name, shape, init=msra_normal):
            return Tensor(init(rng, shape), requires_grad=True, name=name)

        def relu_weight(name, shape):
            return weight(name, shape, msra_mirrored)

        def bias(name):
            return Tensor(np.full(embed_dim, BIAS_INIT), requires_grad=True, name=name)

        head_weights = {}
        if head is SemanticHead.HAND_DESIGNED:
            for layer in range(1, HAND_LAYERS + 1):
                init = msra_mirrored if layer < HAND_LAYERS else msra_normal
                head_weights[f"hand.{layer}.weight"] = weight(f"hand.{layer}.weight", (embed_dim, embed_dim), init)
                head_weights[f"hand.{layer}.bias"] = bias(f"hand.{layer}.bias")
            arch = None
        else:
            for edge in dag_edges(n_nodes):
                key = edge_key(edge)
                head_weights[f"edge.{key}.fc.weight"] = relu_weight(f"edge.{key}.fc.weight", (embed_dim, embed_dim))
                head_weights[f"edge.{key}.fc.bias"] = bias(f"edge.{key}.fc.bias")
                head_weights[f"edge.{key}.gc.weight"] = relu_weight(f"edge.{key}.gc.weight", (embed_dim, embed_dim))
            arch = ArchParams.initialize(n_nodes, rng)

        return cls(
            fv_weight=relu_weight("fv_weight", (channels, embed_dim)),
            fv_bias=bias("fv_bias"),
            projection=weight("projection", (attr_dim, embed_dim)),
            head_weights=head_weights,
            adjacency=np.asarray(adjacency, dtype=np.float64),
            class_ids=class_ids,
            n_nodes=n_nodes,
            arch=arch,
        )
