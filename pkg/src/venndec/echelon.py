"""Echelon trees: structured bases of tensor subspaces with distance certificates.

An index tree of height ell over dims (n_1, ..., n_ell) has nodes labeled by
partial indices: level-k nodes carry k-tuples, children extend their parent by
one coordinate, and all leaves sit at level ell.  Nodes are ordered by
post-order traversal (written J < I below): descendants come before ancestors,
and sibling subtrees follow the child order.

An echelon tree attaches a tensor T_I to every leaf I such that T_I is nonzero
at its own index while T_I(e_J, . , ..., .) vanishes for every node J that
precedes I in post-order.  Height-1 trees are exactly echelon forms produced
by Gaussian elimination with pivoting.  The leaf tensors of any echelon tree
are linearly independent, and collapsing two adjacent levels (fusing the two
index coordinates row-major) preserves the property.

``build_echelon_tree`` constructs such a tree for a subspace W with fractional
branching (alpha_1, ..., alpha_ell), meaning level-k nodes have at least
ceil(alpha_k * n_k) children, whenever

    (1 - alpha_1) * ... * (1 - alpha_ell)  >=  1 - dim(W) / (n_1 * ... * n_ell).

The construction recurses on the tensor order: fuse the first two modes, build
a flatter tree with the largest feasible second-level branching beta, keep the
level-1 nodes sharing the most common leading coordinate (at least beta * n_2
of them exist by pigeonhole), zero out that whole slice of W, and repeat.

``reduce_tree`` and ``certify_distance`` turn a tree for W into a certified
lower bound on the Euclidean distance from a rank-one tensor to the subspace
orthogonal to W: every evaluation |T_I(x_1, ..., x_ell)| / ||T_I||_F is such a
bound because T_I lies in W.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.linalg import null_space

from .tensor import Tensor, norm

__all__ = [
    "SubspaceBasis",
    "TreeNode",
    "IndexTree",
    "EchelonTree",
    "BranchingSpec",
    "TraceRecord",
    "BuildTrace",
    "Violation",
    "VerifyReport",
    "orthogonal_complement",
    "eliminate_height1",
    "build_echelon_tree",
    "collapse",
    "verify_echelon",
    "largeness",
    "reduce_tree",
    "certify_distance",
]

_RCOND = 1e-10  # rank tolerance for subspace re-projection
_PIVOT_TOL = 1e-10


# ---------------------------------------------------------------------------
# subspaces


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Orthonormal basis (columns) of a subspace of a tensor space."""

    dims: tuple[int, ...]
    vectors: np.ndarray  # (prod(dims), dim) with orthonormal columns

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        arr = np.ascontiguousarray(np.asarray(self.vectors, dtype=float))
        if arr.ndim != 2:
            raise ValueError(f"basis must be a 2-D column matrix, got shape {arr.shape}")
        ambient = math.prod(dims)
        if arr.shape[0] != ambient:
            raise ValueError(
                f"basis rows {arr.shape[0]} do not match ambient size {ambient} of dims {dims}"
            )
        if arr.shape[1] > 0:
            gram = arr.T @ arr
            if not np.allclose(gram, np.eye(arr.shape[1]), atol=1e-8):
                raise ValueError("basis columns are not orthonormal")
        arr.flags.writeable = False
        object.__setattr__(self, "vectors", arr)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def ambient(self) -> int:
        return math.prod(self.dims)

    @classmethod
    def from_span(cls, matrix: np.ndarray, dims: Sequence[int], rcond: float = _RCOND) -> "SubspaceBasis":
        """Orthonormalize a spanning set given as columns.

        Rejects numerically rank-deficient input so a caller never silently
        works with a smaller subspace than intended.
        """
        A = np.asarray(matrix, dtype=float)
        if A.ndim != 2:
            raise ValueError("spanning set must be a 2-D column matrix")
        if A.shape[1] == 0:
            return cls(tuple(dims), A.reshape(A.shape[0], 0))
        u, s, _ = np.linalg.svd(A, full_matrices=False)
        rank = int(np.sum(s > rcond * s[0])) if s.size and s[0] > 0 else 0
        if rank < A.shape[1]:
            raise ValueError(
                f"spanning set is rank-deficient: effective rank {rank} < {A.shape[1]} columns"
            )
        return cls(tuple(dims), u[:, :rank])

    def to_json_dict(self) -> dict:
        return {"dims": list(self.dims), "vectors": self.vectors.T.tolist()}

    @classmethod
    def from_json_dict(cls, obj: Mapping) -> "SubspaceBasis":
        dims = [int(d) for d in obj["dims"]]
        vecs = np.asarray(obj["vectors"], dtype=float)
        if vecs.size == 0:
            return cls(tuple(dims), np.zeros((math.prod(dims), 0)))
        return cls.from_span(vecs.T, dims)


def orthogonal_complement(v: SubspaceBasis) -> SubspaceBasis:
    """Orthonormal basis of the orthogonal complement within the same ambient."""
    if v.dim == 0:
        return SubspaceBasis(v.dims, np.eye(v.ambient))
    comp = null_space(v.vectors.T, rcond=_RCOND)
    return SubspaceBasis(v.dims, comp)


def _constrain_coords(B: np.ndarray, coords: Sequence[int], rcond: float = _RCOND) -> np.ndarray:
    """Basis of {x in span(B) : x[c] = 0 for all c in coords}."""
    if B.shape[1] == 0:
        return B
    R = B[np.asarray(coords, dtype=int), :]
    if np.max(np.abs(R)) <= 1e-12:
        return B  # constraints already hold
    N = null_space(R, rcond=rcond)
    return B @ N


def _drop_pivot(B: np.ndarray, coord: int) -> np.ndarray:
    """Single-coordinate constraint via a Householder rotation in coefficient space."""
    d = B.shape[1]
    r = B[coord, :].copy()
    nr = np.linalg.norm(r)
    if nr <= 1e-14:
        return B
    w = r / nr
    w[d - 1] += 1.0 if w[d - 1] >= 0 else -1.0
    w /= np.linalg.norm(w)
    BH = B - 2.0 * np.outer(B @ w, w)
    return np.ascontiguousarray(BH[:, : d - 1])


# ---------------------------------------------------------------------------
# trees


@dataclass(frozen=True)
class TreeNode:
    index: tuple[int, ...]
    children: tuple["TreeNode", ...] = ()

    @property
    def level(self) -> int:
        return len(self.index)

    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class IndexTree:
    """Height-ell label tree over dims; the root carries the empty label."""

    dims: tuple[int, ...]
    children: tuple[TreeNode, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "children", tuple(self.children))

    @property
    def height(self) -> int:
        return len(self.dims)

    def nodes_postorder(self) -> Iterator[TreeNode]:
        def walk(node: TreeNode) -> Iterator[TreeNode]:
            for c in node.children:
                yield from walk(c)
            yield node

        for c in self.children:
            yield from walk(c)

    def leaves(self) -> list[TreeNode]:
        return [n for n in self.nodes_postorder() if n.is_leaf()]

    def structural_problems(self) -> list[str]:
        problems: list[str] = []
        seen: set[tuple[int, ...]] = set()

        def walk(node: TreeNode, parent_index: tuple[int, ...]):
            if node.index[:-1] != parent_index or len(node.index) != len(parent_index) + 1:
                problems.append(f"label {node.index} does not extend parent {parent_index}")
            k = len(node.index) - 1
            if k >= len(self.dims) or not 0 <= node.index[-1] < self.dims[k]:
                problems.append(f"label {node.index} out of range for dims {self.dims}")
            if node.index in seen:
                problems.append(f"duplicate label {node.index}")
            seen.add(node.index)
            if node.is_leaf() and len(node.index) != self.height:
                problems.append(f"leaf {node.index} not at level {self.height}")
            for c in node.children:
                walk(c, node.index)

        for c in self.children:
            walk(c, ())
        return problems


@dataclass(frozen=True, eq=False)
class EchelonTree:
    """Index tree plus a tensor per leaf.

    ``origins`` (only set on reduced trees) maps each current leaf back to the
    leaf of the tree it was derived from, so certificates can be normalized by
    the original tensor norms.
    """

    tree: IndexTree
    leaf_tensors: Mapping[tuple[int, ...], Tensor]
    origins: Mapping[tuple[int, ...], tuple[int, ...]] | None = None

    def __post_init__(self):
        object.__setattr__(self, "leaf_tensors", dict(self.leaf_tensors))
        if self.origins is not None:
            object.__setattr__(self, "origins", dict(self.origins))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.tree.dims

    @property
    def height(self) -> int:
        return self.tree.height

    def origin_of(self, leaf_index: tuple[int, ...]) -> tuple[int, ...]:
        if self.origins is None:
            return leaf_index
        return self.origins[leaf_index]

    def to_json_dict(self) -> dict:
        def encode(node: TreeNode) -> dict:
            obj: dict = {"index": [i + 1 for i in node.index]}  # 1-based on disk
            if node.is_leaf():
                obj["tensor"] = self.leaf_tensors[node.index].to_json_dict()
            else:
                obj["children"] = [encode(c) for c in node.children]
            return obj

        return {
            "dims": list(self.dims),
            "tree": [encode(c) for c in self.tree.children],
        }

    @classmethod
    def from_json_dict(cls, obj: Mapping) -> "EchelonTree":
        dims = tuple(int(d) for d in obj["dims"])
        leaf_tensors: dict[tuple[int, ...], Tensor] = {}

        def decode(node_obj: Mapping) -> TreeNode:
            index = tuple(int(i) - 1 for i in node_obj["index"])
            if "tensor" in node_obj:
                leaf_tensors[index] = Tensor.from_json_dict(node_obj["tensor"])
                return TreeNode(index)
            return TreeNode(index, tuple(decode(c) for c in node_obj.get("children", ())))

        children = tuple(decode(c) for c in obj["tree"])
        return cls(IndexTree(dims, children), leaf_tensors)


@dataclass(frozen=True)
class BranchingSpec:
    """Target branching fractions, one per tree level."""

    alphas: tuple[float, ...]

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        object.__setattr__(self, "alphas", alphas)
        if not alphas:
            raise ValueError("branching spec needs at least one level")
        if any(not 0.0 <= a <= 1.0 for a in alphas):
            raise ValueError(f"branching fractions must lie in [0, 1], got {alphas}")

    def feasible_for(self, dim: int, dims: Sequence[int]) -> bool:
        ambient = math.prod(dims)
        lhs = math.prod(1.0 - a for a in self.alphas)
        return lhs >= 1.0 - dim / ambient - 1e-12


@dataclass(frozen=True)
class TraceRecord:
    """One growth step: at recursion ``depth``, extracting node ``step``.

    ``gamma`` is the fraction of first-mode slots already consumed, ``beta``
    the second-level branching chosen (b2/n2).  ``demand`` is the number of
    fused nodes requested from the inner build, (b2-1)*free1 + 1 by the
    pigeonhole argument; ``capacity`` is the largest demand the current
    subspace dimension supports, so demand <= capacity at every step.
    """

    depth: int
    step: int
    gamma: float
    beta: float
    subspace_dim: int
    ambient: int
    demand: int
    capacity: float


@dataclass(frozen=True)
class BuildTrace:
    dims: tuple[int, ...]
    alphas: tuple[float, ...]
    dim_w: int
    records: tuple[TraceRecord, ...]


# ---------------------------------------------------------------------------
# elimination and construction


def eliminate_height1(
    w: SubspaceBasis,
    forbidden_pivots: Sequence[int] = (),
    tol: float = _PIVOT_TOL,
) -> list[tuple[int, np.ndarray]]:
    """Pivoted elimination over a height-1 (vector) space.

    Returns (pivot, vector) pairs where vector j vanishes at all earlier
    pivots and at every forbidden coordinate, has max-norm 1, and equals 1 at
    its own pivot.  The list exhausts the subspace obtained from W by zeroing
    the forbidden coordinates.
    """
    if len(w.dims) != 1:
        raise ValueError(f"height-1 elimination needs a vector space, got dims {w.dims}")
    B = w.vectors
    if forbidden_pivots:
        B = _constrain_coords(B, sorted(set(int(c) for c in forbidden_pivots)))
    if B.shape[1] == 0:
        raise ValueError("subspace is trivial after forbidding the given coordinates")
    return _eliminate(B, needed=None, tol=tol)


def _eliminate(B: np.ndarray, needed: int | None, tol: float = _PIVOT_TOL) -> list[tuple[int, np.ndarray]]:
    out: list[tuple[int, np.ndarray]] = []
    while B.shape[1] > 0 and (needed is None or len(out) < needed):
        row_norms = np.linalg.norm(B, axis=1)
        p_star = int(np.argmax(row_norms))
        if row_norms[p_star] <= tol:
            # numerically everything left is below pivot tolerance
            if needed is None:
                break
            raise ValueError(
                f"pivot collapse: all candidate magnitudes <= {tol} with {B.shape[1]} dims left"
            )
        v = B @ (B[p_star, :] / row_norms[p_star])
        pivot = int(np.argmax(np.abs(v)))
        v = v / v[pivot]  # pivot entry becomes exactly 1, max-norm 1
        out.append((pivot, v))
        B = _drop_pivot(B, pivot)
    if needed is not None and len(out) < needed:
        raise ValueError(f"subspace exhausted after {len(out)} pivots, needed {needed}")
    return out


@dataclass
class _Draft:
    first: int
    children: list["_Draft"]
    vector: np.ndarray | None = None


def build_echelon_tree(
    w: SubspaceBasis,
    spec: BranchingSpec,
    tol: float = _PIVOT_TOL,
) -> tuple[EchelonTree, BuildTrace]:
    """Construct an echelon tree for W with the given fractional branching.

    Raises ValueError when the spec is infeasible for dim(W) or when pivots
    collapse numerically.  Leaf tensors come out with max-norm 1 and entry
    exactly 1 at their own index.  Deterministic: ties in pivot choice and in
    the pigeonhole step are broken toward the smallest index.
    """
    dims = w.dims
    if len(spec.alphas) != len(dims):
        raise ValueError(
            f"spec has {len(spec.alphas)} levels, tensor space has {len(dims)} modes"
        )
    if not spec.feasible_for(w.dim, dims):
        lhs = math.prod(1.0 - a for a in spec.alphas)
        raise ValueError(
            f"infeasible branching spec: prod(1-alpha) = {lhs:.6g} < "
            f"1 - dim(W)/ambient = {1.0 - w.dim / w.ambient:.6g}"
        )
    records: list[TraceRecord] = []
    needed = math.ceil(spec.alphas[0] * dims[0] - 1e-9)
    drafts = _build(
        w.vectors, dims, dims[0], needed, spec.alphas[1:], tol=tol, records=records, depth=0
    )

    leaf_tensors: dict[tuple[int, ...], Tensor] = {}

    def to_node(draft: _Draft, prefix: tuple[int, ...]) -> TreeNode:
        index = prefix + (draft.first,)
        if draft.vector is not None:
            leaf_tensors[index] = Tensor(draft.vector.reshape(dims))
            return TreeNode(index)
        return TreeNode(index, tuple(to_node(c, index) for c in draft.children))

    children = tuple(to_node(d, ()) for d in drafts)
    tree = EchelonTree(IndexTree(dims, children), leaf_tensors)
    trace = BuildTrace(dims=dims, alphas=spec.alphas, dim_w=w.dim, records=tuple(records))
    return tree, trace


def _build(
    B: np.ndarray,
    dims: tuple[int, ...],
    n1_free: int,
    needed: int,
    rest_alphas: tuple[float, ...],
    *,
    tol: float,
    records: list[TraceRecord],
    depth: int,
) -> list[_Draft]:
    if needed <= 0:
        return []
    if len(dims) == 1:
        pairs = _eliminate(B, needed=needed, tol=tol)
        return [_Draft(first=p, children=[], vector=v) for p, v in pairs]

    n1, n2 = dims[0], dims[1]
    rest = dims[2:]
    rest_stride = math.prod(rest)
    rest_prod = math.prod(1.0 - a for a in rest_alphas[1:])
    min_b2 = math.ceil(rest_alphas[0] * n2 - 1e-9)

    drafts: list[_Draft] = []
    eliminated = 0
    while len(drafts) < needed:
        free1 = n1_free - eliminated
        d = B.shape[1]
        ambient_eff = free1 * n2 * rest_stride
        if free1 <= 0 or d == 0:
            raise ValueError(
                f"ran out of subspace at depth {depth}: {len(drafts)}/{needed} nodes built"
            )
        # capacity: the inner build can supply at most cap_frac * free1 * n2
        # fused nodes, where (1 - cap_frac) * rest_prod = 1 - d/ambient
        if rest_prod <= 0.0:
            cap_frac = 1.0
        else:
            cap_frac = 1.0 - (1.0 - d / ambient_eff) / rest_prod
        capacity = cap_frac * free1 * n2
        x_max = math.floor(capacity + 1e-9)
        # largest b2 whose pigeonhole demand (b2-1)*free1 + 1 fits the capacity
        if x_max < 1:
            b2 = 0
        else:
            b2 = min(n2, (x_max - 1) // free1 + 1)
        if b2 < max(min_b2, 1):
            raise ValueError(
                f"branching infeasible at depth {depth} step {len(drafts)}: "
                f"best second-level fraction {b2}/{n2} below required {min_b2}/{n2}"
            )
        demand = (b2 - 1) * free1 + 1
        records.append(
            TraceRecord(
                depth=depth,
                step=len(drafts),
                gamma=len(drafts) / n1,
                beta=b2 / n2,
                subspace_dim=d,
                ambient=ambient_eff,
                demand=demand,
                capacity=capacity,
            )
        )

        inner = _build(
            B,
            (n1 * n2, *rest),
            free1 * n2,
            demand,
            rest_alphas[1:],
            tol=tol,
            records=records,
            depth=depth + 1,
        )
        # pigeonhole: some leading coordinate owns >= b2 of the fused nodes
        buckets: dict[int, list[_Draft]] = {}
        for node in inner:
            buckets.setdefault(node.first // n2, []).append(node)
        qualified = sorted(i1 for i1, lst in buckets.items() if len(lst) >= b2)
        if not qualified:
            raise ValueError(f"pigeonhole failed at depth {depth}: no coordinate with {b2} nodes")
        i1 = qualified[0]
        batch = buckets[i1]
        drafts.append(
            _Draft(
                first=i1,
                children=[_Draft(first=d_.first % n2, children=d_.children, vector=d_.vector) for d_ in batch],
            )
        )
        if len(drafts) < needed:
            stride = n2 * rest_stride
            B = _constrain_coords(B, range(i1 * stride, (i1 + 1) * stride))
        eliminated += 1
    return drafts


# ---------------------------------------------------------------------------
# verification and certificates


@dataclass(frozen=True)
class Violation:
    kind: str
    node: tuple[int, ...]
    against: tuple[int, ...] | None
    value: float

    def __str__(self) -> str:
        if self.against is None:
            return f"{self.kind} at {self.node}: {self.value:.3e}"
        return f"{self.kind} at {self.node} vs {self.against}: {self.value:.3e}"


@dataclass(frozen=True)
class VerifyReport:
    ok: bool
    violations: tuple[Violation, ...]


def verify_echelon(t: EchelonTree, tolerance: float = 1e-9) -> VerifyReport:
    """Check the echelon property leaf by leaf.

    A leaf I must satisfy |T_I(e_I)| > tolerance, and for every node J that
    precedes it in post-order the whole slice T_I[J, ...] must vanish within
    tolerance.  Structural label defects are reported as violations too.
    """
    violations: list[Violation] = []
    for msg in t.tree.structural_problems():
        violations.append(Violation(f"structure: {msg}", (), None, 0.0))

    order = list(t.tree.nodes_postorder())
    leaf_set = {n.index for n in order if n.is_leaf()}
    if leaf_set != set(t.leaf_tensors):
        violations.append(
            Violation(
                f"leaf tensors keyed {sorted(t.leaf_tensors)} but tree has leaves {sorted(leaf_set)}",
                (),
                None,
                0.0,
            )
        )
        return VerifyReport(ok=False, violations=tuple(violations))

    for tensor in t.leaf_tensors.values():
        if tensor.dims != t.dims:
            violations.append(Violation("leaf tensor shape mismatch", (), None, 0.0))
            return VerifyReport(ok=False, violations=tuple(violations))

    for pos, node in enumerate(order):
        if not node.is_leaf():
            continue
        data = t.leaf_tensors[node.index].data
        pivot_val = abs(float(data[node.index]))
        if not pivot_val > tolerance:
            violations.append(Violation("pivot below tolerance", node.index, None, pivot_val))
        for j_node in order[:pos]:
            sub = data[j_node.index]
            worst = float(np.max(np.abs(sub)))
            if worst > tolerance:
                violations.append(Violation("nonzero before pivot", node.index, j_node.index, worst))
    return VerifyReport(ok=not violations, violations=tuple(violations))


def branching_counts(t: EchelonTree) -> dict[int, int]:
    """Minimum child count per level (level k counts children of level-(k-1) nodes)."""
    counts: dict[int, int] = {}
    nodes = [(0, TreeNode((), t.tree.children))] + [
        (n.level, n) for n in t.tree.nodes_postorder() if not n.is_leaf()
    ]
    for level, node in nodes:
        k = level + 1
        counts[k] = min(counts.get(k, len(node.children)), len(node.children))
    return counts


def largeness(t: EchelonTree) -> float:
    """Smallest own-pivot magnitude min_I |T_I(e_I)| over the leaves."""
    if not t.leaf_tensors:
        raise ValueError("largeness of an empty tree is undefined")
    return min(abs(float(tensor.data[idx])) for idx, tensor in t.leaf_tensors.items())


def collapse(t: EchelonTree, mode: int) -> EchelonTree:
    """Fuse tree levels mode+1 and mode+2 (0-based mode pairs with mode+1).

    Level-(mode+1) nodes disappear; their children reattach to the grandparent
    in child-major order, with index coordinates mode and mode+1 fused
    row-major.  Leaf tensors are reshaped, never permuted.
    """
    ell = t.height
    if ell < 2:
        raise ValueError("cannot collapse a height-1 tree")
    if not 0 <= mode <= ell - 2:
        raise ValueError(f"mode must lie in [0, {ell - 2}], got {mode}")
    d2 = t.dims[mode + 1]
    new_dims = t.dims[:mode] + (t.dims[mode] * d2,) + t.dims[mode + 2 :]

    def fuse(index: tuple[int, ...]) -> tuple[int, ...]:
        return index[:mode] + (index[mode] * d2 + index[mode + 1],) + index[mode + 2 :]

    def relabel(node: TreeNode) -> TreeNode:
        return TreeNode(fuse(node.index), tuple(relabel(c) for c in node.children))

    def rebuild(node: TreeNode) -> TreeNode:
        if node.level == mode:
            grandkids = [g for c in node.children for g in c.children]
            return TreeNode(node.index, tuple(relabel(g) for g in grandkids))
        return TreeNode(node.index, tuple(rebuild(c) for c in node.children))

    if mode == 0:
        children = tuple(relabel(g) for c in t.tree.children for g in c.children)
    else:
        children = tuple(rebuild(c) for c in t.tree.children)

    leaf_tensors = {
        fuse(idx): Tensor(tensor.data.reshape(new_dims)) for idx, tensor in t.leaf_tensors.items()
    }
    return EchelonTree(IndexTree(new_dims, children), leaf_tensors)


def reduce_tree(t: EchelonTree, chi: np.ndarray) -> EchelonTree:
    """Contract the last mode with chi, keeping one leaf per bottom parent.

    Each level-(ell-1) node J picks, among its leaf children, the contracted
    candidate with the largest |value at e_J| (first wins on ties) and becomes
    a leaf of the shorter tree.  All echelon zero-patterns survive the
    contraction; the chosen pivot may be zero, in which case the result simply
    has largeness 0 rather than raising.
    """
    ell = t.height
    if ell < 2:
        raise ValueError("reduce needs a tree of height >= 2")
    chi = np.asarray(chi, dtype=float).ravel()
    if chi.size != t.dims[-1]:
        raise ValueError(f"direction has length {chi.size}, expected {t.dims[-1]}")

    new_dims = t.dims[:-1]
    leaf_tensors: dict[tuple[int, ...], Tensor] = {}
    origins: dict[tuple[int, ...], tuple[int, ...]] = {}

    def rebuild(node: TreeNode) -> TreeNode:
        if node.level == ell - 1:
            best_val = -1.0
            best: tuple[np.ndarray, tuple[int, ...]] | None = None
            for c in node.children:
                contracted = np.tensordot(t.leaf_tensors[c.index].data, chi, axes=([ell - 1], [0]))
                val = abs(float(contracted[node.index]))
                if val > best_val:
                    best_val = val
                    best = (contracted, c.index)
            assert best is not None  # leaves always exist below a bottom parent
            leaf_tensors[node.index] = Tensor(best[0])
            origins[node.index] = t.origin_of(best[1])
            return TreeNode(node.index)
        return TreeNode(node.index, tuple(rebuild(c) for c in node.children))

    children = tuple(rebuild(c) for c in t.tree.children)
    return EchelonTree(IndexTree(new_dims, children), leaf_tensors, origins=origins)


def certify_distance(
    t: EchelonTree,
    chis: Sequence[np.ndarray],
    original: EchelonTree | None = None,
) -> float:
    """Certified lower bound on dist(chi_1 (x) ... (x) chi_ell, span(W)^perp)...

    More precisely: for a tree whose leaf tensors lie in W, returns
    max_I |T_I(chi_1, ..., chi_ell)| / ||T_I||_F over the leaf chains that
    survive successive reduction, which lower-bounds the Euclidean distance
    from the rank-one tensor to any subspace orthogonal to W.  Always
    sound, possibly loose; returns 0.0 when every surviving chain evaluates
    to zero.
    """
    ell = t.height
    if len(chis) != ell:
        raise ValueError(f"need {ell} direction vectors, got {len(chis)}")
    base = original if original is not None else t
    cur = t
    for k in range(ell - 1, 0, -1):
        cur = reduce_tree(cur, chis[k])
    chi0 = np.asarray(chis[0], dtype=float).ravel()
    if chi0.size != t.dims[0]:
        raise ValueError(f"direction 0 has length {chi0.size}, expected {t.dims[0]}")
    best = 0.0
    for idx, tensor in cur.leaf_tensors.items():
        val = abs(float(np.dot(tensor.data, chi0)))
        origin = cur.origin_of(idx) if cur.origins is not None else idx
        nf = norm(base.leaf_tensors[origin], "frobenius")
        if nf > 0.0:
            best = max(best, val / nf)
    return best
