"""Tensor rank decomposition by simultaneous diagonalization, and conditioning.

``jennrich`` recovers the terms of a third-order tensor
T = sum_j w_j a_j (x) b_j (x) c_j from two random contractions along the third
mode: M_x = sum_j w_j (c_j . x) a_j b_j^T and likewise M_y.  When the a_j and
b_j are linearly independent and the ratios (c_j . x)/(c_j . y) are distinct,
the eigenvectors of M_x pinv(M_y) are the a_j and those of the transposed
problem are the b_j; the c_j then come out of a linear solve.

Higher-order tensors are handled by grouping modes into three blocks and
un-grouping each recovered factor as a rank-one matrix or tensor
(``recover_rank_one_terms``).

``condition_report`` summarizes how well-posed such a decomposition is for a
given factor matrix: its extreme singular values, the leave-one-out distances
from each column to the span of the others, and the separation of the
c-factors that the eigenvalue step relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import pinv, svdvals

from .rng import generator
from .tensor import ModePartition, Tensor, group, outer

__all__ = [
    "RankOneTerm",
    "DecompositionResult",
    "ConditionReport",
    "jennrich",
    "group_for_jennrich",
    "recover_rank_one_terms",
    "factor_rank_one",
    "condition_report",
    "leave_one_out_distances",
]

_EIG_GAP_TOL = 1e-8
_MAX_PROBE_RETRIES = 5
_RCOND = 1e-12


@dataclass(frozen=True, eq=False)
class RankOneTerm:
    """One recovered term scale * factors[0] (x) ... (x) factors[ell-1].

    Factors are unit 2-norm with a sign convention (first coordinate of
    magnitude above 1e-8 of the max is positive); the scale absorbs the rest.
    ``residual`` is a per-term diagnostic, see the producing routine.
    """

    factors: tuple[np.ndarray, ...]
    scale: float
    residual: float

    def __post_init__(self):
        fixed = []
        for f in self.factors:
            arr = np.ascontiguousarray(np.asarray(f, dtype=float).ravel())
            arr.flags.writeable = False
            fixed.append(arr)
        object.__setattr__(self, "factors", tuple(fixed))

    @property
    def order(self) -> int:
        return len(self.factors)

    def tensor(self) -> Tensor:
        return Tensor(self.scale * outer(self.factors).data)


@dataclass(frozen=True, eq=False)
class DecompositionResult:
    """Recovered terms plus residual diagnostics.

    ``max_residual`` is the worst per-term diagnostic; ``recon_residual`` is
    the global misfit ||T - sum of terms||_F against the decomposed tensor.
    """

    terms: tuple[RankOneTerm, ...]
    max_residual: float
    recon_residual: float

    @property
    def rank(self) -> int:
        return len(self.terms)

    def reconstruct(self) -> Tensor:
        if not self.terms:
            raise ValueError("empty decomposition has no defined shape")
        total = sum(term.tensor().data for term in self.terms)
        return Tensor(total)


def _fix_sign(v: np.ndarray) -> tuple[np.ndarray, float]:
    """Flip so the first coordinate of non-negligible magnitude is positive."""
    thresh = 1e-8 * np.max(np.abs(v)) if v.size else 0.0
    for x in v:
        if abs(x) > thresh:
            return (v, 1.0) if x > 0 else (-v, -1.0)
    return v, 1.0


def _match_eigen(lam_a: np.ndarray, lam_b: np.ndarray) -> list[int]:
    """Greedy pairing of two eigenvalue lists by closeness."""
    m = len(lam_a)
    taken = [False] * m
    pairing = [-1] * m
    order = np.argsort(-np.abs(lam_a))
    for i in order:
        dists = [abs(lam_a[i] - lam_b[j]) if not taken[j] else math.inf for j in range(m)]
        j = int(np.argmin(dists))
        pairing[i] = j
        taken[j] = True
    return pairing


def _als_refit(
    data: np.ndarray, A: np.ndarray, B: np.ndarray, max_rounds: int = 40
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Polish factor estimates by alternating least squares.

    Keeps A and B unit-column, returns (A, B, C_scaled) where C_scaled has
    one scaled third-mode factor per row.  Strips the eigenvector
    perturbation left by the diagonalization step; stops once the fit stalls.
    """
    n1, n2, n3 = data.shape

    def normalized(M: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(M, axis=0)
        return M / np.where(norms > 0, norms, 1.0)

    kr_ab = np.einsum("ir,jr->ijr", A, B).reshape(n1 * n2, -1)
    C = np.linalg.lstsq(kr_ab, data.reshape(n1 * n2, n3), rcond=_RCOND)[0]
    prev = float(np.linalg.norm(data.reshape(n1 * n2, n3) - kr_ab @ C))
    for _ in range(max_rounds):
        kr_bc = np.einsum("jr,kr->jkr", B, C.T).reshape(n2 * n3, -1)
        A = normalized(np.linalg.lstsq(kr_bc, data.reshape(n1, -1).T, rcond=_RCOND)[0].T)
        kr_ac = np.einsum("ir,kr->ikr", A, C.T).reshape(n1 * n3, -1)
        unf2 = np.moveaxis(data, 1, 0).reshape(n2, -1)
        B = normalized(np.linalg.lstsq(kr_ac, unf2.T, rcond=_RCOND)[0].T)
        kr_ab = np.einsum("ir,jr->ijr", A, B).reshape(n1 * n2, -1)
        C = np.linalg.lstsq(kr_ab, data.reshape(n1 * n2, n3), rcond=_RCOND)[0]
        res = float(np.linalg.norm(data.reshape(n1 * n2, n3) - kr_ab @ C))
        if res >= prev * (1.0 - 1e-3):
            break
        prev = res
    return A, B, C


def jennrich(t: Tensor, m: int, seed: int = 0) -> DecompositionResult:
    """Decompose a third-order tensor into m rank-one terms.

    Compresses the first two modes to rank m, draws Gaussian probe vectors for
    the third mode, and diagonalizes M_x pinv(M_y); if eigenvalues collide
    (relative gap below 1e-8) the probes are redrawn, up to 5 times, before
    giving up with a ValueError.  The per-term residual is the relative
    mismatch between the eigenvalue recovered from the a-side and from the
    b-side problem, which is zero in exact arithmetic.
    """
    if t.order != 3:
        raise ValueError(f"simultaneous diagonalization needs an order-3 tensor, got order {t.order}")
    n1, n2, n3 = t.dims
    if not 1 <= m <= min(n1, n2):
        raise ValueError(f"rank m={m} must lie in [1, min(n1, n2)] = [1, {min(n1, n2)}]")

    rng = generator(seed, "jennrich")
    # compress modes 1 and 2 onto their top-m singular subspaces so that the
    # pencil below is m x m; without this, noise directions of a full-rank
    # slice blow up through the pseudoinverse
    unf1 = t.data.reshape(n1, n2 * n3)
    unf2 = np.moveaxis(t.data, 1, 0).reshape(n2, n1 * n3)
    u1 = np.linalg.svd(unf1, full_matrices=False)[0][:, :m]
    u2 = np.linalg.svd(unf2, full_matrices=False)[0][:, :m]
    core = np.einsum("ia,jb,ijk->abk", u1, u2, t.data)

    last_gap = math.inf
    for _ in range(_MAX_PROBE_RETRIES):
        x = rng.standard_normal(n3)
        y = rng.standard_normal(n3)
        mx = np.tensordot(core, x, axes=([2], [0]))
        my = np.tensordot(core, y, axes=([2], [0]))

        la, ua = np.linalg.eig(mx @ pinv(my, rtol=_RCOND))
        lb, ub = np.linalg.eig(mx.T @ pinv(my.T, rtol=_RCOND))

        scale = max(np.max(np.abs(la)), 1e-300)
        gaps = [abs(la[i] - la[j]) / scale for i in range(m) for j in range(i + 1, m)]
        last_gap = min(gaps) if gaps else math.inf
        if last_gap < _EIG_GAP_TOL:
            continue  # eigenvalue collision, retry with fresh probes

        pairing = _match_eigen(la, lb)
        a_cols: list[np.ndarray] = []
        b_cols: list[np.ndarray] = []
        residuals: list[float] = []
        for i in range(m):
            ai = u1 @ np.real(ua[:, i])
            bi = u2 @ np.real(ub[:, pairing[i]])
            a_cols.append(ai / np.linalg.norm(ai))
            b_cols.append(bi / np.linalg.norm(bi))
            # both side problems share the eigenvalue (c_j.x)/(c_j.y)
            mismatch = abs(la[i] - lb[pairing[i]])
            residuals.append(float(mismatch / max(abs(la[i]), 1e-300)))

        A = np.column_stack(a_cols)
        B = np.column_stack(b_cols)
        A, B, c_scaled = _als_refit(t.data, A, B)

        terms = []
        for i in range(m):
            ai, sa = _fix_sign(A[:, i])
            bi, sb = _fix_sign(B[:, i])
            ci = c_scaled[i, :] * (sa * sb)
            w = float(np.linalg.norm(ci))
            if w > 0:
                ci = ci / w
            ci, csign = _fix_sign(ci)
            terms.append(RankOneTerm((ai, bi, ci), scale=w * csign, residual=residuals[i]))
        terms.sort(key=lambda term: -abs(term.scale))
        approx = sum(term.tensor().data for term in terms)
        recon = float(np.linalg.norm(t.data - approx))
        return DecompositionResult(tuple(terms), max_residual=max(residuals, default=0.0), recon_residual=recon)

    raise ValueError(
        f"eigenvalues kept colliding across {_MAX_PROBE_RETRIES} probe draws "
        f"(last relative gap {last_gap:.3e}); the tensor likely has rank above {m} "
        "or nearly parallel factors"
    )


def group_for_jennrich(
    t: Tensor,
    scheme: str = "halves",
    partition: ModePartition | None = None,
) -> tuple[Tensor, ModePartition]:
    """Group an order >= 3 tensor into three blocks for decomposition.

    scheme "halves" splits the first ell-1 modes into two near-equal blocks
    and keeps the last mode alone; "thirds" uses three contiguous blocks with
    sizes differing by at most one.  An explicit partition overrides both.
    """
    ell = t.order
    if ell < 3:
        raise ValueError(f"need an order >= 3 tensor, got order {ell}")
    if partition is None:
        if scheme == "halves":
            g1 = ell // 2
            sizes = (g1, ell - 1 - g1, 1)
        elif scheme == "thirds":
            base, extra = divmod(ell, 3)
            sizes = tuple(base + (1 if i < extra else 0) for i in range(3))
        else:
            raise ValueError(f"unknown grouping scheme {scheme!r}")
        partition = ModePartition.from_sizes(sizes)
    if len(partition.groups) != 3:
        raise ValueError(f"partition must have exactly 3 groups, got {len(partition.groups)}")
    return group(t, partition), partition


def factor_rank_one(matrix_or_tensor: np.ndarray) -> tuple[list[np.ndarray], float, float]:
    """Best-effort rank-one factorization R ~ scale * v_1 (x) ... (x) v_k.

    Initializes each factor from the dominant left singular vector of the
    corresponding unfolding, then runs alternating contractions to a fixed
    point.  Returns (unit factors, scale, relative residual in Frobenius
    norm); the residual is the distance from R to the returned rank-one
    tensor divided by ||R||_F.
    """
    R = np.asarray(matrix_or_tensor, dtype=float)
    k = R.ndim
    nf = float(np.linalg.norm(R))
    if nf == 0.0:
        raise ValueError("cannot factor the zero tensor")

    factors = []
    for mode in range(k):
        unf = np.moveaxis(R, mode, 0).reshape(R.shape[mode], -1)
        u, _, _ = np.linalg.svd(unf, full_matrices=False)
        factors.append(u[:, 0])

    scale = 0.0
    for _ in range(50):
        prev = scale
        for mode in range(k):
            contraction = R
            for other in range(k - 1, -1, -1):
                if other == mode:
                    continue
                contraction = np.tensordot(contraction, factors[other], axes=([other], [0]))
            nv = float(np.linalg.norm(contraction))
            if nv == 0.0:
                break
            factors[mode] = contraction / nv
            scale = nv
        if abs(scale - prev) <= 1e-13 * max(scale, 1.0):
            break

    for mode in range(k):
        factors[mode], sgn = _fix_sign(factors[mode])
        scale *= sgn
    approx = scale * outer([np.asarray(f) for f in factors]).data
    residual = float(np.linalg.norm(R - approx) / nf)
    return factors, float(scale), residual


def recover_rank_one_terms(
    t: Tensor,
    m: int,
    scheme: str = "halves",
    partition: ModePartition | None = None,
    seed: int = 0,
) -> DecompositionResult:
    """Recover m rank-one terms of an order >= 3 tensor.

    Groups modes into three blocks, runs the simultaneous-diagonalization
    step, then un-groups each grouped factor back into its constituent modes
    by rank-one factorization.  Each term's residual is the worst relative
    rank-one defect over its grouped factors; with noisy input this is the
    first diagnostic to look at.
    """
    if t.order == 3 and partition is None and scheme == "halves":
        return jennrich(t, m, seed=seed)
    gt, partition = group_for_jennrich(t, scheme, partition)
    base = jennrich(gt, m, seed=seed)

    terms: list[RankOneTerm] = []
    for term in base.terms:
        split_factors: list[np.ndarray] = []
        worst = term.residual
        scale = term.scale
        for gi, modes in enumerate(partition.groups):
            if len(modes) == 1:
                split_factors.append(term.factors[gi])
                continue
            shape = tuple(t.dims[mo] for mo in modes)
            fs, s, res = factor_rank_one(term.factors[gi].reshape(shape))
            split_factors.extend(np.asarray(f) for f in fs)
            scale *= s
            worst = max(worst, res)
        terms.append(RankOneTerm(tuple(split_factors), scale=scale, residual=worst))
    approx = sum(term.tensor().data for term in terms) if terms else np.zeros(t.dims)
    recon = float(np.linalg.norm(t.data - approx))
    return DecompositionResult(
        tuple(terms),
        max_residual=max((t_.residual for t_ in terms), default=0.0),
        recon_residual=recon,
    )


def leave_one_out_distances(a: np.ndarray) -> np.ndarray:
    """Distance from each column to the span of the remaining columns."""
    A = np.asarray(a, dtype=float)
    if A.ndim != 2 or A.shape[1] == 0:
        raise ValueError("need a nonempty 2-D column matrix")
    rows, m = A.shape
    s = svdvals(A)
    full_rank = m <= rows and s[-1] > max(rows, m) * np.finfo(float).eps * s[0]
    if full_rank:
        # for full column rank, dist_j = 1 / ||row_j of pinv(A)||
        P = pinv(A, rtol=_RCOND)
        return 1.0 / np.linalg.norm(P, axis=1)
    # rank-deficient or overcomplete: project each column directly
    out = np.empty(m)
    for j in range(m):
        rest = np.delete(A, j, axis=1)
        q, _ = np.linalg.qr(rest, mode="reduced")
        col = A[:, j]
        out[j] = float(np.linalg.norm(col - q @ (q.T @ col)))
    return out


@dataclass(frozen=True, eq=False)
class ConditionReport:
    """Well-posedness summary; ``leave_one_out`` keeps the per-column values,
    ``min_leave_one_out`` is the distance the sandwich bounds refer to."""

    sigma_min: float
    sigma_max: float
    kappa: float
    leave_one_out: np.ndarray
    min_leave_one_out: float
    c_separation: float | None
    max_column_norm: float

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.leave_one_out, dtype=float))
        arr.flags.writeable = False
        object.__setattr__(self, "leave_one_out", arr)

    def to_json_dict(self) -> dict:
        def finite_or_none(x):
            return None if x is None or math.isinf(x) else x

        return {
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "kappa": finite_or_none(self.kappa),
            "leave_one_out": self.min_leave_one_out,
            "tau": finite_or_none(self.c_separation),
            "C": self.max_column_norm,
        }


def condition_report(a: np.ndarray, c: np.ndarray | None = None) -> ConditionReport:
    """Conditioning summary for a factor matrix.

    ``a`` has one column per term.  The leave-one-out distances sandwich the
    smallest singular value: sigma_min <= min_j dist_j <= sqrt(m) sigma_min.
    ``c`` (optional) holds the third-mode factors; their separation
    min_{i<j} ||c_i/||c_i|| - c_j/||c_j|||| governs the eigenvalue gaps.
    """
    A = np.asarray(a, dtype=float)
    if A.ndim != 2:
        raise ValueError("factor matrix must be 2-D")
    s = svdvals(A)
    loo = leave_one_out_distances(A)
    sep: float | None = None
    if c is not None:
        C = np.asarray(c, dtype=float)
        if C.ndim != 2:
            raise ValueError("c factors must form a 2-D column matrix")
        norms = np.linalg.norm(C, axis=0)
        if np.any(norms == 0):
            raise ValueError("c factors must be nonzero to measure separation")
        U = C / norms
        m = U.shape[1]
        sep = math.inf if m < 2 else min(
            float(np.linalg.norm(U[:, i] - U[:, j])) for i in range(m) for j in range(i + 1, m)
        )
    sigma_min = float(s[-1])
    sigma_max = float(s[0])
    return ConditionReport(
        sigma_min=sigma_min,
        sigma_max=sigma_max,
        kappa=sigma_max / sigma_min if sigma_min > 0 else math.inf,
        leave_one_out=loo,
        min_leave_one_out=float(np.min(loo)),
        c_separation=sep,
        max_column_norm=float(np.max(np.linalg.norm(A, axis=0))),
    )
