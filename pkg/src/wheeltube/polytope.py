"""H-representation polytopes and the fixed-template vertex map used by the tube."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .solver import ConvexProgram, Solver, Status

MERGE_TOL = 1e-9


class EmptySetError(ValueError):
    pass


class UnboundedSetError(ValueError):
    pass


class DegenerateVertexError(ValueError):
    pass


@dataclass(frozen=True)
class Polytope:
    """The set ``{x | F x <= b}``; rows of ``F`` are scaled to unit norm."""

    F: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        if F.shape[0] != b.size:
            raise ValueError(f"F has {F.shape[0]} rows but b has {b.size} entries")
        norms = np.linalg.norm(F, axis=1)
        if np.any(norms == 0):
            raise ValueError("every row of F must be nonzero")
        if not np.all(np.isfinite(b)):
            raise ValueError("b must be finite")
        object.__setattr__(self, "F", F / norms[:, None])
        object.__setattr__(self, "b", b / norms)

    @classmethod
    def box(cls, upper, lower=None) -> "Polytope":
        upper = np.asarray(upper, dtype=float)
        lower = -upper if lower is None else np.asarray(lower, dtype=float)
        n = upper.size
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([upper, -lower]))

    @property
    def dim(self) -> int:
        return self.F.shape[1]

    def contains(self, x, tol: float = 1e-9) -> bool:
        return bool(np.all(self.F @ np.asarray(x, dtype=float) <= self.b + tol))

    def is_empty(self, solver: Solver | None = None) -> bool:
        res = (solver or Solver()).solve_lp(ConvexProgram(None, np.zeros(self.dim), A_in=self.F, b_in=self.b))
        return res.status is Status.INFEASIBLE

    def is_bounded(self, solver: Solver | None = None) -> bool:
        return all(np.isfinite(support(self, d, solver))
                   for d in np.vstack([np.eye(self.dim), -np.eye(self.dim)]))


def support(p: Polytope, d, solver: Solver | None = None) -> float:
    """max d'x over p; ``inf`` when p is unbounded along d."""
    d = np.asarray(d, dtype=float)
    res = (solver or Solver()).solve_lp(ConvexProgram(None, -d, A_in=p.F, b_in=p.b))
    if res.status is Status.INFEASIBLE:
        raise EmptySetError("support of an empty polytope")
    if res.status is Status.UNBOUNDED:
        return np.inf
    return -res.objective


def enumerate_vertices(p: Polytope, tol: float = 1e-9, solver: Solver | None = None) -> list[np.ndarray]:
    """All vertices by exhaustive active-row combinations.

    Only meant for the small sets used here (a dozen rows in at most four
    dimensions); cost grows as C(n_rows, dim).
    """
    solver = solver or Solver()
    if p.is_empty(solver):
        raise EmptySetError("polytope is empty")
    if not p.is_bounded(solver):
        raise UnboundedSetError("polytope is unbounded")
    n = p.dim
    verts: list[np.ndarray] = []
    for rows in combinations(range(p.F.shape[0]), n):
        Fr = p.F[list(rows)]
        if np.linalg.matrix_rank(Fr, tol=1e-10) < n:
            continue
        v = np.linalg.solve(Fr, p.b[list(rows)])
        if np.all(p.F @ v <= p.b + tol * (1 + np.abs(p.b))):
            if not any(np.abs(v - w).max() <= MERGE_TOL * (1 + np.abs(w).max()) for w in verts):
                verts.append(v)
    return verts


def inclusion_certificate(p1: Polytope, p2: Polytope, solver: Solver | None = None):
    """Nonnegative ``Omega`` with ``Omega F1 = F2`` and ``Omega b1 <= b2``, or None.

    Each row of ``Omega`` solves ``min w.b1  s.t.  w F1 = F2[l], w >= 0``;
    the certificate exists iff every row optimum is at most ``b2[l]``.
    """
    solver = solver or Solver()
    m1 = p1.F.shape[0]
    Omega = np.zeros((p2.F.shape[0], m1))
    for l in range(p2.F.shape[0]):
        prog = ConvexProgram(None, p1.b, A_eq=p1.F.T, b_eq=p2.F[l], A_in=-np.eye(m1), b_in=np.zeros(m1))
        res = solver.solve_lp(prog)
        if res.status is not Status.OPTIMAL:
            return None
        if res.objective > p2.b[l] + 1e-9 * (1 + abs(p2.b[l])):
            return None
        Omega[l] = np.maximum(res.x_opt, 0.0)
    return Omega


def verify_certificate(Omega, p1: Polytope, p2: Polytope, tol: float = 1e-8) -> bool:
    Omega = np.asarray(Omega)
    return bool(np.all(Omega >= -tol)
                and np.abs(Omega @ p1.F - p2.F).max() <= tol
                and np.all(Omega @ p1.b <= p2.b + tol))


@dataclass(frozen=True)
class VertexMap:
    """Vertices of ``{e | F e <= alpha}`` as fixed linear maps ``e_j = S_j alpha``."""

    F: np.ndarray
    vertices: tuple[np.ndarray, ...]          # vertices of {F e <= 1}
    selectors: tuple[np.ndarray, ...]         # S_j, shape (dim, n_rows)
    active_rows: tuple[tuple[int, ...], ...]  # R_j

    @property
    def p(self) -> int:
        return len(self.selectors)

    @property
    def S(self) -> np.ndarray:
        """Selectors stacked as an array of shape (p, dim, n_rows)."""
        return np.stack(self.selectors)

    def vertices_of(self, alpha) -> np.ndarray:
        return self.S @ np.asarray(alpha, dtype=float)


def build_vertex_map(F_e, tol: float = 1e-9) -> VertexMap:
    F_e = np.atleast_2d(np.asarray(F_e, dtype=float))
    n_e, dim = F_e.shape
    try:
        verts = enumerate_vertices(Polytope(F_e, np.ones(n_e)), tol)
    except (EmptySetError, UnboundedSetError) as exc:
        raise ValueError(f"template {{e | F e <= 1}} must be bounded and nonempty: {exc}") from exc
    sel, rows_out, vout = [], [], []
    for v in verts:
        act = tuple(int(r) for r in np.flatnonzero(np.abs(F_e @ v - 1.0) <= 1e-7))
        if len(act) > dim:
            raise DegenerateVertexError(f"vertex {v} has {len(act)} active rows (> {dim})")
        if len(act) < dim:
            raise ValueError(f"vertex {v} has only {len(act)} active rows")
        S = np.zeros((dim, n_e))
        S[:, list(act)] = np.linalg.inv(F_e[list(act)])
        sel.append(S)
        rows_out.append(act)
        vout.append(v)
    return VertexMap(F_e, tuple(vout), tuple(sel), tuple(rows_out))
