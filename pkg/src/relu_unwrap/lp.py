"""Linear-program core: feasibility with strict rows, extremization, redundancy.

Systems are rows ``A[i] . x <= b[i]`` over a free variable ``x``; rows flagged
strict mean ``A[i] . x < b[i]``.  Strictness is decided by a slack program:
maximise ``t`` subject to ``A[i] . x + t <= b[i]`` on strict rows,
``A[i] . x <= b[i]`` on the rest, and ``t <= 1``.  A positive optimum means
some point satisfies every strict row with real margin.

All programs are solved by a dense two-phase simplex with Bland's rule
(smallest eligible index enters; smallest basis index among minimum ratios
leaves), which cannot cycle.  A pivot budget of ``ITERATION_FACTOR * (rows +
dim)`` guards against numerical pathology; exceeding it raises
:class:`IterationLimitError` and callers in the pattern search must then keep
the candidate rather than prune it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, IterationLimitError, NonFiniteError

TOL_SLACK = 1e-9        # minimum margin for interior feasibility
TOL_REDUNDANT = 1e-7    # slack under which a row is declared redundant
ITERATION_FACTOR = 50   # pivot budget multiplier

_PIVOT_EPS = 1e-10
_RATIO_TIE = 1e-12
_PHASE1_TOL = 1e-9


@dataclass(frozen=True)
class LinearProgram:
    """Row system ``A x <= b`` with per-row strict flags."""

    A: np.ndarray
    b: np.ndarray
    strict: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.A, dtype=np.float64)
        if a.ndim != 2:
            a = a.reshape(len(a), -1) if a.size else a.reshape(0, 0)
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        s = np.asarray(self.strict, dtype=bool).reshape(-1)
        if a.shape[0] != b.shape[0] or a.shape[0] != s.shape[0]:
            raise DimensionMismatchError(
                f"rows disagree: A has {a.shape[0]}, b has {b.shape[0]}, "
                f"strict has {s.shape[0]}"
            )
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise NonFiniteError("linear program entries must be finite")
        for name, arr in (("A", a), ("b", b), ("strict", s)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]


class Feasibility(enum.Enum):
    INTERIOR = "feasible-interior"
    BOUNDARY_ONLY = "feasible-boundary-only"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class FeasibilityResult:
    status: Feasibility
    witness: np.ndarray | None = None
    slack: float | None = None


class Extremum(enum.Enum):
    BOUNDED = "bounded"
    UNBOUNDED = "unbounded"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class ExtremizeResult:
    status: Extremum
    value: float | None = None
    argpoint: np.ndarray | None = None


def iteration_limit(rows: int, dim: int) -> int:
    """Pivot budget for a program of the given size."""
    return ITERATION_FACTOR * (rows + dim)


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int):
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])
    basis[row] = col


def _simplex(G: np.ndarray, h: np.ndarray, c: np.ndarray, limit: int):
    """Maximise ``c . y`` over ``G y <= h`` with ``y`` free.

    Returns ``(status, y, value)`` with status one of "optimal",
    "infeasible", "unbounded".  Free variables are split into positive and
    negative parts; rows with negative right-hand side get artificial
    variables eliminated in phase 1.
    """
    m, dim = G.shape
    ncore = 2 * dim + m
    body = np.hstack([G, -G, np.eye(m)])
    rhs = np.array(h, dtype=np.float64)
    neg = rhs < 0
    if neg.any():
        body[neg] *= -1.0
        rhs[neg] *= -1.0
    art_rows = np.flatnonzero(neg)
    nart = art_rows.size
    ncols = ncore + nart
    T = np.zeros((m + 1, ncols + 1))
    T[:m, :ncore] = body
    if nart:
        T[art_rows, ncore + np.arange(nart)] = 1.0
    T[:m, -1] = rhs
    basis = 2 * dim + np.arange(m)
    basis[art_rows] = ncore + np.arange(nart)
    pivots = 0

    def run(active: int) -> str:
        nonlocal pivots
        while True:
            eligible = np.flatnonzero(T[-1, :active] < -_PIVOT_EPS)
            if eligible.size == 0:
                return "optimal"
            enter = int(eligible[0])
            col = T[:m, enter]
            pos = col > _PIVOT_EPS
            if not pos.any():
                return "unbounded"
            ratios = np.full(m, np.inf)
            ratios[pos] = T[:m, -1][pos] / col[pos]
            best = ratios.min()
            tied = np.flatnonzero(ratios <= best + _RATIO_TIE)
            leave = int(tied[np.argmin(basis[tied])])
            _pivot(T, basis, leave, enter)
            pivots += 1
            if pivots > limit:
                raise IterationLimitError(
                    f"simplex exceeded {limit} pivots on a {m}x{dim} program"
                )

    def set_objective(obj: np.ndarray):
        T[-1] = obj
        for r in range(m):
            coef = T[-1, basis[r]]
            if coef != 0.0:
                T[-1] -= coef * T[r]

    if nart:
        obj = np.zeros(ncols + 1)
        obj[ncore:ncols] = 1.0
        set_objective(obj)
        status = run(ncols)
        if status == "unbounded":
            # a sum of nonnegative variables cannot be unbounded below
            raise IterationLimitError("phase 1 reported unbounded")
        if -T[-1, -1] > _PHASE1_TOL:
            return "infeasible", None, None
        for r in np.flatnonzero(basis >= ncore):
            nonzero = np.flatnonzero(np.abs(T[r, :ncore]) > _PIVOT_EPS)
            if nonzero.size:
                _pivot(T, basis, int(r), int(nonzero[0]))
                pivots += 1
                if pivots > limit:
                    raise IterationLimitError("pivot budget exhausted")
            # else the row is redundant; its artificial stays basic at zero

    c = np.asarray(c, dtype=np.float64)
    obj = np.zeros(ncols + 1)
    obj[:dim] = -c
    obj[dim : 2 * dim] = c
    set_objective(obj)
    if run(ncore) == "unbounded":
        return "unbounded", None, None
    values = np.zeros(ncols)
    in_range = basis < ncols
    values[basis[in_range]] = T[:m, -1][in_range]
    y = values[:dim] - values[dim : 2 * dim]
    return "optimal", y, float(c @ y)


def check_feasible(lp: LinearProgram) -> FeasibilityResult:
    """Classify a system with strict rows.

    INTERIOR: some point satisfies every strict row with margin above
    ``TOL_SLACK`` (the witness and its exact minimum strict margin are
    returned).  BOUNDARY_ONLY: the closed system is feasible but no point
    clears the strict rows by more than ``TOL_SLACK``.  INFEASIBLE: even the
    closed system is empty.
    """
    r, d = lp.num_rows, lp.dim
    G = np.zeros((r + 1, d + 1))
    G[:r, :d] = lp.A
    G[:r, d] = lp.strict.astype(np.float64)
    G[r, d] = 1.0
    h = np.append(lp.b, 1.0)
    c = np.zeros(d + 1)
    c[d] = 1.0
    status, y, t = _simplex(G, h, c, iteration_limit(r + 1, d + 1))
    if status == "infeasible":
        return FeasibilityResult(Feasibility.INFEASIBLE)
    if status == "unbounded":
        # impossible: t <= 1 bounds the objective; treat as pathology
        raise IterationLimitError("slack program reported unbounded")
    x = y[:d]
    if lp.strict.any():
        slack = float((lp.b[lp.strict] - lp.A[lp.strict] @ x).min())
    else:
        slack = float(t)
    if slack > TOL_SLACK:
        return FeasibilityResult(Feasibility.INTERIOR, x, slack)
    if t >= -TOL_SLACK:
        return FeasibilityResult(Feasibility.BOUNDARY_ONLY, x, max(slack, 0.0))
    return FeasibilityResult(Feasibility.INFEASIBLE)


def extremize(direction, lp: LinearProgram) -> ExtremizeResult:
    """Maximise ``direction . x`` over the closed system (strictness ignored)."""
    direction = np.asarray(direction, dtype=np.float64).reshape(-1)
    if direction.shape != (lp.dim,):
        raise DimensionMismatchError(
            f"direction has length {direction.shape[0]}, program dim is {lp.dim}"
        )
    status, y, value = _simplex(
        lp.A, lp.b, direction, iteration_limit(lp.num_rows, lp.dim)
    )
    if status == "infeasible":
        return ExtremizeResult(Extremum.INFEASIBLE)
    if status == "unbounded":
        return ExtremizeResult(Extremum.UNBOUNDED)
    return ExtremizeResult(Extremum.BOUNDED, value, y)


def is_redundant(row: int, lp: LinearProgram) -> bool:
    """True iff dropping ``row`` cannot enlarge the closed feasible set.

    Decided by maximising the row over the remaining closed rows: a bounded
    optimum at most ``b[row] + TOL_REDUNDANT`` means redundant; an unbounded
    one means the row genuinely cuts; an infeasible remainder keeps the set
    empty either way.
    """
    if not 0 <= row < lp.num_rows:
        raise IndexError(f"row {row} out of range")
    keep = np.arange(lp.num_rows) != row
    rest = LinearProgram(lp.A[keep], lp.b[keep], np.zeros(keep.sum(), dtype=bool))
    res = extremize(lp.A[row], rest)
    if res.status is Extremum.INFEASIBLE:
        return True
    if res.status is Extremum.UNBOUNDED:
        return False
    return res.value <= lp.b[row] + TOL_REDUNDANT
