"""Exact linear-region decomposition of a ReLU network.

A network is affine on each set of inputs sharing one activation pattern.
Realisable patterns are found by a two-stage search: stage 1 tests every
per-layer pattern against a local feasibility program over that layer's
input space; stage 2 extends surviving prefixes layer by layer, testing the
stacked input-space program built from the affine maps

    M(1) = W(1),              o(1) = b(1)
    M(l) = W(l) diag(P(l-1)) M(l-1)
    o(l) = W(l) diag(P(l-1)) o(l-1) + b(l)

which give the layer-l pre-activations of any input realising the prefix.
Rows with pattern bit 1 are strict (pre-activation > 0), rows with bit 0 are
closed (<= 0), so every input belongs to exactly one pattern.  Candidates
whose feasible set has no interior are dropped: they cover no open set and
their points lie on the closed faces of neighbouring regions.

Each surviving pattern yields a region: its affine model, an interior
witness, and the minimal set of oriented half-spaces ``h . x > c`` bounding
it.  Half-spaces keep their orientation (both sides of one hyperplane are
separate table entries) and are unit-normalised; duplicates are merged
within ``TOL_CANON``.
"""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BudgetExceededError,
    DimensionMismatchError,
    InconsistentConstantRowError,
    IterationLimitError,
    ModelFormatError,
    NonFiniteError,
    UnwrapError,
)
from .lp import Feasibility, LinearProgram, check_feasible, is_redundant
from .network import ActivationPattern, MLPNetwork, _frozen_array

DECOMP_FORMAT = "relu-decomp-v1"

TOL_CANON = 1e-8        # half-space dedup tolerance on (normal, offset)
TOL_DEGENERATE = 1e-12  # rows with a smaller normal are constant constraints
_SORT_DECIMALS = 9      # rounding for order keys, keeps runs comparable


@dataclass(frozen=True)
class GlobalAffinePrefix:
    """Affine map from network input to layer ``layer`` pre-activations."""

    matrix: np.ndarray
    offset: np.ndarray
    layer: int

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen_array(self.matrix))
        object.__setattr__(self, "offset", _frozen_array(self.offset).reshape(-1))
        if self.matrix.shape[0] != self.offset.shape[0]:
            raise DimensionMismatchError("prefix matrix and offset disagree")


@dataclass(frozen=True)
class OrientedHalfspace:
    """Strict condition ``normal . x > offset`` with a unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = _frozen_array(self.normal).reshape(-1)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))
        length = float(np.linalg.norm(normal))
        if not np.isfinite(self.offset) or not np.isfinite(normal).all():
            raise NonFiniteError("half-space entries must be finite")
        if abs(length - 1.0) > 1e-6:
            raise ValueError(f"half-space normal has length {length}, expected 1")


@dataclass(frozen=True)
class Region:
    """One linear region: its pattern, affine model, and bounding conditions.

    ``halfspace_ids`` index conditions that hold strictly on the region's
    interior.  ``nonstrict_ids`` is the subset whose faces the region owns
    (pattern bit 0, closed side), used to resolve points lying exactly on a
    boundary.
    """

    pattern: ActivationPattern
    alpha: np.ndarray
    beta: np.ndarray
    halfspace_ids: tuple[int, ...]
    witness: np.ndarray
    nonstrict_ids: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "alpha", _frozen_array(self.alpha))
        object.__setattr__(self, "beta", _frozen_array(self.beta).reshape(-1))
        object.__setattr__(self, "witness", _frozen_array(self.witness).reshape(-1))
        object.__setattr__(self, "halfspace_ids", tuple(int(i) for i in self.halfspace_ids))
        object.__setattr__(self, "nonstrict_ids", tuple(int(i) for i in self.nonstrict_ids))
        if self.alpha.ndim != 2 or self.alpha.shape[0] != self.beta.shape[0]:
            raise DimensionMismatchError("region model shapes disagree")
        if not set(self.nonstrict_ids) <= set(self.halfspace_ids):
            raise ValueError("nonstrict_ids must be a subset of halfspace_ids")


@dataclass(frozen=True)
class Decomposition:
    """Half-space table plus all regions of one network."""

    input_dim: int
    output_dim: int
    halfspaces: tuple[OrientedHalfspace, ...]
    regions: tuple[Region, ...]
    partial: bool = False

    def __post_init__(self):
        object.__setattr__(self, "halfspaces", tuple(self.halfspaces))
        object.__setattr__(self, "regions", tuple(self.regions))
        k = len(self.halfspaces)
        seen = set()
        for region in self.regions:
            if region.pattern.layers in seen:
                raise ValueError("region patterns must be pairwise distinct")
            seen.add(region.pattern.layers)
            if any(not 0 <= i < k for i in region.halfspace_ids):
                raise ValueError("region references a missing half-space")

    @property
    def num_halfspaces(self) -> int:
        return len(self.halfspaces)

    @property
    def num_regions(self) -> int:
        return len(self.regions)


@dataclass(frozen=True)
class PatternRecord:
    """A realisable pattern with its per-layer affine maps and a witness."""

    pattern: ActivationPattern
    prefixes: tuple[GlobalAffinePrefix, ...]
    witness: np.ndarray | None


@dataclass(frozen=True)
class EnumerationResult:
    records: tuple[PatternRecord, ...]
    layer_feasible: tuple[int, ...]
    candidates_checked: int


# ---------------------------------------------------------------------------
# Feasibility programs


def local_lp(weights, bias, bits, *, nonneg_inputs: bool = True) -> LinearProgram:
    """Single-layer pattern program over the layer's own input space.

    Bit 1 rows demand ``W[i] . v + b[i] > 0`` (strict), bit 0 rows the closed
    complement.  ``nonneg_inputs`` appends ``v >= 0`` rows; use it for every
    layer except the first, whose input is the unconstrained network input.
    """
    W = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    b = np.asarray(bias, dtype=np.float64).reshape(-1)
    e = np.asarray([int(v) for v in bits])
    if W.shape[0] != b.shape[0] or W.shape[0] != e.shape[0]:
        raise DimensionMismatchError("weights, bias, and bits disagree")
    sign = np.where(e == 1, -1.0, 1.0)
    A = sign[:, None] * W
    rhs = np.where(e == 1, b, -b)
    strict = e == 1
    if nonneg_inputs:
        A = np.vstack([A, -np.eye(W.shape[1])])
        rhs = np.concatenate([rhs, np.zeros(W.shape[1])])
        strict = np.concatenate([strict, np.zeros(W.shape[1], dtype=bool)])
    return LinearProgram(A, rhs, strict)


def _bits_of(prefix) -> tuple[tuple[int, ...], ...]:
    if isinstance(prefix, ActivationPattern):
        return prefix.layers
    return tuple(tuple(int(v) for v in layer) for layer in prefix)


def _prefix_chain(layer_bits, net: MLPNetwork) -> list[GlobalAffinePrefix]:
    layer_bits = _bits_of(layer_bits)
    if not 1 <= len(layer_bits) <= net.depth:
        raise DimensionMismatchError(
            f"prefix has {len(layer_bits)} layers, network has {net.depth}"
        )
    chain: list[GlobalAffinePrefix] = []
    matrix = net.hidden[0].weights
    offset = net.hidden[0].bias
    chain.append(GlobalAffinePrefix(matrix, offset, 1))
    for l in range(2, len(layer_bits) + 1):
        gate = np.asarray(layer_bits[l - 2], dtype=np.float64)
        if gate.shape[0] != chain[-1].matrix.shape[0]:
            raise DimensionMismatchError(
                f"prefix layer {l - 1} width does not match the network"
            )
        W, b = net.hidden[l - 1].weights, net.hidden[l - 1].bias
        matrix = W @ (gate[:, None] * chain[-1].matrix)
        offset = W @ (gate * chain[-1].offset) + b
        chain.append(GlobalAffinePrefix(matrix, offset, l))
    last_gate = layer_bits[-1]
    if len(last_gate) != chain[-1].matrix.shape[0]:
        raise DimensionMismatchError("last prefix layer width does not match")
    return chain


def global_prefix(prefix, net: MLPNetwork) -> GlobalAffinePrefix:
    """Affine map for the deepest layer of a pattern prefix."""
    return _prefix_chain(prefix, net)[-1]


def _pattern_rows(matrix: np.ndarray, offset: np.ndarray, bits) -> tuple:
    e = np.asarray([int(v) for v in bits])
    sign = np.where(e == 1, -1.0, 1.0)
    return sign[:, None] * matrix, np.where(e == 1, offset, -offset), e == 1


def global_lp(prefix, net: MLPNetwork) -> LinearProgram:
    """Stacked input-space program of a pattern prefix (all layers so far)."""
    layer_bits = _bits_of(prefix)
    chain = _prefix_chain(layer_bits, net)
    blocks = [_pattern_rows(p.matrix, p.offset, bits) for p, bits in zip(chain, layer_bits)]
    return LinearProgram(
        np.vstack([blk[0] for blk in blocks]),
        np.concatenate([blk[1] for blk in blocks]),
        np.concatenate([blk[2] for blk in blocks]),
    )


# ---------------------------------------------------------------------------
# Pattern enumeration


@dataclass(frozen=True)
class _SearchState:
    bits: tuple[tuple[int, ...], ...]
    chain: tuple[GlobalAffinePrefix, ...]
    rows_A: np.ndarray
    rows_b: np.ndarray
    rows_strict: np.ndarray
    witness: np.ndarray | None


def _keep_or_prune(lp: LinearProgram):
    """Returns (keep, witness).  Solver failure keeps the candidate."""
    try:
        res = check_feasible(lp)
    except IterationLimitError:
        return True, None
    if res.status is Feasibility.INTERIOR:
        return True, res.witness
    return False, None


def _interior_witness(lp: LinearProgram) -> np.ndarray | None:
    """A point clearing every non-degenerate row by a positive margin.

    The feasibility witness is only pushed off the strict rows, so it may
    sit exactly on a closed row, which is a face shared with a neighbouring
    region.  Re-solving with every non-degenerate row marked strict yields a
    point in the polytope's topological interior; zero rows (constant
    constraints from gated-off neurons) can never clear a margin and are
    skipped.  Returns None when no such point is found within tolerance.
    """
    keep = np.linalg.norm(lp.A, axis=1) > TOL_DEGENERATE
    if not keep.any():
        return np.zeros(lp.dim)
    pushed = LinearProgram(
        lp.A[keep], lp.b[keep], np.ones(int(keep.sum()), dtype=bool)
    )
    try:
        res = check_feasible(pushed)
    except IterationLimitError:
        return None
    return res.witness if res.status is Feasibility.INTERIOR else None


class _Budget:
    def __init__(self, cap: int | None):
        self.cap = cap
        self.checked = 0

    def take(self, iterable: Iterable, count: int) -> tuple[list, bool]:
        """Consume up to the remaining allowance; True means it ran out."""
        if self.cap is None or self.checked + count <= self.cap:
            self.checked += count
            return list(iterable), False
        allowed = max(self.cap - self.checked, 0)
        self.checked = self.cap
        return list(itertools.islice(iterable, allowed)), True


def _pmap(fn, items: list, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        chunk = max(1, len(items) // (threads * 4))
        return list(pool.map(fn, items, chunksize=chunk))


def enumerate_feasible(
    net: MLPNetwork, *, budget: int | None = None, threads: int = 1
) -> EnumerationResult:
    """Find every activation pattern realised on a set with interior.

    Stage 1 filters each layer's patterns by their local program; stage 2
    grows prefixes layer by layer under the stacked input-space program.
    Output is sorted by concatenated pattern bits.  ``budget`` caps the total
    number of candidates tested; crossing it raises
    :class:`BudgetExceededError` whose ``partial`` field carries everything
    found so far.  Tasks share only immutable inputs, so ``threads`` never
    changes the result.
    """
    L = net.depth
    n = net.input_dim
    if L == 0:
        record = PatternRecord(ActivationPattern(()), (), np.zeros(n))
        return EnumerationResult((record,), (), 0)

    budget_state = _Budget(budget)
    layer_feasible: list[int] = []

    def bail(states: list[_SearchState], done_layers: int):
        records = _finish(states) if done_layers == L else ()
        partial = EnumerationResult(
            records, tuple(layer_feasible), budget_state.checked
        )
        raise BudgetExceededError(
            f"pattern search exceeded the budget of {budget} candidates",
            partial=partial,
        )

    def _finish(states: list[_SearchState]) -> tuple[PatternRecord, ...]:
        records = []
        for st in states:
            refined = _interior_witness(
                LinearProgram(st.rows_A, st.rows_b, st.rows_strict)
            )
            records.append(
                PatternRecord(
                    ActivationPattern(st.bits),
                    st.chain,
                    st.witness if refined is None else refined,
                )
            )
        records.sort(key=lambda rec: rec.pattern.bits())
        return tuple(records)

    # stage 1, layer 1: the local program over the network input doubles as
    # the stacked program of the length-1 prefix, witnesses included
    W1, b1 = net.hidden[0].weights, net.hidden[0].bias
    width = net.hidden_widths[0]
    candidates, exhausted = budget_state.take(
        itertools.product((0, 1), repeat=width), 2**width
    )

    def check_first(bits):
        rows = _pattern_rows(W1, b1, bits)
        keep, witness = _keep_or_prune(LinearProgram(*rows))
        return bits, rows, keep, witness

    states: list[_SearchState] = []
    first = GlobalAffinePrefix(W1, b1, 1)
    for bits, rows, keep, witness in _pmap(check_first, candidates, threads):
        if keep:
            states.append(
                _SearchState((tuple(bits),), (first,), rows[0], rows[1], rows[2], witness)
            )
    layer_feasible.append(len(states))
    if exhausted:
        bail(states, 1)

    # stage 1, deeper layers: local programs over nonnegative layer inputs
    layer_patterns: list[list[tuple[int, ...]]] = []
    for l in range(2, L + 1):
        W, b = net.hidden[l - 1].weights, net.hidden[l - 1].bias
        width = net.hidden_widths[l - 1]
        candidates, exhausted = budget_state.take(
            itertools.product((0, 1), repeat=width), 2**width
        )

        def check_local(bits, W=W, b=b):
            keep, _ = _keep_or_prune(local_lp(W, b, bits))
            return bits, keep

        survivors = [
            tuple(bits)
            for bits, keep in _pmap(check_local, candidates, threads)
            if keep
        ]
        layer_feasible.append(len(survivors))
        layer_patterns.append(survivors)
        if exhausted:
            bail([], l)

    # stage 2: extend prefixes one layer at a time
    for l in range(2, L + 1):
        W, b = net.hidden[l - 1].weights, net.hidden[l - 1].bias
        extensions = layer_patterns[l - 2]
        next_states: list[_SearchState] = []
        for state in states:
            gate = np.asarray(state.bits[-1], dtype=np.float64)
            prev = state.chain[-1]
            matrix = W @ (gate[:, None] * prev.matrix)
            offset = W @ (gate * prev.offset) + b
            prefix = GlobalAffinePrefix(matrix, offset, l)

            def check_ext(bits, state=state, matrix=matrix, offset=offset):
                add_A, add_b, add_strict = _pattern_rows(matrix, offset, bits)
                lp = LinearProgram(
                    np.vstack([state.rows_A, add_A]),
                    np.concatenate([state.rows_b, add_b]),
                    np.concatenate([state.rows_strict, add_strict]),
                )
                keep, witness = _keep_or_prune(lp)
                return bits, (lp.A, lp.b, lp.strict), keep, witness

            batch, exhausted = budget_state.take(extensions, len(extensions))
            for bits, rows, keep, witness in _pmap(check_ext, batch, threads):
                if keep:
                    next_states.append(
                        _SearchState(
                            state.bits + (tuple(bits),),
                            state.chain + (prefix,),
                            rows[0],
                            rows[1],
                            rows[2],
                            witness,
                        )
                    )
            if exhausted:
                bail(next_states if l == L else [], l)
        states = next_states

    return EnumerationResult(
        _finish(states), tuple(layer_feasible), budget_state.checked
    )


# ---------------------------------------------------------------------------
# Region models and half-spaces


def local_linear_model(pattern: ActivationPattern, net: MLPNetwork):
    """Affine model ``x -> alpha @ x + beta`` of the pattern's region."""
    Wout, bout = net.output.weights, net.output.bias
    if net.depth == 0:
        return np.array(Wout), np.array(bout)
    layers = _bits_of(pattern)
    if len(layers) != net.depth:
        raise DimensionMismatchError(
            f"pattern has {len(layers)} layers, network has {net.depth}"
        )
    last = _prefix_chain(layers, net)[-1]
    gate = np.asarray(layers[-1], dtype=np.float64)
    alpha = Wout @ (gate[:, None] * last.matrix)
    beta = Wout @ (gate * last.offset) + bout
    return alpha, beta


def _sort_key(normal: np.ndarray, offset: float) -> tuple:
    return tuple(np.round(normal, _SORT_DECIMALS)) + (round(offset, _SORT_DECIMALS),)


def _match(reps: list, normal: np.ndarray, offset: float) -> int | None:
    for idx, (rep_n, rep_c) in enumerate(reps):
        if abs(rep_c - offset) <= TOL_CANON and np.abs(rep_n - normal).max() <= TOL_CANON:
            return idx
    return None


def extract_halfspaces(records: Sequence[PatternRecord], net: MLPNetwork):
    """Minimal oriented half-space set of every region.

    Each pattern row of a region's stacked program contributes the candidate
    condition that holds strictly on the region's interior: bit 1 rows give
    ``(M[i], -o[i])``, bit 0 rows the opposite orientation.  Zero-normal rows
    are constant constraints: they are checked for consistency and dropped.
    Per region, duplicates are merged and redundant conditions removed by LP;
    survivors are pooled into one deduplicated table, sorted by (normal,
    offset).  Returns ``(table, region_ids, region_nonstrict_ids)``.
    """
    reps: list[tuple[np.ndarray, float]] = []
    raw_ids: list[list[int]] = []
    raw_nonstrict: list[list[int]] = []

    for rec in records:
        cands: list[list] = []  # [normal, offset, any_strict_origin]
        for prefix, bits in zip(rec.prefixes, rec.pattern.layers):
            for i, bit in enumerate(bits):
                row = prefix.matrix[i]
                shift = float(prefix.offset[i])
                length = float(np.linalg.norm(row))
                if length <= TOL_DEGENERATE:
                    ok = shift > -TOL_CANON if bit else shift <= TOL_CANON
                    if not ok:
                        raise InconsistentConstantRowError(
                            f"layer {prefix.layer} neuron {i}: zero row with "
                            f"offset {shift} contradicts bit {bit}"
                        )
                    continue
                if bit:
                    normal, offset = row / length, -shift / length
                else:
                    normal, offset = -row / length, shift / length
                hit = _match([(c[0], c[1]) for c in cands], normal, offset)
                if hit is None:
                    cands.append([normal, offset, bool(bit)])
                else:
                    cands[hit][2] = cands[hit][2] or bool(bit)

        active = list(range(len(cands)))
        for j in range(len(cands)):
            if j not in active or len(active) < 2:
                continue
            closed = LinearProgram(
                np.array([-cands[i][0] for i in active]),
                np.array([-cands[i][1] for i in active]),
                np.zeros(len(active), dtype=bool),
            )
            if is_redundant(active.index(j), closed):
                active.remove(j)

        ids, owned = [], []
        for j in active:
            normal, offset, any_strict = cands[j]
            hit = _match(reps, normal, offset)
            if hit is None:
                reps.append((normal, offset))
                hit = len(reps) - 1
            ids.append(hit)
            if not any_strict:
                owned.append(hit)
        raw_ids.append(ids)
        raw_nonstrict.append(owned)

    order = sorted(range(len(reps)), key=lambda i: _sort_key(*reps[i]))
    remap = {old: new for new, old in enumerate(order)}
    table = tuple(OrientedHalfspace(reps[i][0], reps[i][1]) for i in order)
    region_ids = [tuple(sorted(remap[i] for i in ids)) for ids in raw_ids]
    region_nonstrict = [tuple(sorted(remap[i] for i in ids)) for ids in raw_nonstrict]
    return table, region_ids, region_nonstrict


def _certify_witness(rec: PatternRecord, net: MLPNetwork) -> np.ndarray:
    """Recover a witness for a pattern kept under a solver failure."""
    lp = global_lp(rec.pattern, net)
    refined = _interior_witness(lp)
    if refined is not None:
        return refined
    res = check_feasible(lp)
    if res.status is Feasibility.INTERIOR:
        return res.witness
    raise UnwrapError(
        "pattern kept after an iteration-limit failure could not be certified"
    )


def build_decomposition(
    net: MLPNetwork, enumeration: EnumerationResult, *, partial: bool = False
) -> Decomposition:
    """Assemble regions (models, witnesses, half-spaces) from found patterns."""
    records = [
        rec
        if rec.witness is not None or net.depth == 0
        else PatternRecord(rec.pattern, rec.prefixes, _certify_witness(rec, net))
        for rec in enumeration.records
    ]
    table, region_ids, region_nonstrict = extract_halfspaces(records, net)
    regions = []
    for rec, ids, owned in zip(records, region_ids, region_nonstrict):
        alpha, beta = local_linear_model(rec.pattern, net)
        regions.append(
            Region(rec.pattern, alpha, beta, ids, rec.witness, owned)
        )
    return Decomposition(
        net.input_dim, net.output_dim, table, tuple(regions), partial=partial
    )


def decompose(
    net: MLPNetwork, *, budget: int | None = None, threads: int = 1
) -> Decomposition:
    """Full decomposition of a network into its linear regions.

    Pure and deterministic: the same network gives an identical result, with
    any thread count.  Regions are ordered by pattern bits and the half-space
    table by (normal, offset).
    """
    return build_decomposition(
        net, enumerate_feasible(net, budget=budget, threads=threads)
    )


# ---------------------------------------------------------------------------
# File I/O


def dumps_decomposition(d: Decomposition) -> str:
    doc = {
        "format": DECOMP_FORMAT,
        "input_dim": d.input_dim,
        "output_dim": d.output_dim,
        "halfspaces": [
            {"h": hs.normal.tolist(), "c": hs.offset} for hs in d.halfspaces
        ],
        "regions": [
            {
                "pattern": [list(layer) for layer in region.pattern.layers],
                "alpha": region.alpha.tolist(),
                "beta": region.beta.tolist(),
                "halfspace_ids": list(region.halfspace_ids),
                "witness": region.witness.tolist(),
                "nonstrict_ids": list(region.nonstrict_ids),
            }
            for region in d.regions
        ],
    }
    if d.partial:
        doc["partial"] = True
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def loads_decomposition(text: str) -> Decomposition:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != DECOMP_FORMAT:
        raise ModelFormatError(f"expected format {DECOMP_FORMAT!r}")
    try:
        halfspaces = tuple(
            OrientedHalfspace(np.array(item["h"], dtype=np.float64), item["c"])
            for item in doc["halfspaces"]
        )
        regions = tuple(
            Region(
                ActivationPattern(tuple(tuple(layer) for layer in item["pattern"])),
                np.array(item["alpha"], dtype=np.float64),
                np.array(item["beta"], dtype=np.float64),
                tuple(item["halfspace_ids"]),
                np.array(item["witness"], dtype=np.float64),
                tuple(item.get("nonstrict_ids", ())),
            )
            for item in doc["regions"]
        )
        return Decomposition(
            int(doc["input_dim"]),
            int(doc["output_dim"]),
            halfspaces,
            regions,
            partial=bool(doc.get("partial", False)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed decomposition: {exc}") from exc


def load_decomposition(path) -> Decomposition:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_decomposition(fh.read())


def save_decomposition(d: Decomposition, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_decomposition(d))
