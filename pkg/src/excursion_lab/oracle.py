"""Exact probability tables over (position, area) for small walks.

The forward recursion is

    p_{m+1}(k', a') = sum_k p_m(k, a' - k') P(X = k' - k),

optionally restricted to ``k' >= 1`` (the walk stays strictly positive at the
interior indices).  Tables are dense over the bounding box of the reachable
set.  Arithmetic is float64 by default; ``exact=True`` switches to
``fractions.Fraction`` entries, which is only sensible for a dozen steps.

Several routines carry extra leading "tag" axes in front of the
(position, area) axes: tagging the position at an intermediate time is how the
joint law at several times is spliced together by the Markov property.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .increment_laws import IncrementLaw, InitialLaw, point_mass
from .walk import LatticePath, floor_index

FREE = "free"
POSITIVE = "positive_interior"
EXCURSION_END = "excursion_end"
CONSTRAINT_TAGS = {FREE: 0, POSITIVE: 1, EXCURSION_END: 2}

DEFAULT_BUDGET_BYTES = 1_500_000_000
_MAGIC = b"EXLT"


class BudgetExceeded(MemoryError):
    pass


class ZeroConditioningMass(ValueError):
    pass


@dataclass(frozen=True)
class JointLawTable:
    """``mass[..., i, j] = P(S_n = k_lo + i, A_n = a_lo + j, constraint)``."""

    step: int
    constraint: str
    k_lo: int
    a_lo: int
    mass: np.ndarray
    truncation_error: float = 0.0
    start_label: str = "delta:0"

    @property
    def k_hi(self) -> int:
        return self.k_lo + self.mass.shape[-2] - 1

    @property
    def a_hi(self) -> int:
        return self.a_lo + self.mass.shape[-1] - 1

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.k_lo, self.k_hi + 1)

    @property
    def areas(self) -> np.ndarray:
        return np.arange(self.a_lo, self.a_hi + 1)

    def get(self, k: int, a: int):
        i, j = k - self.k_lo, a - self.a_lo
        if 0 <= i < self.mass.shape[-2] and 0 <= j < self.mass.shape[-1]:
            return self.mass[..., i, j]
        return 0.0

    def total(self):
        if self.mass.dtype == object:
            return sum(self.mass.ravel().tolist(), Fraction(0))
        return math.fsum(self.mass.ravel())

    def position_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=-1)

    def area_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=-2)

    def to_bytes(self) -> bytes:
        if self.mass.ndim != 2:
            raise ValueError("only untagged tables serialise")
        header = struct.pack(
            "<4s9d",
            _MAGIC,
            float(self.step),
            float(CONSTRAINT_TAGS[self.constraint]),
            float(self.k_lo),
            float(self.k_hi),
            float(self.a_lo),
            float(self.a_hi),
            float(-self.k_lo),  # row index of position 0
            float(-self.a_lo),  # column index of area 0
            float(self.truncation_error),
        )
        return header + np.ascontiguousarray(self.mass, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "JointLawTable":
        size = struct.calcsize("<4s9d")
        magic, n, tag, k_lo, k_hi, a_lo, a_hi, _, _, trunc = struct.unpack(
            "<4s9d", blob[:size]
        )
        if magic != _MAGIC:
            raise ValueError("not a joint-law table")
        rows, cols = int(k_hi - k_lo) + 1, int(a_hi - a_lo) + 1
        mass = np.frombuffer(blob[size:], dtype="<f8").reshape(rows, cols).copy()
        constraint = {v: k for k, v in CONSTRAINT_TAGS.items()}[int(tag)]
        return cls(int(n), constraint, int(k_lo), int(a_lo), mass, trunc)

    def to_csv(self) -> str:
        lines = ["k,a,p"]
        ii, jj = np.nonzero(self.mass)
        for i, j in zip(ii, jj):
            lines.append(f"{self.k_lo + i},{self.a_lo + j},{float(self.mass[i, j]):.17g}")
        return "\n".join(lines) + "\n"


def _law_vector(law: IncrementLaw, exact: bool):
    kmin, p = law.dense()
    if exact:
        p = np.array([Fraction(float(x)) for x in p], dtype=object)
    return kmin, p


def _zeros(shape, exact):
    if exact:
        out = np.empty(shape, dtype=object)
        out.fill(Fraction(0))
        return out
    return np.zeros(shape)


def _check_budget(shape, budget):
    if budget is not None and 8 * math.prod(shape) > budget:
        raise BudgetExceeded(f"table of shape {shape} exceeds {budget} bytes")


def _trim(mass, k_lo, a_lo):
    nz = mass != 0
    lead = tuple(range(mass.ndim - 2))
    rows = np.flatnonzero(nz.any(axis=lead + (mass.ndim - 1,)))
    cols = np.flatnonzero(nz.any(axis=lead + (mass.ndim - 2,)))
    if rows.size == 0:
        return mass[..., :0, :0], k_lo, a_lo
    r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
    return mass[..., r0:r1, c0:c1], k_lo + int(r0), a_lo + int(c0)


def advance(mass, k_lo, a_lo, law_vec, positive, area_max=None, budget=DEFAULT_BUDGET_BYTES):
    """One step of the (position, area) recursion on the trailing two axes."""
    kmin, p = law_vec
    exact = mass.dtype == object
    lead = mass.shape[:-2]
    R, W = mass.shape[-2:]
    if R == 0:
        return mass, k_lo, a_lo
    S = p.size
    _check_budget(lead + (R + S - 1, W + R + S), budget)
    tmp = _zeros(lead + (R + S - 1, W), exact)
    for j in range(S):
        if p[j] != 0:
            tmp[..., j : j + R, :] += p[j] * mass
    nk_lo = k_lo + kmin
    first = max(0, 1 - nk_lo) if positive else 0
    tmp = tmp[..., first:, :]
    nk_lo += first
    rows = tmp.shape[-2]
    if rows <= 0:
        return _zeros(lead + (0, 0), exact), nk_lo, a_lo
    out = _zeros(lead + (rows, W + rows - 1), exact)
    for i in range(rows):
        out[..., i, i : i + W] = tmp[..., i, :]
    na_lo = a_lo + nk_lo
    if area_max is not None:
        keep = area_max - na_lo + 1
        out = out[..., : max(keep, 0)]
    return _trim(out, nk_lo, na_lo)


def initial_mass(start, exact=False):
    if isinstance(start, (int, np.integer)):
        start = point_mass(int(start))
    k = start.support
    mass = _zeros((int(k[-1] - k[0]) + 1, 1), exact)
    for x, px in zip(k, start.probabilities):
        mass[int(x - k[0]), 0] = Fraction(float(px)) if exact else px
    return mass, int(k[0]), 0, start.label


def table_chain(law, start=0, n=1, constraint=FREE, area_max=None, exact=False,
                budget=DEFAULT_BUDGET_BYTES):
    """Yield the tables for steps 0, 1, ..., n."""
    if constraint not in (FREE, POSITIVE):
        raise ValueError(f"chains are built for free/positive_interior, not {constraint}")
    if area_max is not None and constraint == FREE:
        raise ValueError("area cap is only exact for positive paths")
    vec = _law_vector(law, exact)
    mass, k_lo, a_lo, label = initial_mass(start, exact)
    positive = constraint == POSITIVE
    for m in range(n + 1):
        yield JointLawTable(m, constraint, k_lo, a_lo, mass,
                            m * law.tail_mass_dropped, label)
        if m < n:
            mass, k_lo, a_lo = advance(mass, k_lo, a_lo, vec, positive, area_max, budget)


def build_table(law: IncrementLaw, start=0, n: int = 1, constraint: str = FREE,
                area_max=None, exact=False, budget=DEFAULT_BUDGET_BYTES) -> JointLawTable:
    if constraint == EXCURSION_END:
        start_k = start if isinstance(start, (int, np.integer)) else None
        if start_k != 0:
            raise ValueError("excursion_end tables start from 0")
        law_map = excursion_law(law, n, exact=exact, budget=budget)
        if not law_map:
            mass = _zeros((1, 0), exact)
            return JointLawTable(n, EXCURSION_END, 0, 0, mass, n * law.tail_mass_dropped)
        a = np.array(sorted(law_map))
        mass = _zeros((1, int(a[-1] - a[0]) + 1), exact)
        for ai in a:
            mass[0, ai - a[0]] = law_map[ai]
        return JointLawTable(n, EXCURSION_END, 0, int(a[0]), mass, n * law.tail_mass_dropped)
    for table in table_chain(law, start, n, constraint, area_max, exact, budget):
        pass
    return table


def _terminal(table: JointLawTable, law: IncrementLaw):
    """Vector over areas of ``sum_k table(k, a) P(X = -k)`` (step to 0)."""
    pk = np.array([law.pmf(-int(k)) for k in table.positions], dtype=np.float64)
    if table.mass.dtype == object:
        pk = np.array([Fraction(float(x)) for x in pk], dtype=object)
    return np.tensordot(pk, table.mass, axes=([0], [-2]))


def excursion_law(law: IncrementLaw, N: int, exact=False, budget=DEFAULT_BUDGET_BYTES) -> dict:
    """``{a: P_0(A_N = a, tau_tilde = N, S_N = 0)}``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    table = build_table(law, 0, N - 1, POSITIVE, exact=exact, budget=budget)
    if N == 1:
        return {0: Fraction(float(law.pmf(0))) if exact else law.pmf(0)}
    vec = _terminal(table, law)
    return {int(table.a_lo + j): v for j, v in enumerate(vec) if v != 0}


def return_probabilities(law: IncrementLaw, N_max: int, budget=DEFAULT_BUDGET_BYTES) -> np.ndarray:
    """``u[N] = P_0(tau_tilde = N, S_N = 0)`` for ``N = 0..N_max`` (``u[0] = 0``).

    Only positions matter here, so the recursion runs on the position marginal.
    """
    kmin, p = law.dense()
    u = np.zeros(N_max + 1)
    if N_max >= 1:
        u[1] = law.pmf(0)
    x_lo, w = 0, np.array([1.0])
    for m in range(1, N_max):
        w = np.convolve(w, p)
        x_lo += kmin
        first = max(0, 1 - x_lo)
        w, x_lo = w[first:], x_lo + first
        pk = np.array([law.pmf(-(x_lo + i)) for i in range(w.size)])
        u[m + 1] = math.fsum(w * pk)
    return u


def survival_probabilities(law: IncrementLaw, N_max: int, start: int = 0) -> np.ndarray:
    """``P_start(tau_tilde > N)`` for ``N = 0..N_max``."""
    kmin, p = law.dense()
    out = np.zeros(N_max + 1)
    out[0] = 1.0
    x_lo, w = start, np.array([1.0])
    for m in range(1, N_max + 1):
        w = np.convolve(w, p)
        x_lo += kmin
        first = max(0, 1 - x_lo)
        w, x_lo = w[first:], x_lo + first
        out[m] = math.fsum(w)
    return out


@dataclass
class AreaTerminalLaw:
    L: np.ndarray
    v: np.ndarray
    N_cut: int
    tail_bound: np.ndarray
    by_length: dict


def area_terminal_law(law: IncrementLaw, L_max: int, N_cut: int | None = None,
                      keep_lengths=False, budget=DEFAULT_BUDGET_BYTES) -> AreaTerminalLaw:
    """``v_L = P_0(A_tau = L, S_tau = 0)`` for ``L = 1..L_max``.

    An excursion of length N stays >= 1 on N - 1 interior steps, so its area is
    at least N - 1.  With ``N_cut >= L_max + 1`` the truncation is therefore
    exact and the reported tail bound is 0.  For smaller cuts the bound uses the
    ``C N^{-3/2}`` decay of the return probabilities fitted on the last lengths.
    """
    if N_cut is None:
        N_cut = L_max + 1
    v = np.zeros(L_max + 1)
    by_length = {}
    for table in table_chain(law, 0, N_cut - 1, POSITIVE, area_max=L_max, budget=budget):
        N = table.step + 1
        if table.mass.size == 0:
            break
        if N == 1:
            continue  # tau_tilde = 1 with S_1 = 0 encloses area 0
        vec = _terminal(table, law)
        areas = table.areas
        sel = (areas >= 1) & (areas <= L_max)
        v[areas[sel]] += vec[sel]
        if keep_lengths:
            by_length[N] = (areas[sel].copy(), vec[sel].copy())
    if N_cut >= L_max + 1:
        tail = np.zeros(L_max)
    else:
        u = return_probabilities(law, N_cut)
        Ns = np.arange(max(2, N_cut // 2), N_cut + 1)
        C = float(np.median(u[Ns] * Ns**1.5))
        tail = np.full(L_max, 2 * C / math.sqrt(N_cut - 0.5))
    return AreaTerminalLaw(np.arange(1, L_max + 1), v[1:], N_cut, tail, by_length)


def _tag_positions(table_mass, k_lo):
    """Add a leading axis recording the current position."""
    R = table_mass.shape[-2]
    lead = table_mass.shape[:-2]
    out = (np.zeros if table_mass.dtype != object else
           (lambda s: _zeros(s, True)))(lead + (R, R, table_mass.shape[-1]))
    for i in range(R):
        out[..., i, i, :] = table_mass[..., i, :]
    return out


@dataclass
class ConditionalMarginal:
    """Exact joint law of ``(S_{floor(t_1 N)}, ..., S_{floor(t_d N)}, A_N)``.

    ``mass[x_1 - x_lo[0], ..., x_d - x_lo[d-1], a - a_lo]``, already divided by
    the conditioning probability.
    """

    N: int
    indices: tuple
    x_lo: tuple
    a_lo: int
    mass: np.ndarray
    conditioning_mass: float

    def position_law(self) -> np.ndarray:
        return self.mass.sum(axis=-1)

    def given_area(self, a: int) -> np.ndarray:
        j = a - self.a_lo
        if not 0 <= j < self.mass.shape[-1]:
            raise ZeroConditioningMass(f"area {a} has zero mass")
        col = self.mass[..., j]
        tot = col.sum()
        if tot == 0:
            raise ZeroConditioningMass(f"area {a} has zero mass")
        return col / tot


def conditional_marginal(law: IncrementLaw, N: int, t, area=None,
                         budget=DEFAULT_BUDGET_BYTES) -> ConditionalMarginal:
    """Joint law of the positions at ``floor(t_i N)`` under ``{tau = N, S_N = 0}``.

    The positive-interior chain from 0 is run to step N - 1; at each requested
    index the current position is copied into a new leading tag axis, which
    splices the segments together exactly as the Markov property does.
    With ``area`` the law is further conditioned on ``A_N = area``.
    """
    idx = tuple(int(i) for i in np.atleast_1d(floor_index(t, N)))
    if any(i < 0 or i > N for i in idx) or list(idx) != sorted(idx):
        raise ValueError("times must be sorted within [0, 1]")
    vec = _law_vector(law, False)
    mass, k_lo, a_lo, _ = initial_mass(0)
    x_lo = []
    tagged = 0
    for m in range(N):
        while tagged < len(idx) and idx[tagged] == m:
            mass = _tag_positions(mass, k_lo)
            x_lo.append(k_lo)
            tagged += 1
        if m < N - 1:
            mass, k_lo, a_lo = _advance_keep_tags(mass, k_lo, a_lo, vec, budget)
    # terminal step to 0 at time N; area is unchanged since S_N = 0
    pk = np.array([law.pmf(-int(k)) for k in range(k_lo, k_lo + mass.shape[-2])])
    final = np.tensordot(mass, pk, axes=([mass.ndim - 2], [0]))
    while tagged < len(idx):  # indices equal to N: position is 0
        final = final[np.newaxis, ...]
        x_lo.append(0)
        tagged += 1
    total = math.fsum(np.ravel(final))
    if total <= 0:
        raise ZeroConditioningMass(f"P(tau = {N}, S_N = 0) = 0")
    # tag axes were prepended, so reverse them into chronological order
    ntag = len(idx)
    order = tuple(reversed(range(ntag))) + (ntag,)
    final = np.transpose(final, order) / total
    cm = ConditionalMarginal(N, idx, tuple(x_lo), a_lo, final, total)
    if area is not None:
        law_x = cm.given_area(area)
        return ConditionalMarginal(N, idx, tuple(x_lo), area, law_x[..., np.newaxis],
                                   total * float(cm.mass[..., area - a_lo].sum()))
    return cm


def _advance_keep_tags(mass, k_lo, a_lo, vec, budget):
    # tag axes keep their own offsets; trimming only touches trailing axes
    kmin, p = vec
    lead = mass.shape[:-2]
    R, W = mass.shape[-2:]
    S = p.size
    _check_budget(lead + (R + S - 1, W + R + S), budget)
    tmp = np.zeros(lead + (R + S - 1, W))
    for j in range(S):
        if p[j] != 0:
            tmp[..., j : j + R, :] += p[j] * mass
    nk_lo = k_lo + kmin
    first = max(0, 1 - nk_lo)
    tmp = tmp[..., first:, :]
    nk_lo += first
    rows = tmp.shape[-2]
    out = np.zeros(lead + (rows, W + rows - 1))
    for i in range(rows):
        out[..., i, i : i + W] = tmp[..., i, :]
    return out, nk_lo, a_lo + nk_lo


def gradient_probe(law: IncrementLaw, n: int, table: JointLawTable | None = None,
                   budget=DEFAULT_BUDGET_BYTES) -> dict:
    """Scaled suprema of the discrete gradients of ``p_n(k, a)``."""
    if table is None:
        table = build_table(law, 0, n, FREE, budget=budget)
    m = np.pad(table.mass, 1)
    grad_k = np.abs(np.diff(m, axis=0)).max()
    grad_a = np.abs(np.diff(m, axis=1)).max()
    return {
        "n": n,
        "grad_k_sup": float(grad_k),
        "grad_a_sup": float(grad_a),
        "grad_k_scaled": float(grad_k) * n**2.5,
        "grad_a_scaled": float(grad_a) * n**3.5,
    }


def position_gradient_probe(law: IncrementLaw, n: int) -> float:
    """``n * sup_y |P_0(S_n = y + 1) - P_0(S_n = y)|``."""
    kmin, p = law.dense()
    w = np.array([1.0])
    for _ in range(n):
        w = np.convolve(w, p)
    return float(np.abs(np.diff(np.pad(w, 1))).max()) * n


class LengthChain:
    """Positive-interior tables ``F_0 .. F_{N_max - 1}`` from 0 with an area cap.

    One chain serves every excursion length up to ``N_max`` because the
    conditioned path of length N only uses the first N tables.
    """

    def __init__(self, law: IncrementLaw, N_max: int, area_max: int,
                 budget=DEFAULT_BUDGET_BYTES):
        self.law = law
        self.area_max = area_max
        self.tables = []
        used = 0
        for table in table_chain(law, 0, N_max - 1, POSITIVE, area_max=area_max, budget=budget):
            used += table.mass.nbytes
            if budget is not None and used > budget:
                raise BudgetExceeded("table chain exceeds budget")
            self.tables.append(table)
            if table.mass.size == 0:
                break

    @property
    def N_max(self) -> int:
        return len(self.tables)

    def length_weights(self, L: int) -> np.ndarray:
        """``w[N] = P_0(tau = N, A_N = L, S_N = 0)``."""
        w = np.zeros(len(self.tables) + 1)
        for table in self.tables[1:]:
            N = table.step + 1
            j = L - table.a_lo
            if 0 <= j < table.mass.shape[1]:
                col = table.mass[:, j]
                pk = np.array([self.law.pmf(-int(k)) for k in table.positions])
                w[N] = math.fsum(col * pk)
        return w

    def sample(self, N: int, L: int | None, rng: np.random.Generator) -> LatticePath:
        """Backward sampling of a path with ``tau = N, S_N = 0`` (and ``A_N = L``)."""
        if N < 2 or N > len(self.tables):
            raise ZeroConditioningMass(f"length {N} outside the chain")
        law = self.law
        last = self.tables[N - 1]
        pk = np.array([law.pmf(-int(k)) for k in last.positions])
        if L is None:
            w = last.mass * pk[:, None]
        else:
            j = L - last.a_lo
            if not 0 <= j < last.mass.shape[1]:
                raise ZeroConditioningMass(f"no excursion of length {N} and area {L}")
            w = np.zeros_like(last.mass)
            w[:, j] = last.mass[:, j] * pk
        tot = w.sum()
        if tot <= 0:
            raise ZeroConditioningMass(f"zero mass for N={N}, L={L}")
        flat = rng.choice(w.size, p=(w / tot).ravel())
        i, j = divmod(int(flat), w.shape[1])
        y, a = last.k_lo + i, last.a_lo + j
        pos = [0] * (N + 1)
        pos[N - 1] = y
        for n in range(N - 1, 0, -1):
            prev = self.tables[n - 1]
            a_prev = a - y
            jj = a_prev - prev.a_lo
            xs = prev.positions
            weights = prev.mass[:, jj] * np.array([law.pmf(y - int(x)) for x in xs])
            x = int(xs[rng.choice(xs.size, p=weights / weights.sum())])
            pos[n - 1] = x
            y, a = x, a_prev
        values = np.array(pos, dtype=np.int64)
        return LatticePath.from_increments(0, np.diff(values))


def backward_sample(law: IncrementLaw, N: int, rng: np.random.Generator, area=None,
                    chain: LengthChain | None = None) -> LatticePath:
    """Exact draw from ``P_0(. | tau = N, S_N = 0[, A_N = area])``."""
    if chain is None:
        cap = area if area is not None else N * max(law.kmax, 1) * N
        chain = LengthChain(law, N, cap)
    return chain.sample(N, area, rng)


def bound_probe(law: IncrementLaw, N_list, eta: float = 0.5,
                budget=DEFAULT_BUDGET_BYTES) -> dict:
    """Each probed probability multiplied by the rate it is claimed to decay at.

    Keys name the quantity; values are lists aligned with ``N_list``.
    """
    N_list = sorted(int(n) for n in N_list)
    N_max = N_list[-1]
    want = set(N_list)
    out = {k: [] for k in (
        "tau_tail", "pos_sup", "joint_sup", "pos_positive_sup",
        "joint_positive_sup", "pos_positive_small_start", "joint_positive_small_start",
        "pos_positive_small_end", "joint_positive_small_end", "grad_pos",
        "tau_tail_small_start", "grad_joint_k", "grad_joint_a")}
    for table in table_chain(law, 0, N_max, FREE, budget=budget):
        if table.step in want:
            N = table.step
            out["joint_sup"].append(float(table.mass.max()) * N**2)
            out["pos_sup"].append(float(table.position_marginal().max()) * N**0.5)
            g = gradient_probe(law, N, table)
            out["grad_joint_k"].append(g["grad_k_scaled"])
            out["grad_joint_a"].append(g["grad_a_scaled"])
    surv = survival_probabilities(law, N_max)
    start_sup = {N: [0.0, 0.0] for N in N_list}
    x_cap = int(eta * math.sqrt(N_max))
    for x0 in range(0, x_cap + 1):
        for table in table_chain(law, x0, N_max, POSITIVE, budget=budget):
            N = table.step
            if N not in want or x0 > eta * math.sqrt(N) or table.mass.size == 0:
                continue
            if x0 == 0:
                out["tau_tail"].append(float(surv[N]) * N**0.5)
                out["pos_positive_sup"].append(float(table.position_marginal().max()) * N)
                out["joint_positive_sup"].append(float(table.mass.max()) * N**2.5)
                rows = table.positions <= eta * math.sqrt(N)
                sub = table.mass[rows]
                out["pos_positive_small_end"].append(
                    float(sub.sum(axis=1).max(initial=0.0)) * N)
                out["joint_positive_small_end"].append(float(sub.max(initial=0.0)) * N**2.5)
            s = start_sup[N]
            s[0] = max(s[0], float(table.position_marginal().max()))
            s[1] = max(s[1], float(table.mass.max()))
    for N in N_list:
        x_top = int(math.floor(eta * math.sqrt(N) + 1e-9))
        out["tau_tail_small_start"].append(
            max(float(survival_probabilities(law, N, x)[N]) for x in range(0, x_top + 1)))
        out["pos_positive_small_start"].append(start_sup[N][0] * N**0.5)
        out["joint_positive_small_start"].append(start_sup[N][1] * N**2)
        out["grad_pos"].append(position_gradient_probe(law, N))
    out["N"] = N_list
    return out


# --- IPDSAW-type excursions under the mu start ---------------------------------
#
# tau = inf{i > 0 : S_{i-1} != 0, S_{i-1} S_i <= 0}.  Before leaving 0 the walk
# may stick at 0; afterwards it lives on one side until tau.  By symmetry the
# state is (|S_i|, K_i) with K_i = i + |S_1| + ... + |S_i|, and the event
# {tau + G_{tau-1} = L} is {K_{tau-1} = L - 1}.


def _ipdsaw_kernel(law: IncrementLaw, x_max: int):
    """Transition pieces on |S| in {0..x_max}.

    ``move[x, y]``: P(|S_{i+1}| = y, no stop | |S_i| = x);
    ``stop_any[x]`` = P(stop at next step); ``stop_zero[x]`` = P(stop with S = 0).
    """
    move = np.zeros((x_max + 1, x_max + 1))
    stop_any = np.zeros(x_max + 1)
    stop_zero = np.zeros(x_max + 1)
    for y in range(x_max + 1):
        move[0, y] = law.pmf(y) + (law.pmf(-y) if y > 0 else 0.0)
    for x in range(1, x_max + 1):
        for y in range(1, x_max + 1):
            move[x, y] = law.pmf(y - x)
        stop_any[x] = float(law.probabilities[law.support <= -x].sum())
        stop_zero[x] = law.pmf(-x)
    return move, stop_any, stop_zero


def _ipdsaw_start(mu: InitialLaw, x_max: int):
    w = np.zeros(x_max + 1)
    for k, p in zip(mu.support, mu.probabilities):
        if abs(k) <= x_max:
            w[abs(int(k))] += p
    return w


@dataclass
class IpdsawLaw:
    """Exact marginals of ``|S_i|`` for ``i < tau`` under the IPDSAW conditioning."""

    L: int
    marginals: np.ndarray  # [i, x] = P(|S_i| = x, i < tau | cond)
    tau_law: np.ndarray  # [n] = P(tau = n | cond)
    conditioning_mass: float


def ipdsaw_conditional_law(law: IncrementLaw, mu: InitialLaw, L: int,
                           end_at_zero: bool) -> IpdsawLaw:
    """Conditional marginals of ``|S_i|`` given ``{tau + G_{tau-1} = L}``.

    ``end_at_zero`` adds ``S_tau = 0`` to the conditioning.  Forward masses
    ``F_i(x, k) = P(|S_i| = x, K_i = k, tau > i)`` are combined with backward
    completion probabilities ``H(x, r)`` of ending with ``K_{tau-1} - K_i = r``.
    """
    # |S_0| does not enter K, so the start may exceed L; later |S_i| <= L - 2
    x_max = max(L, int(np.abs(mu.support).max()))
    move, stop_any, stop_zero = _ipdsaw_kernel(law, x_max)
    stop = stop_zero if end_at_zero else stop_any
    target = L - 1
    # H[x, r]: from |S| = x, probability that K grows by exactly r before stopping
    H = np.zeros((x_max + 1, target + 1))
    H[:, 0] = stop
    for r in range(1, target + 1):
        for y in range(0, min(x_max, r - 1) + 1):
            H[:, r] += move[:, y] * H[y, r - 1 - y]
    F = np.zeros((x_max + 1, target + 1))
    F[:, 0] = _ipdsaw_start(mu, x_max)
    total = math.fsum(F[:, 0] * H[:, target])
    if total <= 0:
        raise ZeroConditioningMass(f"no IPDSAW excursion with L = {L}")
    marg = np.zeros((target + 1, x_max + 1))
    tau_law = np.zeros(target + 2)
    for i in range(0, target + 1):
        # mass at time i consistent with the conditioning
        comp = np.zeros(x_max + 1)
        for k in range(target + 1):
            comp += F[:, k] * H[:, target - k]
        marg[i] = comp / total
        tau_law[i + 1] = F[:, target] @ stop / total
        newF = np.zeros_like(F)
        for y in range(x_max + 1):
            inc = 1 + y
            if inc > target:
                break
            newF[y, inc:] += move[:, y] @ F[:, : target + 1 - inc]
        F = newF
        if not F.any():
            marg = marg[: i + 1]
            tau_law = tau_law[: i + 2]
            break
    return IpdsawLaw(L, marg, tau_law, total)


def ipdsaw_survival(law: IncrementLaw, mu: InitialLaw, N_max: int):
    """``P(tau > N)`` and ``sup_x P(S_N = x, tau > N)`` for ``N = 0..N_max``.

    While the walk sits at 0 it cannot stop; once it has left 0 it stops the
    first time it reaches 0 or crosses to the other side.
    """
    kmin, p = law.dense()
    kmax = kmin + p.size - 1
    lo = int(mu.support[0]) + N_max * kmin
    hi = int(mu.support[-1]) + N_max * kmax
    w = np.zeros(hi - lo + 1)
    w[mu.support - lo] = mu.probabilities
    zero = -lo
    surv = np.zeros(N_max + 1)
    sup = np.zeros(N_max + 1)
    surv[0], sup[0] = 1.0, float(w.max())
    for n in range(1, N_max + 1):
        pos = w.copy()
        pos[: zero + 1] = 0.0
        neg = w.copy()
        neg[zero:] = 0.0
        stay = np.zeros_like(w)
        stay[zero] = w[zero]
        out = np.zeros_like(w)
        for part, keep in ((pos, slice(zero + 1, None)), (neg, slice(None, zero)), (stay, slice(None))):
            if not part.any():
                continue
            moved = np.convolve(part, p)[-kmin : -kmin + w.size]
            mask = np.zeros_like(w)
            mask[keep] = 1.0
            out += moved * mask
        w = out
        surv[n] = math.fsum(w)
        sup[n] = float(w.max())
    return surv, sup


def ipdsaw_bound_probe(law: IncrementLaw, mu: InitialLaw, N_list) -> dict:
    """``N^{1/2} P(tau > N)`` and ``N sup_x P(S_N = x, tau > N)`` under the mu start."""
    N_list = sorted(int(n) for n in N_list)
    surv, sup = ipdsaw_survival(law, mu, N_list[-1])
    N = np.array(N_list)
    return {"N": N_list, "tau_tail": (surv[N] * N**0.5).tolist(),
            "pos_sup": (sup[N] * N).tolist()}
