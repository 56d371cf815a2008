"""Conditioned excursion samplers: exact rejection and oracle-driven exact draws.

Rejection kernels are compiled with numba.  Each call seeds numba's own
generator from a 32-bit integer drawn from the caller's numpy Generator, so a
fixed numpy seed reproduces the ensemble.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numba
import numpy as np

from . import __version__
from .continuum import WeightedEnsemble
from .increment_laws import IncrementLaw, InitialLaw, point_mass
from .oracle import LengthChain, ZeroConditioningMass
from .walk import LatticePath, chi, floor_index, functionals, xi

AREA_EXCURSION = "area_excursion"
IPDSAW = "ipdsaw"
IPDSAW_ZERO_END = "ipdsaw_zero_end"
KINDS = (AREA_EXCURSION, IPDSAW, IPDSAW_ZERO_END)


class HorizonExceeded(RuntimeError):
    pass


class AcceptanceTooLow(RuntimeError):
    pass


def apply_thread_cap():
    cap = os.environ.get("EXCURSION_LAB_THREADS")
    if cap:
        numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))


@dataclass(frozen=True)
class ConditionSpec:
    kind: str
    L: int
    law: IncrementLaw
    start: object = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.L < 1:
            raise ValueError("L must be >= 1")

    def start_law(self) -> InitialLaw:
        if isinstance(self.start, InitialLaw):
            return self.start
        return point_mass(int(self.start))

    def describe(self) -> dict:
        return {"kind": self.kind, "L": self.L, "law": self.law.label,
                "start": getattr(self.start, "label", f"delta:{self.start}")}


def default_cap(L: int) -> int:
    return int(math.ceil(64 * L ** (2.0 / 3.0)))


@numba.njit(cache=True)
def _draw(cdf, support):
    u = np.random.random()
    j = np.searchsorted(cdf, u, side="right")
    if j >= support.size:
        j = support.size - 1
    return support[j]


@numba.njit(cache=True)
def _raw_kernel(cdf, support, s0, cap, ipdsaw_mode, seed):
    np.random.seed(seed)
    buf = np.empty(cap + 1, dtype=np.int64)
    buf[0] = s0
    s = s0
    for n in range(1, cap + 1):
        x = _draw(cdf, support)
        prev = s
        s = s + x
        buf[n] = s
        if ipdsaw_mode:
            if prev != 0 and prev * s <= 0:
                return buf[: n + 1], False
        elif s <= 0:
            return buf[: n + 1], False
    return buf, True


@numba.njit(cache=True)
def _reject_area(cdf, support, L, count, cap, max_tries, seed):
    """Excursions from 0 with ``S_tau = 0`` and ``A_tau = L``.

    Returns (flat positions, lengths, tries, capped).
    """
    np.random.seed(seed)
    flat = np.empty(count * 64, dtype=np.int64)
    lengths = np.empty(count, dtype=np.int64)
    buf = np.empty(cap + 1, dtype=np.int64)
    used = 0
    got = 0
    tries = 0
    capped = 0
    while got < count and tries < max_tries:
        tries += 1
        s = 0
        a = 0
        n = 0
        ok = False
        while True:
            n += 1
            if n > cap:
                capped += 1
                break
            s += _draw(cdf, support)
            buf[n] = s
            if s <= 0:
                ok = s == 0 and a == L
                break
            a += s
            if a > L:
                break
        if ok:
            if used + n > flat.size:
                new = np.empty(2 * (used + n), dtype=np.int64)
                new[:used] = flat[:used]
                flat = new
            flat[used : used + n] = buf[1 : n + 1]
            used += n
            lengths[got] = n
            got += 1
    return flat[:used], lengths[:got], tries, capped


@numba.njit(cache=True)
def _reject_ipdsaw(cdf, support, mu_cdf, mu_support, L, zero_end, count, cap, max_tries, seed):
    """Paths with ``tau + G_{tau-1} = L`` (and ``S_tau = 0`` if ``zero_end``).

    Stored as (S_0, S_1, ..., S_tau).
    """
    np.random.seed(seed)
    flat = np.empty(count * 64, dtype=np.int64)
    lengths = np.empty(count, dtype=np.int64)
    buf = np.empty(cap + 1, dtype=np.int64)
    used = 0
    got = 0
    tries = 0
    capped = 0
    target = L - 1
    while got < count and tries < max_tries:
        tries += 1
        s = _draw(mu_cdf, mu_support)
        buf[0] = s
        k = 0  # K_i
        n = 0
        ok = False
        while True:
            n += 1
            if n > cap:
                capped += 1
                break
            prev = s
            s += _draw(cdf, support)
            buf[n] = s
            if prev != 0 and prev * s <= 0:
                ok = k == target and (s == 0 or not zero_end)
                break
            k += 1 + abs(s)
            if k > target:
                break
        if ok:
            m = n + 1
            if used + m > flat.size:
                new = np.empty(2 * (used + m), dtype=np.int64)
                new[:used] = flat[:used]
                flat = new
            flat[used : used + m] = buf[: m]
            used += m
            lengths[got] = m
            got += 1
    return flat[:used], lengths[:got], tries, capped


def _seed32(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**32 - 1))


def sample_raw_excursion(law: IncrementLaw, start, rng: np.random.Generator,
                         ipdsaw_mode: bool = False, cap: int = 10**6) -> LatticePath:
    """One unconditioned excursion, truncated at tau_tilde (or tau with ``ipdsaw_mode``)."""
    s0 = start.sample(rng) if isinstance(start, InitialLaw) else int(start)
    vals, hit_cap = _raw_kernel(law.cdf, law.support, s0, cap, ipdsaw_mode, _seed32(rng))
    if hit_cap:
        raise HorizonExceeded(f"stopping time beyond the cap of {cap} steps (1 capped run)")
    return LatticePath.from_increments(int(vals[0]), np.diff(vals))


def _split(flat, lengths, with_start):
    paths = []
    off = 0
    for n in lengths:
        seg = flat[off : off + n]
        off += n
        if with_start:
            paths.append(LatticePath.from_increments(int(seg[0]), np.diff(seg)))
        else:
            paths.append(LatticePath.from_increments(0, np.diff(np.concatenate(([0], seg)))))
    return paths


def _run_kernel(spec: ConditionSpec, count, cap, max_tries, seed):
    law = spec.law
    if spec.kind == AREA_EXCURSION:
        if spec.start_law().support.tolist() != [0]:
            raise ValueError("area excursions start from 0")
        flat, lengths, tries, capped = _reject_area(
            law.cdf, law.support, spec.L, count, cap, max_tries, seed)
        return _split(flat, lengths, False), tries, capped
    mu = spec.start_law()
    flat, lengths, tries, capped = _reject_ipdsaw(
        law.cdf, law.support, mu._cdf, mu.support, spec.L,
        spec.kind == IPDSAW_ZERO_END, count, cap, max_tries, seed)
    return _split(flat, lengths, True), tries, capped


def rejection_sample(spec: ConditionSpec, count: int, rng: np.random.Generator,
                     replicas: int = 1, cap: int | None = None,
                     max_tries: int = 5 * 10**10, pilot: int = 200_000) -> WeightedEnsemble:
    """Exact draws from the conditioned law by simulating raw excursions.

    A pilot run estimates the acceptance rate; if the projected number of
    tries exceeds ``max_tries`` the call fails with ``AcceptanceTooLow``.
    Replicas use independent seeds and are merged in replica order.
    """
    apply_thread_cap()
    cap = default_cap(spec.L) if cap is None else cap
    budget = min(pilot, max_tries)
    while True:
        paths, tries, capped = _run_kernel(spec, 1, cap, budget, _seed32(rng))
        if paths:
            break
        if budget >= max_tries:
            raise AcceptanceTooLow(
                f"no acceptance in {tries} pilot tries; projected tries for {count} draws"
                f" exceed {count * tries:.3g} > budget {max_tries:.3g}")
        budget = min(4 * budget, max_tries)
    rate = 1.0 / tries
    if count / rate > max_tries:
        raise AcceptanceTooLow(f"projected {count / rate:.3g} tries > budget {max_tries:.3g}")
    per = [count // replicas + (r < count % replicas) for r in range(replicas)]
    seeds = [_seed32(rng) for _ in range(replicas)]
    items, total_tries, total_capped = [], 0, 0
    for r in range(replicas):
        if per[r] == 0:
            continue
        got, t, c = _run_kernel(spec, per[r], cap, max_tries, seeds[r])
        total_tries += t
        total_capped += c
        if len(got) < per[r]:
            raise AcceptanceTooLow(f"only {len(got)} of {per[r]} accepted in {t} tries")
        items.extend(got)
    ens = WeightedEnsemble(
        items, np.ones(len(items)), replica_count=replicas,
        acceptance_rate=len(items) / total_tries, spec=spec,
        counters={"tries": total_tries, "capped": total_capped, "cap": cap,
                  "accepted": len(items)})
    return ens


def exact_conditioned_sample(spec: ConditionSpec, count: int, rng: np.random.Generator,
                             chain: LengthChain | None = None) -> WeightedEnsemble:
    """Draws from the oracle: length N from its exact law, then a backward path."""
    if spec.kind != AREA_EXCURSION:
        raise NotImplementedError("exact sampling covers area excursions")
    L = spec.L
    if chain is None:
        chain = LengthChain(spec.law, L + 1, L)
    w = chain.length_weights(L)
    tot = w.sum()
    if tot <= 0:
        raise ZeroConditioningMass(f"no excursion with area {L}")
    Ns = rng.choice(w.size, size=count, p=w / tot)
    items = [chain.sample(int(N), L, rng) for N in Ns]
    return WeightedEnsemble(items, np.ones(count), acceptance_rate=1.0, spec=spec,
                            counters={"length_law": (w / tot).tolist()})


@dataclass
class ObservableTable:
    """Per-item observables; integer numerators are kept for continuity corrections."""

    s_grid: np.ndarray
    columns: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.columns[key]

    def to_csv(self) -> str:
        keys = list(self.columns)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys)
        n = len(self.columns[keys[0]])
        for i in range(n):
            w.writerow([_fmt(self.columns[k][i]) for k in keys])
        return buf.getvalue()


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return int(x) if isinstance(x, (int, np.integer, bool, np.bool_)) else x


def derived_observables(ensemble: WeightedEnsemble, s_grid) -> ObservableTable:
    """Rescaled observables per conditioned path.

    Besides the plain normalisations (``tau / L^{2/3}``, ``S / (sigma L^{1/3})``)
    the table carries variance-aware versions ``sigma^{2/3} tau / L^{2/3}`` and
    ``S / (sigma^{2/3} L^{1/3})``: an excursion of area L has length of order
    ``(L / sigma)^{2/3}`` and height ``sigma^{2/3} L^{1/3}``, so only these
    converge to the unit-area excursion when ``sigma != 1``.
    """
    spec: ConditionSpec = ensemble.spec
    s_grid = np.asarray(s_grid, dtype=np.float64)
    L = spec.L
    sig = spec.law.sigma
    ipd = spec.kind != AREA_EXCURSION
    cols = {k: [] for k in ("N", "L", "tau_over_L23", "tau_scaled")}
    for j in range(s_grid.size):
        for name in ("S_at", "Sbar_at", "S_shape", "Sbar_shape", "S_chi", "S_chi_over_sigma",
                     "S_chi_scaled", "Sbar_chi"):
            cols[f"{name}_{j}"] = []
        if ipd:
            for name in ("absS_xi", "absS_xi_over_sigma", "absS_xi_scaled", "Sbar_xi",
                         "Sbar_xi_scaled"):
                cols[f"{name}_{j}"] = []
    for path in ensemble.items:
        f = functionals(path)
        N = path.length
        vals = path.values
        comp = np.concatenate(([0], f.companion))
        cols["N"].append(N)
        cols["L"].append(L)
        cols["tau_over_L23"].append(N / L ** (2 / 3))
        cols["tau_scaled"].append(N * sig ** (2 / 3) / L ** (2 / 3))
        idx = np.atleast_1d(floor_index(s_grid, N))
        for j, s in enumerate(s_grid):
            i = int(idx[j])
            cols[f"S_at_{j}"].append(int(vals[i]))
            cols[f"Sbar_at_{j}"].append(int(comp[i]))
            cols[f"S_shape_{j}"].append(vals[i] / (sig * math.sqrt(N)))
            cols[f"Sbar_shape_{j}"].append(comp[i] / (sig * math.sqrt(N)))
            if ipd:
                # A is not monotone across sign changes; chi is still well defined
                c = _chi_or_end(f, s * L)
            else:
                c = chi(f, s * L) if s > 0 else 0
            cols[f"S_chi_{j}"].append(int(vals[c]))
            cols[f"S_chi_over_sigma_{j}"].append(vals[c] / (sig * L ** (1 / 3)))
            cols[f"S_chi_scaled_{j}"].append(vals[c] / (sig ** (2 / 3) * L ** (1 / 3)))
            cols[f"Sbar_chi_{j}"].append(comp[c] / (sig ** (2 / 3) * L ** (1 / 3)))
            if ipd:
                x = min(xi(f, s * L), N) if s > 0 else 0
                cols[f"absS_xi_{j}"].append(abs(int(vals[x])))
                cols[f"absS_xi_over_sigma_{j}"].append(abs(vals[x]) / (sig * L ** (1 / 3)))
                cols[f"absS_xi_scaled_{j}"].append(abs(vals[x]) / (sig ** (2 / 3) * L ** (1 / 3)))
                cols[f"Sbar_xi_{j}"].append(comp[x] / (sig * L ** (1 / 3)))
                cols[f"Sbar_xi_scaled_{j}"].append(comp[x] / (sig ** (2 / 3) * L ** (1 / 3)))
    table = ObservableTable(s_grid, {k: np.asarray(v) for k, v in cols.items()})
    return table


def _chi_or_end(f, s):
    if s <= 0:
        return 0
    hit = np.flatnonzero(f.algebraic_area >= s)
    return int(hit[0]) + 1 if hit.size else f.length


def ensemble_to_csv(ensemble: WeightedEnsemble, table: ObservableTable, seed=None) -> str:
    spec = ensemble.spec
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    obs_keys = [k for k in table.columns if k not in ("N", "L")]
    w.writerow(["seed", "replica", "N", "L", "accepted", "weight"] + obs_keys)
    for i in range(len(ensemble)):
        w.writerow([seed if seed is not None else "", 0, int(table["N"][i]), spec.L, 1,
                    _fmt(ensemble.weights[i])]
                   + [_fmt(table[k][i]) for k in obs_keys])
    return buf.getvalue()


def ensemble_manifest(ensemble: WeightedEnsemble, seed=None) -> str:
    spec = ensemble.spec
    return json.dumps({
        "spec": spec.describe() if isinstance(spec, ConditionSpec) else spec,
        "seed": seed,
        "count": len(ensemble),
        "replicas": ensemble.replica_count,
        "acceptance_rate": ensemble.acceptance_rate,
        "counters": ensemble.counters,
        "software_version": __version__,
    }, indent=2, default=float)


def length_law_counts(ensemble: WeightedEnsemble, N_max: int) -> np.ndarray:
    counts = np.zeros(N_max + 1, dtype=np.int64)
    for p in ensemble.items:
        counts[p.length] += 1
    return counts


# --- shifted-walk identity for walks conditioned to stay nonnegative ----------------


def first_good_start(positions, n):
    """``T_n = inf{k : S_{k+i} >= S_k, i = 1..n}`` on ``(S_0, S_1, ...)``; -1 if unseen."""
    s = np.asarray(positions)
    m = s.size - n
    if m <= 0:
        return -1
    # windowed minimum of the next n values
    win = np.lib.stride_tricks.sliding_window_view(s[1:], n)[:m]
    ok = np.flatnonzero(win.min(axis=1) >= s[:m])
    return int(ok[0]) if ok.size else -1


def shifted_walk_check(law: IncrementLaw, n: int, a, abar, count: int,
                       rng: np.random.Generator, horizon: int = 4096,
                       reindex_companion: bool = True) -> dict:
    """Monte Carlo estimates of both sides of the shifted-walk identity.

    Left: ``P(S_k <= a_k, Sbar_k <= abar_k, k <= n | S_k >= 0, k <= n)`` by
    rejection.  Right: the same event for the walk seen from ``T_n``.  With
    ``reindex_companion`` the alternating signs restart at ``T_n``; otherwise
    the companion keeps its global parity (``Sbar_{k+T} - Sbar_T``).
    """
    a = np.asarray(a, dtype=float)
    abar = np.asarray(abar, dtype=float)
    signs = np.where(np.arange(1, n + 1) % 2 == 1, 1, -1)
    hits, kept = 0, 0
    batch = 100_000
    while kept < count:
        x = law.sample(rng, (batch, n))
        s = np.cumsum(x, axis=1)
        good = (s >= 0).all(axis=1)
        sb = np.cumsum(x * signs, axis=1)
        ev = (s <= a).all(axis=1) & (sb <= abar).all(axis=1)
        take = np.flatnonzero(good)[: count - kept]
        hits += int(ev[take].sum())
        kept += take.size
    left = hits / kept
    rhits, rkept, discarded = 0, 0, 0
    while rkept < count:
        x = law.sample(rng, horizon)
        s = np.concatenate(([0], np.cumsum(x)))
        T = first_good_start(s, n)
        if T < 0:
            discarded += 1
            continue
        seg = x[T : T + n]
        ds = np.cumsum(seg)
        if reindex_companion:
            dsb = np.cumsum(seg * signs)
        else:
            glob = np.where(np.arange(T + 1, T + n + 1) % 2 == 1, 1, -1)
            dsb = np.cumsum(seg * glob)
        rhits += int((ds <= a).all() and (dsb <= abar).all())
        rkept += 1
    right = rhits / rkept
    se = math.sqrt(left * (1 - left) / kept + right * (1 - right) / rkept)
    return {"left": left, "right": right, "se": se,
            "z": (left - right) / se if se > 0 else 0.0, "discarded": discarded}
