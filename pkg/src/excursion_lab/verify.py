"""Verification campaigns: each check returns a list of TestReport.

Every check takes a config dict (defaults below) and a master seed.  Random
sources are derived from (master seed, campaign name, replica) so adding a
campaign or a replica never perturbs another one.  Expensive shared inputs
(the lazy-law conditioned ensemble, the continuum reference) are cached per
process.
"""
from __future__ import annotations

import itertools
import math
import time
import zlib
from functools import lru_cache

import numpy as np
from scipy import stats as sps

from . import continuum as cl
from . import oracle
from .increment_laws import make_laplace_law, make_lazy_law, make_mu_law, parse_law
from .samplers import (AREA_EXCURSION, IPDSAW, ConditionSpec, derived_observables,
                       rejection_sample)
from .stats import (TestReport, chi_square_independence, binned_counts, digest,
                    jittered, ks_critical, ks_two_sample, loglog_slope)
from .walk import LatticePath, chi, chi_staircase, functionals, xi

DEFAULT_SEED = 20260917

CHECKS = ("lclt", "tails", "theorem-a", "theorem-b", "theorem-c", "theorem-d",
          "independence", "bounds")

GEOMETRIC = [16, 23, 32, 45, 64, 91, 128, 181, 256]

DEFAULTS = {
    "tails": {"law": "lazy", "N": [16, 23, 32, 45, 64, 91, 128], "L": GEOMETRIC,
              "uN_target": -1.5, "uN_tol": 0.05, "vL_target": -4 / 3, "vL_tol": 0.06,
              "tail_bound_rel": 1e-6},
    "lclt": {"law": "lazy", "n": [32, 64, 128], "area_N": 64, "continuum_count": 100_000,
             "m": 4096, "area_ks_max": 0.05},
    "theorem-a": {"L": 400, "count": 10_000, "continuum_count": 100_000, "m": 4096,
                  "s": [0.25, 0.5, 0.75], "level": 0.01},
    "theorem-b": {"count": 10_000, "m": 16384, "horizon": 4.0, "t": [0.5, 1.0],
                  "level": 0.01, "threshold_factor": 1.5},
    "theorem-c": {"L": 400, "count": 10_000, "s": 0.5, "corr_max": 0.05, "level": 0.01},
    "theorem-d": {"beta": 2.0, "L": 300, "count": 5000, "s": 0.5, "ks_max": 0.07,
                  "continuum_count": 100_000, "m": 4096, "exact_L_max": 30,
                  "exact_tol": 1e-9},
    "independence": {"law": "lazy", "count": 100_000, "area_window": [2**17, 2**19],
                     "bins": 5, "level": 0.01},
    "bounds": {"law": "lazy", "N": GEOMETRIC, "eta": 0.5, "band": 3.0, "beta": 2.0},
}

QUICK = {
    "tails": {},
    "lclt": {"continuum_count": 20_000, "m": 1024},
    "theorem-a": {"L": 100, "count": 2000, "continuum_count": 20_000, "m": 1024},
    "theorem-b": {"count": 2000, "m": 1024},
    "theorem-c": {"L": 100, "count": 2000},
    "theorem-d": {"L": 100, "count": 1000, "continuum_count": 20_000, "m": 1024,
                  "exact_L_max": 12},
    "independence": {"count": 10_000, "area_window": [2**12, 2**14]},
    "bounds": {"N": [16, 23, 32, 45, 64]},
}


def config_for(name: str, overrides: dict | None = None, quick: bool = False) -> dict:
    if name not in DEFAULTS:
        raise KeyError(name)
    cfg = dict(DEFAULTS[name])
    if quick:
        cfg.update(QUICK[name])
    if overrides:
        unknown = set(overrides) - set(cfg)
        if unknown:
            raise KeyError(f"unknown keys for {name}: {sorted(unknown)}")
        cfg.update(overrides)
    return cfg


def derive_rng(master: int, name: str, replica: int = 0) -> np.random.Generator:
    master = int(master)
    ss = np.random.SeedSequence(
        [master & 0xFFFFFFFF, master >> 32, zlib.crc32(name.encode()), int(replica)])
    return np.random.default_rng(ss)


# --- shared, cached inputs ----------------------------------------------------------


@lru_cache(maxsize=8)
def continuum_reference(count: int, m: int, s_grid: tuple, seed: int):
    return cl.excursion_observables(count, m, list(s_grid), derive_rng(seed, f"continuum-{m}"))


@lru_cache(maxsize=8)
def conditioned_ensemble(law_text: str, L: int, count: int, seed: int, s_grid: tuple):
    law = parse_law(law_text)
    spec = ConditionSpec(AREA_EXCURSION, L, law)
    ens = rejection_sample(spec, count, derive_rng(seed, f"area-{law_text}-{L}"))
    return ens, derived_observables(ens, list(s_grid))


@lru_cache(maxsize=4)
def ipdsaw_ensemble(beta: float, L: int, count: int, seed: int, s_grid: tuple):
    spec = ConditionSpec(IPDSAW, L, make_laplace_law(beta), make_mu_law(beta))
    ens = rejection_sample(spec, count, derive_rng(seed, f"ipdsaw-{beta}-{L}"))
    return ens, derived_observables(ens, list(s_grid))


S_GRID = (0.25, 0.5, 0.75)


def _s_index(s):
    return S_GRID.index(float(s))


# --- tails ---------------------------------------------------------------------------


def check_tails(cfg: dict, seed: int = DEFAULT_SEED) -> list:
    law = parse_law(cfg["law"])
    t0 = time.perf_counter()
    Ns = np.array(cfg["N"])
    u = oracle.return_probabilities(law, int(Ns.max()))
    slope_u, se_u = loglog_slope(Ns, u[Ns])
    t1 = time.perf_counter()
    Ls = np.array(cfg["L"])
    atl = oracle.area_terminal_law(law, int(Ls.max()))
    v = atl.v[Ls - 1]
    slope_v, se_v = loglog_slope(Ls, v)
    t2 = time.perf_counter()
    rel_tail = float((atl.tail_bound[Ls - 1] / v).max())
    return [
        TestReport("return-probability-slope", abs(slope_u - cfg["uN_target"]), cfg["uN_tol"],
                   sample_sizes=(len(Ns),), inputs_digest=digest(u[Ns]),
                   extra={"slope": slope_u, "stderr": se_u, "N": Ns.tolist(),
                          "u_N": u[Ns].tolist(), "seconds": t1 - t0}),
        TestReport("area-return-slope", abs(slope_v - cfg["vL_target"]), cfg["vL_tol"],
                   sample_sizes=(len(Ls),), inputs_digest=digest(v),
                   extra={"slope": slope_v, "stderr": se_v, "L": Ls.tolist(),
                          "v_L": v.tolist(), "N_cut": atl.N_cut, "seconds": t2 - t1}),
        TestReport("area-return-truncation", rel_tail, cfg["tail_bound_rel"], inclusive=True,
                   extra={"N_cut": atl.N_cut, "max_relative_tail_bound": rel_tail}),
    ]


# --- local limit theorems ----------------------------------------------------------------


def gaussian_density_constant() -> float:
    """Normalising constant of ``exp(-2y^2 + 6yz - 6z^2)``, by quadrature."""
    from scipy import integrate

    val, _ = integrate.dblquad(lambda z, y: math.exp(-2 * y * y + 6 * y * z - 6 * z * z),
                               -12, 12, -8, 8, epsabs=1e-13, epsrel=1e-13)
    return 1.0 / val


def bivariate_lclt_errors(law, ns) -> dict:
    """``n^3 max |p_n(k, a) - gbar_n(k, a)|`` for each n."""
    c = gaussian_density_constant()
    s2, s = law.sigma2, law.sigma
    want = set(int(n) for n in ns)
    out = {}
    for table in oracle.table_chain(law, 0, max(want), oracle.FREE):
        n = table.step
        if n not in want:
            continue
        y = table.positions[:, None] / (s * math.sqrt(n))
        z = table.areas[None, :] / (s * n**1.5)
        g = c * np.exp(-2 * y * y + 6 * y * z - 6 * z * z) / (s2 * n * n)
        out[n] = float(np.abs(table.mass - g).max()) * n**3
    return out


def conditioned_area_law(law, N: int):
    """Law of ``A_N`` given ``tau_tilde = N + 1``: (areas, probabilities)."""
    table = oracle.build_table(law, 0, N, oracle.POSITIVE)
    stop = np.array([float(law.probabilities[law.support <= -k].sum()) for k in table.positions])
    w = (table.mass * stop[:, None]).sum(axis=0)
    return table.areas, w / w.sum()


def ks_against_lattice(sample, values, probs, scale, name, critical) -> TestReport:
    """Sup distance between an ECDF and the lattice law spread uniformly over cells.

    The lattice law puts mass ``probs[i]`` uniformly on
    ``[(values[i] - 1/2) / scale, (values[i] + 1/2) / scale]``.
    """
    x = np.sort(np.asarray(sample, dtype=np.float64))
    v = np.asarray(values, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    cum = np.concatenate(([0.0], np.cumsum(p)))
    a = x * scale
    j = np.searchsorted(v - 0.5, a, side="right") - 1
    inside = (j >= 0) & (j < v.size)
    jj = np.clip(j, 0, v.size - 1)
    frac = np.clip(a - (v[jj] - 0.5), 0.0, 1.0)
    F = np.where(j < 0, 0.0, np.where(inside, cum[jj] + p[jj] * frac, 1.0))
    n = x.size
    i = np.arange(1, n + 1)
    d = float(max((i / n - F).max(), (F - (i - 1) / n).max()))
    return TestReport(name, d, critical, sample_sizes=(n,), inputs_digest=digest(x, p))


def check_lclt(cfg: dict, seed: int = DEFAULT_SEED) -> list:
    law = parse_law(cfg["law"])
    ns = sorted(cfg["n"])
    t0 = time.perf_counter()
    err = bivariate_lclt_errors(law, ns)
    vals = [err[n] for n in ns]
    increase = max(vals[i + 1] - vals[i] for i in range(len(vals) - 1))
    info = {"n": ns, "scaled_error": vals, "seconds": time.perf_counter() - t0}
    reports = [
        TestReport("bivariate-lclt-monotone", increase, 0.0, inclusive=True, extra=info),
        TestReport("bivariate-lclt-ratio", vals[-1] / vals[0], 2.0, extra=info),
    ]
    t0 = time.perf_counter()
    N = int(cfg["area_N"])
    areas, probs = conditioned_area_law(law, N)
    ref = continuum_reference(cfg["continuum_count"], cfg["m"], S_GRID, seed)
    rep = ks_against_lattice(ref.area, areas, probs, law.sigma * N**1.5,
                             "area-lclt-shape", cfg["area_ks_max"])
    rep.extra = {"N": N, "m": cfg["m"], "seconds": time.perf_counter() - t0}
    reports.append(rep)
    return reports


# --- conditioned excursions ----------------------------------------------------------


def check_theorem_a(cfg: dict, seed: int = DEFAULT_SEED) -> list:
    law = make_lazy_law()
    L = int(cfg["L"])
    ens, tab = conditioned_ensemble("lazy", L, cfg["count"], seed, S_GRID)
    ref = continuum_reference(cfg["continuum_count"], cfg["m"], S_GRID, seed)
    rng = derive_rng(seed, "theorem-a-jitter")
    N = tab["N"]
    sig = law.sigma
    reports = []
    for s in cfg["s"]:
        j = _s_index(s)
        x = jittered(tab[f"S_at_{j}"], sig * np.sqrt(N), rng)
        r = ks_two_sample(x, ref.shape[:, j], wy=ref.weight, name=f"shape-marginal-s={s:g}",
                          level=cfg["level"])
        reports.append(r)
    tau = jittered(N, (L / sig) ** (2 / 3), rng)
    r = ks_two_sample(tau, ref.R, wy=ref.weight, name="length-scaling", level=cfg["level"])
    r.extra["plain_normalisation_ks"] = ks_two_sample(
        N / L ** (2 / 3), ref.R, wy=ref.weight).statistic
    reports.append(r)
    for s in cfg["s"]:
        j = _s_index(s)
        x = jittered(tab[f"S_chi_{j}"], np.full(N.size, sig ** (2 / 3) * L ** (1 / 3)), rng)
        reports.append(ks_two_sample(x, ref.timechanged[:, j], wy=ref.weight,
                                     name=f"area-time-marginal-s={s:g}", level=cfg["level"]))
    for r in reports:
        r.extra.update({"L": L, "acceptance_rate": ens.acceptance_rate})
    return reports


def check_theorem_c(cfg: dict, seed: int = DEFAULT_SEED) -> list:
    law = make_lazy_law()
    L = int(cfg["L"])
    ens, tab = conditioned_ensemble("lazy", L, cfg["count"], seed, S_GRID)
    j = _s_index(cfg["s"])
    N = tab["N"]
    rng = derive_rng(seed, "theorem-c")
    x = jittered(tab[f"Sbar_at_{j}"], law.sigma * np.sqrt(N), rng)
    normal = rng.normal(0.0, math.sqrt(0.5), x.size)
    r1 = ks_two_sample(x, normal, name="companion-marginal", level=cfg["level"])
    # diagnostics only: the entrance step X_1 = +1 leaves an O(1) offset in Sbar
    r1.extra.update({"L": L, "mean": float(x.mean()), "variance": float(x.var()),
                     "mean_stderr": float(x.std() / math.sqrt(x.size)),
                     "centred_ks": ks_two_sample(x - x.mean(), normal).statistic})
    corr = float(np.corrcoef(tab[f"S_shape_{j}"], tab[f"Sbar_shape_{j}"])[0, 1])
    r2 = TestReport("companion-decorrelation", abs(corr), cfg["corr_max"],
                    sample_sizes=(x.size,), inputs_digest=digest(tab[f"S_shape_{j}"]),
                    extra={"correlation": corr})
    return [r1, r2]


def check_theorem_d(cfg: dict, seed: int = DEFAULT_SEED) -> list:
    beta = float(cfg["beta"])
    L = int(cfg["L"])
    j = _s_index(cfg["s"])
    law = make_laplace_law(beta)
    ens, tab = ipdsaw_ensemble(beta, L, cfg["count"], seed, S_GRID)
    lazy = make_lazy_law()
    lens, ltab = conditioned_ensemble("lazy", L, cfg["count"], seed, S_GRID)
    ref = continuum_reference(cfg["continuum_count"], cfg["m"], S_GRID, seed)
    rng = derive_rng(seed, "theorem-d-jitter")
    x = jittered(tab[f"absS_xi_{j}"], np.full(len(ens), law.sigma ** (2 / 3) * L ** (1 / 3)), rng)
    y = jittered(ltab[f"S_chi_{j}"], np.full(len(lens), lazy.sigma ** (2 / 3) * L ** (1 / 3)), rng)
    r1 = ks_two_sample(x, y, name="geometric-area-vs-lazy")
    r1.critical_value = cfg["ks_max"]
    r2 = ks_two_sample(x, ref.timechanged[:, j], wy=ref.weight, name="geometric-area-vs-continuum")
    r2.critical_value = cfg["ks_max"]
    # diagnostics only: K = n + G leaves an area of about L - tau for |S|
    x_eff = jittered(tab[f"absS_xi_{j}"], law.sigma ** (2 / 3) * (L - tab["N"]) ** (1 / 3), rng)
    for r in (r1, r2):
        r.extra.update({"L": L, "beta": beta, "acceptance_rate": ens.acceptance_rate,
                        "mean_tau": float(tab["N"].mean()), "mean_scaled": float(x.mean()),
                        "continuum_mean": float(np.average(ref.timechanged[:, j], weights=ref.weight)),
                        "effective_area_ks_vs_continuum": ks_two_sample(
                            x_eff, ref.timechanged[:, j], wy=ref.weight).statistic})
    mu = make_mu_law(beta)
    t0 = time.perf_counter()
    worst = 0.0
    for Lx in range(1, int(cfg["exact_L_max"]) + 1):
        try:
            a = oracle.ipdsaw_conditional_law(law, mu, Lx, True)
            b = oracle.ipdsaw_conditional_law(law, mu, Lx, False)
        except oracle.ZeroConditioningMass:
            continue
        worst = max(worst, float(np.abs(a.marginals - b.marginals).max()),
                    float(np.abs(a.tau_law - b.tau_law).max()))
    r3 = TestReport("ipdsaw-zero-end-invariance", worst, cfg["exact_tol"], inclusive=True,
                    extra={"L_max": cfg["exact_L_max"], "beta": beta,
                           "seconds": time.perf_counter() - t0})
    return [r1, r2, r3]


# --- continuum identities ----------------------------------------------------------------


def theorem_b_samples(count: int, m: int, horizon: float, rng, threshold_factor=1.5,
                      chunk: int = 500):
    """Marginals at 1/2 and 1 and the last zero before 1, for Y and for phi(rho)."""
    thr = threshold_factor * math.sqrt(1.0 / m)
    y = np.empty((count, 3))
    for i in range(count):
        p = cl.y_process(m, horizon, rng)
        y[i] = (p.values[m // 2], p.values[m], cl.last_zero_before(p, 1.0, thr))
    z = np.empty((count, 3))
    done = 0
    while done < count:
        k = min(chunk, count - done)
        rho = np.sqrt(cl.besq_paths(4.0 / 3.0, 0.0, m, rng, k))
        yy = cl.phi_values(rho)
        low = yy <= thr
        idx = np.where(low.any(axis=1), m - np.argmax(low[:, ::-1], axis=1), 0)
        z[done : done + k, 0] = yy[:, m // 2]
        z[done : done + k, 1] = yy[:, m]
        z[done : done + k, 2] = idx / m
        done += k
    return y, z


def check_theorem_b(cfg: dict, seed: int = DEFAULT_SEED) -> list:
    rng = derive_rng(seed, "theorem-b")
    y, z = theorem_b_samples(cfg["count"], cfg["m"], cfg["horizon"], rng,
                             cfg["threshold_factor"])
    reports = []
    for col, t in enumerate(cfg["t"]):
        reports.append(ks_two_sample(y[:, col], z[:, col], name=f"bessel-marginal-t={t:g}",
                                     level=cfg["level"]))
    r = ks_two_sample(y[:, 2], z[:, 2], name="last-zero-before-1", level=cfg["level"])
    r.extra["threshold"] = cfg["threshold_factor"] * math.sqrt(1.0 / cfg["m"])
    reports.append(r)
    return reports


def raw_excursion_shapes(law, window, count, rng):
    """Heights and areas of unconditioned excursions whose area lies in ``window``."""
    from .samplers import _seed32

    return _raw_shapes(law.cdf, law.support, int(window[0]), int(window[1]), int(count),
                       _seed32(rng))


def _make_raw_shapes():
    import numba

    @numba.njit(cache=True)
    def kernel(cdf, support, alo, ahi, count, seed):
        np.random.seed(seed)
        A = np.empty(count, np.int64)
        H = np.empty(count, np.int64)
        got = 0
        tries = 0
        while got < count:
            tries += 1
            s = 0
            a = 0
            h = 0
            while True:
                u = np.random.random()
                j = np.searchsorted(cdf, u, side="right")
                if j >= support.size:
                    j = support.size - 1
                s += support[j]
                if s <= 0:
                    break
                a += s
                if s > h:
                    h = s
                if a > ahi:
                    break
            if s <= 0 and a >= alo:
                A[got] = a
                H[got] = h
                got += 1
        return A, H, tries

    return kernel


_raw_shapes = _make_raw_shapes()


def check_independence(cfg: dict, seed: int = DEFAULT_SEED) -> list:
    """Height of the area-normalised excursion against its area, binned by quantiles."""
    law = parse_law(cfg["law"])
    rng = derive_rng(seed, "independence")
    A, H, tries = raw_excursion_shapes(law, cfg["area_window"], cfg["count"], rng)
    shape = H / A ** (1.0 / 3.0)
    q = np.linspace(0, 1, cfg["bins"] + 1)
    xe = np.quantile(shape, q)
    ye = np.quantile(A, q)
    xe[-1] = np.nextafter(xe[-1], np.inf)
    ye[-1] += 1
    rep = chi_square_independence(binned_counts(shape, A, xe, ye), name="shape-area-independence",
                                  level=cfg["level"])
    rep.extra.update({"tries": int(tries), "area_window": list(cfg["area_window"])})
    return [rep]


def check_bounds(cfg: dict, seed: int = DEFAULT_SEED) -> list:
    law = parse_law(cfg["law"])
    probe = oracle.bound_probe(law, cfg["N"], cfg["eta"])
    reports = []
    for key, vals in probe.items():
        if key == "N":
            continue
        v = np.asarray(vals)
        reports.append(TestReport(f"bound-{key}", float(v.max() / v.min()), cfg["band"],
                                  inclusive=True, extra={"N": probe["N"], "scaled": v.tolist()}))
    beta = cfg["beta"]
    ip = oracle.ipdsaw_bound_probe(make_laplace_law(beta), make_mu_law(beta), cfg["N"])
    for key in ("tau_tail", "pos_sup"):
        v = np.asarray(ip[key])
        reports.append(TestReport(f"bound-ipdsaw-{key}", float(v.max() / v.min()), cfg["band"],
                                  inclusive=True, extra={"N": ip["N"], "scaled": v.tolist()}))
    return reports


RUNNERS = {
    "lclt": check_lclt,
    "tails": check_tails,
    "theorem-a": check_theorem_a,
    "theorem-b": check_theorem_b,
    "theorem-c": check_theorem_c,
    "theorem-d": check_theorem_d,
    "independence": check_independence,
    "bounds": check_bounds,
}


def run_check(name: str, overrides: dict | None = None, seed: int = DEFAULT_SEED,
              quick: bool = False):
    if name not in RUNNERS:
        raise KeyError(name)
    cfg = config_for(name, overrides, quick)
    return cfg, RUNNERS[name](cfg, seed)


# --- invariant suite ---------------------------------------------------------------------


def enumerate_table(law, n: int, start: int = 0) -> dict:
    """Brute force over all increment words: ``{(S_n, A_n): probability}``."""
    out = {}
    pairs = list(zip(law.support.tolist(), law.probabilities.tolist()))
    for word in itertools.product(pairs, repeat=n):
        s, a, p = start, 0, 1.0
        for x, px in word:
            s += x
            a += s
            p *= px
        out[(s, a)] = out.get((s, a), 0.0) + p
    return out


def check_invariants(seed: int = DEFAULT_SEED, m: int = 16384, calibration_reps: int = 200) -> list:
    reports = []
    law = make_lazy_law()
    # DP conservation on the free chain
    worst = 0.0
    for table in oracle.table_chain(law, 0, 128, oracle.FREE):
        worst = max(worst, abs(table.total() - 1.0))
    reports.append(TestReport("dp-conservation", worst, 1e-12, inclusive=True))
    # oracle against brute force, exactly
    mismatches = 0
    for n in range(0, 7):
        t = oracle.build_table(law, 0, n, oracle.FREE)
        brute = enumerate_table(law, n)
        nz = {(int(t.k_lo + i), int(t.a_lo + j)): float(t.mass[i, j])
              for i, j in zip(*np.nonzero(t.mass))}
        mismatches += int(nz != brute)
    reports.append(TestReport("oracle-vs-enumeration", float(mismatches), 0.0, inclusive=True))
    # normalisation
    rng = derive_rng(seed, "invariants")
    idem, unit = 0.0, 0.0
    for _ in range(20):
        e = cl.bessel3_bridge_excursion(m, rng)
        u = cl.normalize_by_area(e)
        uu = cl.normalize_by_area(u)
        idem = max(idem, float(np.abs(uu.values - u.values).max()), abs(uu.h - u.h))
        unit = max(unit, abs(u.area() - 1.0))
    reports.append(TestReport("normalisation-idempotence", idem, 1e-9, inclusive=True))
    reports.append(TestReport("normalised-area-unit", unit, 1e-6, inclusive=True))
    # pathwise inverse identities
    bad = 0
    for _ in range(200):
        vals = _positive_excursion(law, rng)
        path = LatticePath.from_increments(0, np.diff(vals))
        f = functionals(path)
        total = int(f.algebraic_area[f.tau_tilde - 1])
        for s in range(1, total + 1):
            c = chi(f, s)
            if not (f.algebraic_area[c - 1] >= s and (c == 1 or f.algebraic_area[c - 2] < s)):
                bad += 1
            if chi_staircase(f, s) != c:
                bad += 1
        K = f.perturbed_area
        for s in range(1, int(K[-1]) + 1):
            x = xi(f, s)
            if not (K[x - 1] >= s and (x == 1 or K[x - 2] < s)):
                bad += 1
    reports.append(TestReport("inverse-identities", float(bad), 0.0, inclusive=True))
    # self-calibration
    pv = []
    for _ in range(calibration_reps):
        pv.append(ks_two_sample(rng.standard_normal(10_000), rng.standard_normal(10_000)).p_value)
    kp = float(sps.kstest(pv, "uniform").pvalue)
    reports.append(TestReport("ks-calibration", 0.0, p_value=kp, sample_sizes=(calibration_reps,),
                              critical_value=None))
    rejections = 0
    for _ in range(calibration_reps):
        xy = rng.integers(0, 4, (2, 2000))
        counts = binned_counts(xy[0], xy[1], np.arange(5) - 0.5, np.arange(5) - 0.5)
        rejections += int(not chi_square_independence(counts).passed)
    bp = float(sps.binomtest(rejections, calibration_reps, 0.01, alternative="greater").pvalue)
    reports.append(TestReport("chi-square-calibration", float(rejections), p_value=bp,
                              sample_sizes=(calibration_reps,)))
    xs = np.array([2.0, 3, 5, 8, 13, 21])
    sl, _ = loglog_slope(xs, 7 * xs ** (-4 / 3))
    reports.append(TestReport("slope-calibration", abs(sl + 4 / 3), 1e-12, inclusive=True))
    return reports


def _positive_excursion(law, rng, min_len=3):
    while True:
        x = law.sample(rng, 4000)
        s = np.concatenate(([0], np.cumsum(x)))
        hit = np.flatnonzero(s[1:] <= 0)
        if hit.size and hit[0] + 1 >= min_len:
            return s[: hit[0] + 2]
