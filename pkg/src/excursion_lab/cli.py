"""``excursion-lab <oracle|sample|verify|report|audit>`` batch entry point.

Every run writes its data files plus one ``manifest-<command>.json`` naming
them with their SHA-256 digests, the effective configuration and the seed.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import continuum as cl
from . import oracle
from . import verify as vf
from .increment_laws import LawError, make_laplace_law, make_mu_law, parse_law
from .samplers import (AREA_EXCURSION, KINDS, AcceptanceTooLow, ConditionSpec,
                       derived_observables, ensemble_manifest, ensemble_to_csv,
                       exact_conditioned_sample, rejection_sample)

COMMANDS = ("oracle", "sample", "verify", "report", "audit")

COMMAND_DEFAULTS = {
    "oracle": {"law": "lazy", "uN": None, "vL": None, "table": None, "constraint": "free",
               "gradient": None, "bounds": None, "ipdsaw": None, "beta": 2.0},
    "sample": {"kind": "area_excursion", "law": "lazy", "L": 8, "n": 100, "m": 1024,
               "exact": False, "beta": 2.0, "s": [0.25, 0.5, 0.75]},
    "verify": {"check": None, "quick": False, "overrides": {}},
    "report": {},
    "audit": {},
}


class ConfigError(ValueError):
    pass


class CheckAborted(RuntimeError):
    pass


def fmt(x) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    return str(x)


@dataclass
class RunConfig:
    command: str
    seed: int = vf.DEFAULT_SEED
    out: str = "."
    params: dict = field(default_factory=dict)

    @classmethod
    def build(cls, command, params=None, seed=None, out=None):
        if command not in COMMAND_DEFAULTS:
            raise ConfigError(f"unknown command {command!r}")
        merged = dict(COMMAND_DEFAULTS[command])
        for k, v in (params or {}).items():
            if k not in merged:
                raise ConfigError(f"unknown key {k!r} for {command}")
            merged[k] = v
        return cls(command, vf.DEFAULT_SEED if seed is None else int(seed),
                   "." if out is None else str(out), merged)

    def to_json(self) -> str:
        return json.dumps({"command": self.command, "seed": self.seed, "out": self.out,
                           "params": self.params}, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        return cls.build(d.get("command"), d.get("params", {}), d.get("seed"), d.get("out"))


def parse_range(text):
    """``"2..64"`` -> [2, ..., 64]; ``"16,32"`` -> [16, 32]."""
    if text is None:
        return None
    if isinstance(text, list):
        return [int(x) for x in text]
    text = str(text)
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(x) for x in text.split(",") if x]


def _commit(outdir: Path, staged: dict) -> list:
    """Write staged files only once the whole command has succeeded."""
    outdir.mkdir(parents=True, exist_ok=True)
    listing = []
    for name, payload in staged.items():
        data = payload.encode() if isinstance(payload, str) else payload
        (outdir / name).write_bytes(data)
        listing.append({"file": name, "sha256": hashlib.sha256(data).hexdigest()})
    return listing


def _versions():
    import numba
    import scipy

    return {"excursion_lab": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def _manifest(cfg: RunConfig, started, listing, reports=None, verdict=None, extra=None):
    doc = {
        "command": cfg.command,
        "config": json.loads(cfg.to_json()),
        "seed": cfg.seed,
        "wall_clock_seconds": time.time() - started,
        "versions": _versions(),
        "outputs": listing,
    }
    if reports is not None:
        doc["reports"] = [r.to_dict() for r in sorted(reports, key=lambda r: r.name)]
        doc["verdict"] = verdict
    if extra:
        doc.update(extra)
    return doc


def _dump_manifest(outdir: Path, doc):
    path = outdir / f"manifest-{doc['command']}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(x):
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()


# --- commands ---------------------------------------------------------------------------


def cmd_oracle(cfg: RunConfig):
    p = cfg.params
    law = parse_law(p["law"])
    staged = {}
    uN = parse_range(p["uN"])
    if uN:
        u = oracle.return_probabilities(law, max(uN))
        staged["uN.csv"] = _csv(["N", "u_N"], [(N, u[N]) for N in uN])
    vL = parse_range(p["vL"])
    if vL:
        atl = oracle.area_terminal_law(law, max(vL))
        staged["vL.csv"] = _csv(["L", "v_L", "tail_bound"],
                                [(L, atl.v[L - 1], atl.tail_bound[L - 1]) for L in vL])
    if p["table"] is not None:
        n = int(p["table"])
        t = oracle.build_table(law, 0, n, p["constraint"])
        staged[f"table-{p['constraint']}-{n}.csv"] = t.to_csv()
        staged[f"table-{p['constraint']}-{n}.bin"] = t.to_bytes()
    if p["gradient"] is not None:
        g = oracle.gradient_probe(law, int(p["gradient"]))
        staged["gradient.csv"] = _csv(list(g), [list(g.values())])
    if p["bounds"] is not None:
        b = oracle.bound_probe(law, parse_range(p["bounds"]))
        keys = [k for k in b if k != "N"]
        staged["bounds.csv"] = _csv(["N"] + keys,
                                    [[N] + [b[k][i] for k in keys] for i, N in enumerate(b["N"])])
    if p["ipdsaw"] is not None:
        beta = float(p["beta"])
        L = int(p["ipdsaw"])
        a = oracle.ipdsaw_conditional_law(make_laplace_law(beta), make_mu_law(beta), L, True)
        b = oracle.ipdsaw_conditional_law(make_laplace_law(beta), make_mu_law(beta), L, False)
        rows = [(i, x, a.marginals[i, x], b.marginals[i, x])
                for i in range(a.marginals.shape[0]) for x in range(a.marginals.shape[1])
                if a.marginals[i, x] > 0 or b.marginals[i, x] > 0]
        staged[f"ipdsaw-{L}.csv"] = _csv(["i", "abs_S", "p_zero_end", "p_any_end"], rows)
    return staged, None


def cmd_sample(cfg: RunConfig):
    p = cfg.params
    rng = vf.derive_rng(cfg.seed, "sample")
    staged = {}
    if p["kind"] == "continuum_E":
        ens = cl.sample_area_normalized_excursion(int(p["n"]), int(p["m"]), rng)
        rows = [(i, w, e.area(), e.duration, e.values.max())
                for i, (e, w) in enumerate(zip(ens.items, ens.weights))]
        staged["ensemble.csv"] = _csv(["item", "weight", "area", "R", "height"], rows)
        staged["ensemble.json"] = json.dumps({"spec": ens.spec, "seed": cfg.seed,
                                              "count": len(ens), "software_version": __version__},
                                             indent=2)
        return staged, {"count": len(ens)}
    if p["kind"] not in KINDS:
        raise ConfigError(f"unknown kind {p['kind']!r}")
    if p["kind"] == AREA_EXCURSION:
        spec = ConditionSpec(AREA_EXCURSION, int(p["L"]), parse_law(p["law"]))
    else:
        beta = float(p["beta"])
        spec = ConditionSpec(p["kind"], int(p["L"]), make_laplace_law(beta), make_mu_law(beta))
    if p["exact"]:
        ens = exact_conditioned_sample(spec, int(p["n"]), rng)
    else:
        ens = rejection_sample(spec, int(p["n"]), rng)
    table = derived_observables(ens, p["s"])
    staged["ensemble.csv"] = ensemble_to_csv(ens, table, cfg.seed)
    staged["ensemble.json"] = ensemble_manifest(ens, cfg.seed)
    paths = io.StringIO()
    w = csv.writer(paths, lineterminator="\n")
    w.writerow(["item", "i", "S_i"])
    for k, path in enumerate(ens.items):
        for i, s in enumerate(path.values):
            w.writerow([k, i, int(s)])
    staged["paths.csv"] = paths.getvalue()
    return staged, {"count": len(ens), "acceptance_rate": ens.acceptance_rate}


def cmd_verify(cfg: RunConfig):
    p = cfg.params
    name = p["check"]
    if name not in vf.CHECKS:
        raise ConfigError(f"unknown check {name!r}")
    try:
        vf.config_for(name, p.get("overrides") or {}, bool(p["quick"]))
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    try:
        eff, reports = vf.run_check(name, p.get("overrides") or {}, cfg.seed, bool(p["quick"]))
    except (ConfigError, AcceptanceTooLow):
        raise
    except Exception as exc:  # infrastructure failure: keep a manifest, flag it
        raise CheckAborted(f"{type(exc).__name__}: {exc}") from exc
    staged = {"reports.json": json.dumps([r.to_dict() for r in reports], indent=2,
                                         default=_json_default)}
    verdict = "pass" if all(r.passed for r in reports) else "fail"
    return staged, {"reports": reports, "verdict": verdict, "effective_check_config": eff}


def _existing_dir(path: str) -> Path:
    outdir = Path(path)
    if not outdir.is_dir():
        raise ConfigError(f"no such directory: {path}")
    return outdir


def cmd_report(cfg: RunConfig):
    outdir = _existing_dir(cfg.out)
    rows = []
    for mf in sorted(outdir.glob("manifest-*.json")):
        doc = json.loads(mf.read_text())
        for r in doc.get("reports", []):
            rows.append((doc["config"]["params"].get("check", doc["command"]), r["name"],
                         r["statistic"], r.get("critical_value"), r.get("p_value"), r["verdict"]))
    staged = {"summary.csv": _csv(["check", "test", "statistic", "critical_value", "p_value",
                                   "verdict"], rows)}
    for row in rows:
        print(f"{row[0]:14s} {row[1]:36s} {row[5]}")
    return staged, {"tests": len(rows)}


def audit_directory(outdir: Path) -> dict:
    """Every file must be listed by exactly one manifest with a matching digest."""
    owners = {}
    problems = []
    manifests = sorted(outdir.glob("manifest-*.json"))
    for mf in manifests:
        doc = json.loads(mf.read_text())
        for entry in doc.get("outputs", []):
            owners.setdefault(entry["file"], []).append(mf.name)
            f = outdir / entry["file"]
            if not f.exists():
                problems.append(f"missing: {entry['file']}")
            elif hashlib.sha256(f.read_bytes()).hexdigest() != entry["sha256"]:
                problems.append(f"digest mismatch: {entry['file']}")
    names = {m.name for m in manifests}
    for f in sorted(outdir.iterdir()):
        if f.is_file() and f.name not in names and f.name != "manifest-audit.json":
            n = len(owners.get(f.name, []))
            if n == 0:
                problems.append(f"orphan: {f.name}")
            elif n > 1:
                problems.append(f"claimed {n} times: {f.name}")
    return {"manifests": len(manifests), "problems": problems}


def cmd_audit(cfg: RunConfig):
    res = audit_directory(_existing_dir(cfg.out))
    for p in res["problems"]:
        print(p)
    verdict = "pass" if not res["problems"] else "fail"
    return {}, {"verdict_only": verdict, **res}


RUNNERS = {"oracle": cmd_oracle, "sample": cmd_sample, "verify": cmd_verify,
           "report": cmd_report, "audit": cmd_audit}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="excursion-lab")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed (u64)")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("oracle")
    common(p)
    p.add_argument("--law")
    p.add_argument("--uN")
    p.add_argument("--vL")
    p.add_argument("--table", type=int)
    p.add_argument("--constraint", choices=[oracle.FREE, oracle.POSITIVE, oracle.EXCURSION_END])
    p.add_argument("--gradient", type=int)
    p.add_argument("--bounds")
    p.add_argument("--ipdsaw", type=int)
    p.add_argument("--beta", type=float)

    p = sub.add_parser("sample")
    common(p)
    p.add_argument("--kind", choices=list(KINDS) + ["continuum_E"])
    p.add_argument("--law")
    p.add_argument("--L", type=int)
    p.add_argument("-n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--exact", action="store_true", default=None)
    p.add_argument("--beta", type=float)

    p = sub.add_parser("verify")
    common(p)
    p.add_argument("check", choices=vf.CHECKS)
    p.add_argument("--quick", action="store_true", default=None)
    for flag, typ in (("--law", str), ("--L", int), ("--count", int), ("--m", int)):
        p.add_argument(flag, type=typ, dest="ov_" + flag.lstrip("-"))
    p.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                   help="override a check parameter")

    for name in ("report", "audit"):
        common(sub.add_parser(name))
    return ap


def _params_from_args(args) -> dict:
    skip = {"command", "config", "seed", "out", "set", "check"}
    params = {k: v for k, v in vars(args).items()
              if k not in skip and not k.startswith("ov_") and v is not None}
    if args.command == "verify":
        params["check"] = args.check
        ov = {k[3:]: v for k, v in vars(args).items() if k.startswith("ov_") and v is not None}
        if ov or args.set:
            params["overrides"] = ov
            for item in args.set:
                k, _, v = item.partition("=")
                params["overrides"][k] = json.loads(v)
    return params


def main(argv=None) -> int:
    from .samplers import apply_thread_cap

    apply_thread_cap()
    args = build_parser().parse_args(argv)
    started = time.time()
    cfg = None
    try:
        if args.config:
            base = RunConfig.from_json(Path(args.config).read_text())
            if base.command != args.command:
                raise ConfigError(f"config is for {base.command!r}, not {args.command!r}")
            params = dict(base.params)
            params.update(_params_from_args(args))
            cfg = RunConfig.build(args.command, params,
                                  args.seed if args.seed is not None else base.seed,
                                  args.out or base.out)
        else:
            cfg = RunConfig.build(args.command, _params_from_args(args), args.seed, args.out)
        staged, info = RUNNERS[args.command](cfg)
    except (ConfigError, LawError, KeyError) as exc:
        print(f"excursion-lab: configuration error: {exc}", file=sys.stderr)
        return 2
    except AcceptanceTooLow as exc:
        print(f"excursion-lab: {exc}", file=sys.stderr)
        return 3
    except CheckAborted as exc:
        outdir = Path(cfg.out)
        outdir.mkdir(parents=True, exist_ok=True)
        _dump_manifest(outdir, _manifest(cfg, started, [], [], "invalid", {"error": str(exc)}))
        print(f"excursion-lab: check aborted: {exc}", file=sys.stderr)
        return 4
    outdir = Path(cfg.out)
    listing = _commit(outdir, staged)
    info = info or {}
    reports = info.pop("reports", None)
    verdict = info.pop("verdict", None)
    if args.command == "audit":
        verdict = info.pop("verdict_only")
        print(f"audit: {verdict}")
        return 0 if verdict == "pass" else 1
    doc = _manifest(cfg, started, listing, reports, verdict, info)
    _dump_manifest(outdir, doc)
    if reports is not None:
        for r in reports:
            print(f"{r.name:36s} statistic={fmt(r.statistic)} verdict={r.verdict}")
        print(f"overall: {verdict}")
        return 0 if verdict == "pass" else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
