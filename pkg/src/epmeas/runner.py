"""Scenario configuration and the report pipeline.

A scenario is a YAML (or JSON) mapping::

    source: builtin:bernoulli(0.7)     # or a path to an instrument file
    rho: auto                          # or an explicit matrix of [re, im] pairs
    theta: [[a, b]]                    # optional, overrides the source involution
    seed: 1
    cap: 2097152
    tolerances: {unitality: 1.0e-10}
    tasks:
      validate: {}
      assumptions: {T_max: 6, tau_max: 2, word_len_max: 3}
      ep: {T_range: 1..8, mc: {T: 200, n: 10000}}
      pressure: {alpha_grid: "0:1:41", T_range: 1..8}
      ldp: {T_range: 1..14, intervals: [[-0.1, 0.1]], sigma_law_T: [2, 8]}
      hypotest: {epsilon: 0.2, T_range: 1..14}
      tables: {T: [1, 2, 3]}
      sample: {T: 20, n: 100}

Tasks run in dependency order; a failing task is recorded in the manifest and
tasks that do not depend on it still run.
"""
from __future__ import annotations

import hashlib
import json
import os
import time
import traceback
from typing import Dict, List

import yaml

from . import __version__
from .assumptions import certificate_bundle, check_A, estimate_C_constants
from .entropic import ep_bounds, ep_monte_carlo, pressure_curve
from .fluctuation import check_fluctuation_relation, check_jarzynski, ldp_empirical, rate_function, sigma_law
from .formats import dumps, jsonable, load_source, parse_grid, parse_range
from .hypotest import chernoff_exponent, hoeffding_psi, stein_exponent
from .instrument import Involution, Process, validate
from .operators import operators_from_json, spectral_report
from .pathspace import DEFAULT_CAP, sample_batch

TASK_ORDER = ["validate", "assumptions", "tables", "ep", "pressure", "ldp", "hypotest", "sample"]
DEPENDS = {"ldp": ["pressure"], "hypotest": ["pressure"]}


class ConfigError(ValueError):
    """Invalid scenario configuration."""


def load_config(path: str) -> dict:
    with open(path) as fh:
        text = fh.read()
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a mapping")
    base = os.path.dirname(os.path.abspath(path))
    src = cfg.get("source")
    if isinstance(src, str) and not src.startswith("builtin:") and not os.path.isabs(src):
        cfg["source"] = os.path.join(base, src)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(jsonable(cfg), sort_keys=True).encode()).hexdigest()


def _task_T(name: str, block: dict) -> List[int]:
    if name in ("ep", "pressure", "ldp", "hypotest"):
        return parse_range(block.get("T_range", "1..8"))
    if name == "tables":
        return parse_range(block.get("T", [1, 2]))
    if name == "assumptions":
        return [int(block.get("T_max", 6))]
    return []


def build_process(cfg: dict) -> Process:
    if "source" not in cfg:
        raise ConfigError("missing 'source'")
    p = load_source(str(cfg["source"]))
    rho = cfg.get("rho", "auto")
    theta = cfg.get("theta")
    if rho != "auto" or theta is not None:
        new_rho = None if rho == "auto" else operators_from_json(rho)
        if rho == "auto":
            new_rho = p.rho
        th = Involution.from_pairs(p.alphabet, theta) if theta is not None else p.theta
        p = Process(p.instrument, new_rho, th, relaxed=bool(cfg.get("relaxed", False)), name=p.name)
    return p


def check_config(cfg: dict, p: Process) -> Dict[str, dict]:
    """Validate task blocks and reject tasks whose enumeration exceeds the cap."""
    tasks = cfg.get("tasks") or {}
    if not isinstance(tasks, dict):
        raise ConfigError("'tasks' must be a mapping")
    unknown = set(tasks) - set(TASK_ORDER)
    if unknown:
        raise ConfigError(f"unknown tasks {sorted(unknown)}")
    cap = int(cfg.get("cap", DEFAULT_CAP))
    for name, block in tasks.items():
        block = block or {}
        if not isinstance(block, dict):
            raise ConfigError(f"task {name!r} must be a mapping")
        try:
            Ts = _task_T(name, block)
        except ValueError as exc:
            raise ConfigError(f"task {name!r}: {exc}") from None
        for T in Ts:
            if p.size ** T > cap:
                raise ConfigError(f"task {name!r} needs {p.size ** T} words at T={T}, above the cap {cap}")
        if name == "pressure" and "alpha_grid" in block:
            parse_grid(block["alpha_grid"])
        if name == "ldp":
            for iv in block.get("intervals", []):
                if len(iv) != 2 or float(iv[0]) >= float(iv[1]):
                    raise ConfigError(f"task 'ldp': bad interval {iv}")
    return {k: (v or {}) for k, v in tasks.items()}


class Pipeline:
    """Runs the task blocks of one scenario and writes artifacts to ``out_dir``."""

    def __init__(self, cfg: dict, out_dir: str):
        self.cfg = cfg
        self.out = out_dir
        self.seed = int(cfg.get("seed", 0))
        self.cap = int(cfg.get("cap", DEFAULT_CAP))
        self.tol = dict(cfg.get("tolerances") or {})
        self.p = build_process(cfg)
        self.tasks = check_config(cfg, self.p)
        self.files: Dict[str, List[str]] = {}
        self.status: Dict[str, str] = {}
        self.errors: Dict[str, str] = {}
        self.timings: Dict[str, float] = {}
        self.certificates: dict = {}
        self.constants = None
        self.curve = None
        self.ep = None

    def _write(self, task: str, name: str, text: str) -> str:
        path = os.path.join(self.out, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        self.files.setdefault(task, []).append(name)
        return path

    def _figure(self, task: str, name: str, fn, *args, **kw) -> None:
        fn(*args, os.path.join(self.out, name), **kw)
        self.files.setdefault(task, []).append(name)

    # ------------------------------------------------------------------ tasks

    def task_validate(self, block):
        rep = validate(self.p.instrument, float(self.tol.get("unitality", 1e-10)))
        spec = spectral_report(self.p.instrument.total)
        out = {
            "validation": rep.to_dict(),
            "A": check_A(self.p).to_dict(),
            "spectral": {"spectral_radius": spec.spectral_radius, "eigenvalue_one_simple": spec.eigenvalue_one_simple,
                         "peripheral_count": spec.peripheral_count, "gap": spec.gap,
                         "has_subleading": spec.has_subleading},
            "alphabet": list(self.p.alphabet),
            "dim": self.p.dim,
            "lambda0": self.p.lambda0,
        }
        self._write("validate", "validate.json", dumps(out))
        if not rep.valid:
            raise ValueError("instrument failed validation: " + "; ".join(rep.failures))

    def task_assumptions(self, block):
        bundle = certificate_bundle(self.p, T_max=int(block.get("T_max", 6)), tau_max=int(block.get("tau_max", 2)),
                                    word_len_max=int(block.get("word_len_max", 3)),
                                    trials=int(block.get("trials", 64)), rng_seed=self.seed, cap=self.cap)
        self.certificates = bundle
        self.constants = bundle["C_constants"]
        self._write("assumptions", "assumptions.json", dumps(bundle))

    def task_tables(self, block):
        for T in parse_range(block.get("T", [1, 2])):
            self._write("tables", f"paths_T{T}.csv", self.p.table(T, self.cap).to_csv())

    def task_ep(self, block):
        from .plotting import plot_ep

        Ts = parse_range(block.get("T_range", "1..8"))
        self.ep = ep_bounds(self.p, max(Ts), self.cap)
        out = {"bounds": self.ep.to_dict()}
        mc = None
        if block.get("mc"):
            m = block["mc"]
            mc = ep_monte_carlo(self.p, int(m.get("T", 200)), int(m.get("n", 10000)), self.seed)
            out["monte_carlo"] = mc.to_dict()
        self._write("ep", "ep.json", dumps(out))
        self._write("ep", "ep.csv", self.ep.to_csv())
        self._figure("ep", "ep.png", plot_ep, self.ep, mc=mc)

    def task_pressure(self, block):
        from .plotting import plot_pressure

        grid = parse_grid(block.get("alpha_grid", "0:1:41"))
        Ts = parse_range(block.get("T_range", "1..8"))
        consts = self.constants
        if consts is None and block.get("constants", "auto") == "auto":
            consts = estimate_C_constants(self.p, int(block.get("tau_max", 2)),
                                          int(block.get("word_len_max", 3))).to_dict()
            self.constants = consts
        self.curve = pressure_curve(self.p, grid, Ts, consts, self.cap)
        self._write("pressure", "pressure.csv", self.curve.to_csv())
        self._write("pressure", "pressure.json", dumps(self.curve.summary()))
        self._figure("pressure", "pressure.png", plot_pressure, self.curve)

    def task_ldp(self, block):
        from .plotting import plot_rate_function, plot_sigma_law

        s_grid = parse_grid(block["s_grid"]) if "s_grid" in block else None
        rate = rate_function(self.curve, s_grid, allow_uncertified=bool(block.get("allow_uncertified", False)))
        self._write("ldp", "rate_function.csv", rate.to_csv())
        self._figure("ldp", "rate_function.png", plot_rate_function, rate)
        Ts = parse_range(block.get("T_range", "1..8"))
        comps = []
        for k, iv in enumerate(block.get("intervals", [])):
            comp = ldp_empirical(self.p, (float(iv[0]), float(iv[1])), Ts, rate, self.cap)
            comps.append(comp.to_dict())
            self._write("ldp", f"ldp_{k}.csv", comp.to_csv())
        laws = {}
        for T in parse_range(block.get("sigma_law_T", [max(Ts)])):
            law = sigma_law(self.p, T, cap=self.cap)
            fr = check_fluctuation_relation(law)
            jz = check_jarzynski(self.p, T, self.cap)
            laws[str(T)] = {"fluctuation_defect": fr.max_defect, "unpaired_atoms": fr.unpaired,
                            "jarzynski": jz.to_dict(), "infinite_atoms": law.has_infinite_atoms}
            self._write("ldp", f"sigma_law_T{T}.csv", law.to_csv())
            self._figure("ldp", f"sigma_law_T{T}.png", plot_sigma_law, law)
        out = {"rate_function": {"scope": rate.scope, "validity": list(rate.validity),
                                 "symmetry_defect": rate.symmetry_defect(), "I_at_ep": rate.zero_at_ep,
                                 "certified": rate.certified},
               "intervals": comps, "sigma_laws": laws}
        self._write("ldp", "ldp.json", dumps(out))

    def task_hypotest(self, block):
        from .plotting import plot_exponents

        Ts = parse_range(block.get("T_range", "1..8"))
        eps = float(block.get("epsilon", 0.2))
        cert_C = bool(self.constants and self.constants.get("status") in ("certified", "horizon-certified"))
        ch = chernoff_exponent(self.p, Ts, self.curve, certified_C=cert_C, cap=self.cap)
        ep_lb = self.curve.ep_lower if self.curve is not None else None
        st = stein_exponent(self.p, Ts, eps, (ep_lb, ep_lb) if ep_lb is not None else None, self.cap)
        s_grid = parse_grid(block.get("s_grid", "0:1:21"))
        hf = hoeffding_psi(self.curve, s_grid, process=self.p,
                           allow_uncertified=bool(block.get("allow_uncertified", False)), cap=self.cap)
        out = {
            "cT": {str(T): v for T, v in zip(ch.T_values, ch.values)},
            "chernoff": ch.to_dict(),
            "stein": st.to_dict(),
            "hoeffding": {"s": hf.s_grid, "psi": hf.psi, "monotone": hf.monotone, "concave": hf.concave,
                          "psi0_plus_ep": hf.psi0_vs_ep},
        }
        self._write("hypotest", "hypotest.json", dumps(out))
        self._write("hypotest", "chernoff.csv", ch.to_csv("rate"))
        self._write("hypotest", "stein.csv", st.to_csv("rate"))
        self._write("hypotest", "hoeffding.csv", hf.to_csv())
        self._figure("hypotest", "exponents.png", plot_exponents, ch, st)

    def task_sample(self, block):
        batch = sample_batch(self.p, int(block.get("T", 20)), int(block.get("n", 100)), self.seed)
        self._write("sample", "samples.jsonl", batch.to_jsonl())

    # ------------------------------------------------------------------- main

    def run(self) -> dict:
        os.makedirs(self.out, exist_ok=True)
        for name in TASK_ORDER:
            if name not in self.tasks:
                continue
            missing = [d for d in DEPENDS.get(name, []) if self.status.get(d) != "ok"]
            if missing:
                self.status[name] = "skipped"
                self.errors[name] = f"depends on failed or absent task(s) {missing}"
                continue
            t0 = time.perf_counter()
            try:
                getattr(self, f"task_{name}")(self.tasks[name])
                self.status[name] = "ok"
            except Exception as exc:  # recorded, independent tasks continue
                self.status[name] = "failed"
                self.errors[name] = f"{type(exc).__name__}: {exc}"
                if os.environ.get("EPMEAS_DEBUG"):
                    traceback.print_exc()
            self.timings[name] = time.perf_counter() - t0
        manifest = {
            "config_hash": config_hash(self.cfg),
            "version": __version__,
            "process": {"name": self.p.name, "dim": self.p.dim, "alphabet": list(self.p.alphabet)},
            "files": {k: sorted(v) for k, v in self.files.items()},
            "checksums": {f: _sha256(os.path.join(self.out, f)) for v in self.files.values() for f in v},
            "status": self.status,
            "errors": self.errors,
            "certificates": self.certificates,
            "timings": self.timings,
        }
        with open(os.path.join(self.out, "manifest.json"), "w") as fh:
            fh.write(dumps(manifest))
        return manifest


def _sha256(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def run(config, out_dir: str) -> dict:
    """Run a scenario (mapping or path to a YAML/JSON file) and return the manifest."""
    cfg = load_config(config) if isinstance(config, str) else dict(config)
    return Pipeline(cfg, out_dir).run()
