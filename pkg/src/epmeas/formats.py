"""File formats: instrument JSON, builtin sources, range syntax and JSON output.

Instrument file (``format_version`` 1)::

    {
      "format_version": 1,
      "dim": 2,
      "alphabet": ["0", "1"],
      "kraus": {"0": [M1, M2], "1": [M3]},
      "convention": "heisenberg",
      "rho": M,
      "theta": [["0", "1"]]
    }

Each matrix ``M`` is a row-major nested list of ``[re, im]`` pairs.
``convention`` is ``heisenberg`` (``Phi[X] = sum V^* X V``, default) or
``adjoint`` (``Phi[X] = sum V X V^*``). ``rho`` and ``theta`` are optional.
"""
from __future__ import annotations

import ast
import json
import math
import re
from typing import Any, List

import numpy as np

from .instrument import (
    Instrument,
    Involution,
    Process,
    ancilla,
    bernoulli,
    classical_markov,
    cycle,
    trivial,
    von_neumann,
)
from .operators import operators_from_json, operators_to_json

FORMAT_VERSION = 1


class SourceError(ValueError):
    """Unparseable instrument source."""


def process_to_json(p: Process) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "dim": p.dim,
        "alphabet": list(p.alphabet),
        "kraus": {a: [operators_to_json(V) for V in p.instrument[a].kraus] for a in p.alphabet},
        "convention": "heisenberg",
        "rho": operators_to_json(p.rho),
        "theta": [list(pair) for pair in p.theta.pairs()],
    }


def process_from_json(data: dict, relaxed: bool = False) -> Process:
    if not isinstance(data, dict):
        raise SourceError("instrument file must hold a JSON object")
    version = data.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise SourceError(f"unsupported format_version {version}")
    try:
        alphabet = list(data["alphabet"])
        kraus = data["kraus"]
    except KeyError as exc:
        raise SourceError(f"missing field {exc}") from None
    if set(kraus) != set(alphabet):
        raise SourceError("kraus keys differ from the alphabet")
    ops = {a: np.array([operators_from_json(m) for m in kraus[a]]) for a in alphabet}
    instr = Instrument.from_kraus(ops, data.get("convention", "heisenberg"))
    if "dim" in data and data["dim"] != instr.dim:
        raise SourceError(f"declared dim {data['dim']} differs from matrices ({instr.dim})")
    rho = operators_from_json(data["rho"]) if data.get("rho") is not None else None
    theta = Involution.from_pairs(instr.alphabet, data["theta"]) if data.get("theta") else None
    return Process(instr, rho, theta, relaxed=relaxed, name=data.get("name", "file"))


def load_process(path: str, relaxed: bool = False) -> Process:
    with open(path) as fh:
        return process_from_json(json.load(fh), relaxed)


def save_process(p: Process, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(process_to_json(p)))


def _von_neumann_builtin(angle: float = math.pi / 4) -> Process:
    c, s = math.cos(angle), math.sin(angle)
    U = np.array([[c, -s], [s, c]], dtype=complex)
    P = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    instr = von_neumann(U, P)
    return Process(instr, None, Involution.from_pairs(instr.alphabet, [("0", "1")]),
                   name=f"von_neumann({angle})")


def _ancilla_builtin(g: float = 0.4, r: float = 0.8) -> Process:
    swap = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            swap[2 * i + j, 2 * j + i] = 1.0
    U = math.cos(g) * np.eye(4) - 1j * math.sin(g) * swap
    rho_p = np.diag([r, 1 - r])
    instr = ancilla(U, rho_p, [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    return Process(instr, None, Involution.from_pairs(instr.alphabet, [("0", "1")]), name=f"ancilla({g},{r})")


BUILTINS = {
    "bernoulli": bernoulli,
    "markov": classical_markov,
    "cycle": cycle,
    "trivial": trivial,
    "von_neumann": _von_neumann_builtin,
    "ancilla": _ancilla_builtin,
}

_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$", re.S)


def parse_builtin(spec: str) -> Process:
    """Build a process from ``name(args)``, e.g. ``bernoulli(0.7)`` or ``cycle(3, 0.8)``."""
    m = _CALL.match(spec)
    if not m or m.group(1) not in BUILTINS:
        raise SourceError(f"unknown builtin {spec!r}; choose from {sorted(BUILTINS)}")
    args: tuple = ()
    if m.group(2) is not None and m.group(2).strip():
        try:
            val = ast.literal_eval(m.group(2).strip() + ",")
        except (ValueError, SyntaxError) as exc:
            raise SourceError(f"cannot parse arguments of {spec!r}: {exc}") from None
        args = tuple(val)
    try:
        return BUILTINS[m.group(1)](*args)
    except TypeError as exc:
        raise SourceError(f"bad arguments for {m.group(1)}: {exc}") from None


def load_source(source: str, relaxed: bool = False) -> Process:
    """``builtin:<name>(<args>)`` or a path to an instrument file."""
    if source.startswith("builtin:"):
        return parse_builtin(source[len("builtin:"):])
    try:
        return load_process(source, relaxed)
    except FileNotFoundError:
        raise SourceError(f"instrument file {source!r} does not exist") from None
    except json.JSONDecodeError as exc:
        raise SourceError(f"instrument file {source!r} is not valid JSON: {exc}") from None


def parse_range(text) -> List[int]:
    """``"1..8"``, ``"1,3,5"``, ``"4"`` or a list of integers."""
    if isinstance(text, (list, tuple)):
        out = [int(x) for x in text]
    elif isinstance(text, int):
        out = [text]
    else:
        text = str(text).strip()
        if ".." in text:
            a, b = text.split("..", 1)
            out = list(range(int(a), int(b) + 1))
        else:
            out = [int(x) for x in text.split(",") if x.strip()]
    if not out or min(out) < 1:
        raise ValueError(f"invalid T range {text!r}")
    return out


def parse_grid(text) -> np.ndarray:
    """``"0:1:41"`` (linspace), ``"0.5"``, ``"0.1,0.5"`` or a list of floats."""
    if isinstance(text, (list, tuple, np.ndarray)):
        out = np.asarray(text, dtype=float)
    elif isinstance(text, (int, float)):
        out = np.array([float(text)])
    else:
        text = str(text).strip()
        if text.count(":") == 2:
            a, b, n = text.split(":")
            out = np.linspace(float(a), float(b), int(n))
        else:
            out = np.array([float(x) for x in text.split(",") if x.strip()])
    if out.size == 0:
        raise ValueError("empty grid")
    return out


def jsonable(x: Any):
    """Recursively convert to JSON-safe values; non-finite floats become strings."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        x = float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, complex):
        return [jsonable(x.real), jsonable(x.imag)]
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"
