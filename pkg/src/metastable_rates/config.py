"""Experiment configuration: YAML in, validated and resolved values out.

Numbers may be written as integers, decimals or exact fractions in quotes
(``"1/3"``); everything is parsed to :class:`~fractions.Fraction` first so
that graph calculations stay exact, and converted to float where the
numerics need it.  Indices in the file are 1-based, as in the reports.

Exactly one of the blocks ``landscape``, ``raw_V`` or ``raw_W`` must be
present.  See the README for a complete example.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from .errors import ConfigInvalid

FAMILIES = ("double_well", "cosine", "three_well", "knots", "extrema")
TOP_KEYS = {"command", "landscape", "raw_V", "raw_W", "set", "f", "eps", "c", "delta", "m",
            "replicas", "seed", "out", "simulate", "graphs"}


def parse_number(v: Any, path: str, allow_inf: bool = False) -> Fraction | float:
    """Exact value of a config number; ``inf`` only where allowed."""
    if isinstance(v, bool) or v is None:
        raise ConfigInvalid(f"expected a number, got {v!r}", path)
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "infinity"):
        if allow_inf:
            return math.inf
        raise ConfigInvalid("infinite value not allowed here", path)
    if isinstance(v, float) and math.isinf(v):
        if allow_inf:
            return math.inf
        raise ConfigInvalid("infinite value not allowed here", path)
    try:
        if isinstance(v, float):
            if math.isnan(v):
                raise ValueError
            return Fraction(repr(v))
        if isinstance(v, (int, str)):
            return Fraction(str(v).strip())
    except (ValueError, ZeroDivisionError):
        pass
    raise ConfigInvalid(f"cannot read {v!r} as a number", path)


def _float(v, path, allow_inf=False) -> float:
    return float(parse_number(v, path, allow_inf))


def _vector(v, path, allow_inf=False, n=None) -> list:
    if not isinstance(v, list):
        raise ConfigInvalid("expected a list", path)
    if n is not None and len(v) != n:
        raise ConfigInvalid(f"expected {n} entries, got {len(v)}", path)
    return [parse_number(x, f"{path}[{i}]", allow_inf) for i, x in enumerate(v)]


def _matrix(v, path, allow_inf=False) -> list[list]:
    if not isinstance(v, list) or not v:
        raise ConfigInvalid("expected a non-empty list of rows", path)
    rows = [_vector(r, f"{path}[{i}]", allow_inf) for i, r in enumerate(v)]
    n = len(rows)
    for i, r in enumerate(rows):
        if len(r) != n:
            raise ConfigInvalid(f"row has {len(r)} entries, matrix needs {n}", f"{path}[{i}]")
    return rows


def _int(v, path, lo=None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigInvalid(f"expected an integer, got {v!r}", path)
    if lo is not None and v < lo:
        raise ConfigInvalid(f"must be >= {lo}", path)
    return v


def _check_keys(block: dict, allowed: set, path: str):
    if not isinstance(block, dict):
        raise ConfigInvalid("expected a mapping", path)
    extra = sorted(set(block) - allowed)
    if extra:
        raise ConfigInvalid(f"unknown key {extra[0]!r}", f"{path}.{extra[0]}" if path else extra[0])


def _exact_str(x) -> str | float:
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return x


@dataclass
class LandscapeSpec:
    family: str
    params: dict
    noise: Fraction

    def build(self):
        from . import landscape as ls

        p = {k: (float(v) if isinstance(v, Fraction) else v) for k, v in self.params.items()}
        a = float(self.noise)
        try:
            if self.family == "double_well":
                return ls.double_well(p["h_L"], p["h_R"], width=p.get("width", 0.3), top=p.get("top"), noise=a)
            if self.family == "cosine":
                return ls.cosine_well(p.get("amplitude", 1.0), noise=a)
            if self.family == "three_well":
                return ls.three_well(noise=a)
            if self.family == "knots":
                return ls.from_knots([float(x) for x in p["x"]], [float(u) for u in p["u"]], noise=a)
            return ls.from_extrema([float(x) for x in p["x"]], [float(u) for u in p["u"]],
                                   p["lo"], p["hi"], noise=a)
        except ValueError as e:
            raise ConfigInvalid(str(e), "landscape") from e

    def resolved(self) -> dict:
        out = {"family": self.family, "noise": str(self.noise)}
        for k, v in self.params.items():
            out[k] = [_exact_str(x) for x in v] if isinstance(v, list) else _exact_str(v)
        return out


@dataclass
class ExperimentConfig:
    """Validated experiment description.  Field names follow the YAML keys."""

    landscape: LandscapeSpec | None = None
    raw_V: dict | None = None
    raw_W: dict | None = None
    A: list[tuple[Fraction, Fraction]] | None = None
    case: str | None = None
    f: Fraction | str = Fraction(0)
    eps: list[Fraction] = field(default_factory=list)
    c: Fraction | None = None
    delta: Fraction = Fraction(1, 20)
    m: Fraction | None = None
    replicas: int = 20
    seed: int = 0
    out: str | None = None
    command: str | None = None
    simulate: dict = field(default_factory=dict)
    graphs: dict = field(default_factory=dict)
    source: str | None = None

    # derived views -----------------------------------------------------

    @property
    def kind(self) -> str:
        return "landscape" if self.landscape else ("raw_V" if self.raw_V else "raw_W")

    def build_landscape(self):
        if self.landscape is None:
            raise ConfigInvalid("this command needs a landscape block", "landscape")
        return self.landscape.build()

    def set_A(self, landscape=None) -> list[tuple[float, float]] | None:
        """The set ``A`` as float intervals, resolving a named case if given."""
        if self.A is not None:
            return [(float(a), float(b)) for a, b in self.A]
        if self.case is not None:
            from .rates import doublewell_case_set

            if landscape is None or landscape.name != "double_well":
                raise ConfigInvalid("named cases need the double_well family", "set.case")
            return doublewell_case_set(landscape, self.case, float(self.delta))
        return None

    def f_value(self) -> float | Callable:
        """Constant ``f`` as float, or a vectorized callable for an expression."""
        if isinstance(self.f, Fraction):
            return float(self.f)
        return compile_expression(self.f, "f")

    def resolved(self) -> dict:
        """Plain-data view of every setting, defaults filled in."""
        out: dict = {"command": self.command}
        if self.landscape is not None:
            out["landscape"] = self.landscape.resolved()
        if self.raw_V is not None:
            out["raw_V"] = {k: _nested_str(v) for k, v in self.raw_V.items()}
        if self.raw_W is not None:
            out["raw_W"] = {k: _nested_str(v) for k, v in self.raw_W.items()}
        out["set"] = ({"A": [[str(a), str(b)] for a, b in self.A]} if self.A is not None
                      else {"case": self.case} if self.case else None)
        out["f"] = str(self.f)
        out["eps"] = [str(e) for e in self.eps]
        out["c"] = None if self.c is None else str(self.c)
        out["delta"] = str(self.delta)
        out["m"] = None if self.m is None else str(self.m)
        out["replicas"] = self.replicas
        out["seed"] = self.seed
        out["simulate"] = {k: _nested_str(v) for k, v in sorted(self.simulate.items())}
        out["graphs"] = {k: _nested_str(v) for k, v in sorted(self.graphs.items())}
        return out


def _nested_str(v):
    if isinstance(v, list):
        return [_nested_str(x) for x in v]
    return _exact_str(v)


def compile_expression(expr: str, path: str) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized callable for an expression in ``x`` (numpy semantics)."""
    import sympy

    x = sympy.Symbol("x")
    try:
        e = sympy.sympify(expr, locals={"x": x}, convert_xor=True)
    except (sympy.SympifyError, SyntaxError, TypeError) as err:
        raise ConfigInvalid(f"cannot parse expression {expr!r}: {err}", path) from err
    extra = e.free_symbols - {x}
    if extra:
        raise ConfigInvalid(f"unknown symbol {sorted(map(str, extra))[0]!r} (only x allowed)", path)
    fn = sympy.lambdify(x, e, modules="numpy")

    def f(xs):
        xs = np.asarray(xs, dtype=float)
        return np.broadcast_to(np.asarray(fn(xs), dtype=float), xs.shape).copy()

    return f


def _landscape_spec(b: dict) -> LandscapeSpec:
    if not isinstance(b, dict):
        raise ConfigInvalid("expected a mapping", "landscape")
    fam = b.get("family")
    if fam not in FAMILIES:
        raise ConfigInvalid(f"family must be one of {', '.join(FAMILIES)}; got {fam!r}", "landscape.family")
    allowed = {"family", "noise"} | {
        "double_well": {"h_L", "h_R", "width", "top"},
        "cosine": {"amplitude"},
        "three_well": set(),
        "knots": {"x", "u"},
        "extrema": {"x", "u", "lo", "hi"},
    }[fam]
    _check_keys(b, allowed, "landscape")
    noise = parse_number(b.get("noise", 2), "landscape.noise")
    if not noise > 0:
        raise ConfigInvalid("must be positive", "landscape.noise")
    params: dict = {}
    if fam == "double_well":
        for k in ("h_L", "h_R"):
            if k not in b:
                raise ConfigInvalid("required", f"landscape.{k}")
            params[k] = parse_number(b[k], f"landscape.{k}")
        params["width"] = parse_number(b.get("width", "3/10"), "landscape.width")
        if "top" in b:
            params["top"] = parse_number(b["top"], "landscape.top")
        if not params["h_L"] > params["h_R"] > 0:
            raise ConfigInvalid("need h_L > h_R > 0", "landscape.h_R")
        if not params["width"] > 0:
            raise ConfigInvalid("must be positive", "landscape.width")
    elif fam == "cosine":
        params["amplitude"] = parse_number(b.get("amplitude", 1), "landscape.amplitude")
    elif fam in ("knots", "extrema"):
        for k in ("x", "u"):
            if k not in b:
                raise ConfigInvalid("required", f"landscape.{k}")
        params["x"] = _vector(b["x"], "landscape.x")
        params["u"] = _vector(b["u"], "landscape.u", n=len(params["x"]))
        if any(x1 <= x0 for x0, x1 in zip(params["x"], params["x"][1:])):
            raise ConfigInvalid("positions must be strictly increasing", "landscape.x")
        if fam == "extrema":
            for k in ("lo", "hi"):
                if k not in b:
                    raise ConfigInvalid("required", f"landscape.{k}")
                params[k] = parse_number(b[k], f"landscape.{k}")
    return LandscapeSpec(fam, params, noise)


def _raw_V(b: dict) -> dict:
    _check_keys(b, {"V", "stable", "infA_fV", "infA_2fV"}, "raw_V")
    if "V" not in b:
        raise ConfigInvalid("required", "raw_V.V")
    V = _matrix(b["V"], "raw_V.V", allow_inf=True)
    l = len(V)
    for i in range(l):
        if V[i][i] != 0:
            raise ConfigInvalid("diagonal entries must be 0", f"raw_V.V[{i}][{i}]")
        for j in range(l):
            if V[i][j] < 0:
                raise ConfigInvalid("entries must be nonnegative", f"raw_V.V[{i}][{j}]")
    out = {"V": V}
    if "stable" in b:
        st = b["stable"]
        if not isinstance(st, list) or len(st) != l or not all(isinstance(s, bool) for s in st):
            raise ConfigInvalid(f"expected {l} booleans", "raw_V.stable")
        if not st[0]:
            raise ConfigInvalid("index 1 must be the deepest stable point", "raw_V.stable[0]")
        out["stable"] = list(st)
    for k in ("infA_fV", "infA_2fV"):
        if k in b:
            out[k] = _vector(b[k], f"raw_V.{k}", n=l)
    return out


def _raw_W(b: dict) -> dict:
    _check_keys(b, {"infA_fV", "infA_2fV", "W_rel", "W1", "W_pair", "h1"}, "raw_W")
    for k in ("infA_fV", "W_rel", "W1", "W_pair", "h1"):
        if k not in b:
            raise ConfigInvalid("required", f"raw_W.{k}")
    fV = _vector(b["infA_fV"], "raw_W.infA_fV")
    l = len(fV)
    if l < 2:
        raise ConfigInvalid("need at least two equilibria", "raw_W.infA_fV")
    out = {
        "infA_fV": fV,
        "W_rel": _vector(b["W_rel"], "raw_W.W_rel", n=l),
        "W1": parse_number(b["W1"], "raw_W.W1"),
        "W_pair": _vector(b["W_pair"], "raw_W.W_pair", n=l - 1),
        "h1": parse_number(b["h1"], "raw_W.h1"),
    }
    if out["W_rel"][0] != 0:
        raise ConfigInvalid("W(O_1) - W(O_1) must be 0", "raw_W.W_rel[0]")
    if "infA_2fV" in b:
        out["infA_2fV"] = _vector(b["infA_2fV"], "raw_W.infA_2fV", n=l)
    return out


def _set_block(b) -> tuple[list | None, str | None]:
    _check_keys(b, {"A", "case"}, "set")
    if ("A" in b) == ("case" in b):
        raise ConfigInvalid("give exactly one of A or case", "set")
    if "case" in b:
        from .rates import CASES

        if b["case"] not in CASES:
            raise ConfigInvalid(f"case must be one of {', '.join(CASES)}", "set.case")
        return None, b["case"]
    A = b["A"]
    if not isinstance(A, list) or not A:
        raise ConfigInvalid("expected a non-empty list of [lo, hi] intervals", "set.A")
    out = []
    for i, iv in enumerate(A):
        p = f"set.A[{i}]"
        if not isinstance(iv, list) or len(iv) != 2:
            raise ConfigInvalid("interval must be [lo, hi]", p)
        lo, hi = parse_number(iv[0], f"{p}[0]"), parse_number(iv[1], f"{p}[1]")
        if not lo <= hi:
            raise ConfigInvalid("need lo <= hi", p)
        out.append((lo, hi))
    return out, None


SIM_KEYS = {"n_cycles", "max_steps", "dt", "burn_in", "complete_last", "eps_index"}
GRAPH_KEYS = {"W", "P", "list"}


def from_dict(d: dict, source: str | None = None) -> ExperimentConfig:
    """Validate a parsed YAML mapping."""
    if not isinstance(d, dict):
        raise ConfigInvalid("top level must be a mapping", "")
    _check_keys(d, TOP_KEYS, "")
    blocks = [k for k in ("landscape", "raw_V", "raw_W") if k in d]
    if len(blocks) != 1:
        raise ConfigInvalid(f"exactly one of landscape, raw_V, raw_W is required; found {len(blocks)}",
                            blocks[1] if len(blocks) > 1 else "landscape")
    cfg = ExperimentConfig(source=source)
    if "landscape" in d:
        cfg.landscape = _landscape_spec(d["landscape"])
    elif "raw_V" in d:
        cfg.raw_V = _raw_V(d["raw_V"])
    else:
        cfg.raw_W = _raw_W(d["raw_W"])
    l = _size(cfg)
    if "set" in d:
        cfg.A, cfg.case = _set_block(d["set"])
    if "f" in d:
        f = d["f"]
        if isinstance(f, str) and any(ch.isalpha() for ch in f) and f.strip().lower() not in ("inf",):
            compile_expression(f, "f")
            cfg.f = f.strip()
        else:
            cfg.f = parse_number(f, "f")
    if "eps" in d:
        eps = d["eps"] if isinstance(d["eps"], list) else [d["eps"]]
        cfg.eps = _vector(eps, "eps")
        if any(e <= 0 for e in cfg.eps):
            raise ConfigInvalid("noise levels must be positive", "eps")
        if any(b >= a for a, b in zip(cfg.eps, cfg.eps[1:])):
            raise ConfigInvalid("grid must be strictly decreasing", "eps")
    if d.get("c") is not None:
        cfg.c = parse_number(d["c"], "c")
    if "delta" in d:
        cfg.delta = parse_number(d["delta"], "delta")
        if not cfg.delta > 0:
            raise ConfigInvalid("must be positive", "delta")
    if d.get("m") is not None:
        cfg.m = parse_number(d["m"], "m")
    if "replicas" in d:
        cfg.replicas = _int(d["replicas"], "replicas", lo=1)
    if "seed" in d:
        cfg.seed = _int(d["seed"], "seed", lo=0)
    if d.get("out") is not None:
        cfg.out = str(d["out"])
    if d.get("command") is not None:
        if d["command"] not in ("rates", "graphs", "simulate", "verify"):
            raise ConfigInvalid(f"unknown command {d['command']!r}", "command")
        cfg.command = d["command"]
    if "simulate" in d:
        s = d["simulate"] or {}
        _check_keys(s, SIM_KEYS, "simulate")
        sim = {}
        for k in ("n_cycles", "max_steps", "burn_in", "eps_index"):
            if k in s:
                sim[k] = _int(s[k], f"simulate.{k}", lo=0 if k in ("burn_in", "eps_index") else 1)
        if "dt" in s:
            sim["dt"] = parse_number(s["dt"], "simulate.dt")
            if not sim["dt"] > 0:
                raise ConfigInvalid("must be positive", "simulate.dt")
        if "complete_last" in s:
            if not isinstance(s["complete_last"], bool):
                raise ConfigInvalid("expected true or false", "simulate.complete_last")
            sim["complete_last"] = s["complete_last"]
        cfg.simulate = sim
    if "graphs" in d:
        g = d["graphs"] or {}
        _check_keys(g, GRAPH_KEYS, "graphs")
        gr: dict = {}
        if "W" in g:
            if not isinstance(g["W"], list) or not g["W"]:
                raise ConfigInvalid("expected a list of root sets", "graphs.W")
            sets = []
            for i, roots in enumerate(g["W"]):
                roots = roots if isinstance(roots, list) else [roots]
                for k, r in enumerate(roots):
                    _int(r, f"graphs.W[{i}][{k}]", lo=1)
                    if l is not None and r > l:
                        raise ConfigInvalid(f"index {r} outside 1..{l}", f"graphs.W[{i}][{k}]")
                if not roots:
                    raise ConfigInvalid("root set must be non-empty", f"graphs.W[{i}]")
                sets.append(sorted(set(roots)))
            gr["W"] = sets
        if "P" in g:
            P = _matrix(g["P"], "graphs.P")
            if l is not None and len(P) != l:
                raise ConfigInvalid(f"needs {l} rows to match the equilibria", "graphs.P")
            for i, row in enumerate(P):
                if any(v < 0 for v in row) or sum(row) != 1:
                    raise ConfigInvalid("rows must be nonnegative and sum to 1 exactly", f"graphs.P[{i}]")
            gr["P"] = P
        if "list" in g:
            if not isinstance(g["list"], bool):
                raise ConfigInvalid("expected true or false", "graphs.list")
            gr["list"] = g["list"]
        cfg.graphs = gr
    if cfg.simulate.get("eps_index") is not None and cfg.eps and cfg.simulate["eps_index"] >= len(cfg.eps):
        raise ConfigInvalid("index outside the eps grid", "simulate.eps_index")
    return cfg


def _size(cfg: ExperimentConfig) -> int | None:
    if cfg.raw_V is not None:
        return len(cfg.raw_V["V"])
    if cfg.raw_W is not None:
        return len(cfg.raw_W["infA_fV"])
    return None


def load(path: str | Path) -> ExperimentConfig:
    """Read and validate a YAML config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigInvalid(f"cannot read {path}: {e.strerror}", "") from e
    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigInvalid(f"not valid YAML: {e}", "") from e
    return from_dict(d if d is not None else {}, source=str(path))
