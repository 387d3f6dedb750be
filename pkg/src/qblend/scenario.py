"""Scenario files: YAML (or JSON) descriptions of a network run.

Operator expressions use a deliberately small grammar::

    expr    := term (("+" | "-") term)*
    term    := [scalar "*"] factor ["*" factor]
    scalar  := number | "sqrt(" number ")"
    factor  := NAME "(" qubit ")" | "sum(" NAME ")" | "pairs(" NAME "," NAME ")"

``NAME`` is one of ``I sx sy sz sp sm``.  ``sum(a)`` is ``sum_j a^(j)`` and
``pairs(a, b)`` is ``sum_{j<k} a^(j) b^(k)`` (``j > k`` with pair order
``"gt"``).  ``sum``/``pairs`` cannot be multiplied by another factor.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations
from pathlib import Path

import numpy as np
import yaml

from .dynamics import TimeGrid
from .graph import QuantumGraph
from .network import NetworkSpec
from .operators import PAULI, basis_projector, embed_product, tensor

BUILTINS = ("example1", "example2", "example3")

NAMED_STATES = {
    "0": np.array([[1, 0], [0, 0]], dtype=complex),
    "1": np.array([[0, 0], [0, 1]], dtype=complex),
    "mixed": np.eye(2, dtype=complex) / 2,
    "plus": np.array([[1, 1], [1, 1]], dtype=complex) / 2,
    "minus": np.array([[1, -1], [-1, 1]], dtype=complex) / 2,
    "plus_i": np.array([[1, -1j], [1j, 1]], dtype=complex) / 2,
    "minus_i": np.array([[1, 1j], [-1j, 1]], dtype=complex) / 2,
}

TOP_LEVEL = {
    "name", "qubits", "graph", "hamiltonian", "lindblad", "initial_state",
    "kc", "grid", "outputs", "description",
}
OUTPUTS = {"errors", "bloch", "trace", "min_eigenvalue"}


class ScenarioError(ValueError):
    """Bad scenario content; the message names the offending field."""

    def __init__(self, where: str, msg: str):
        super().__init__(f"{where}: {msg}")
        self.field = where


@dataclass
class Scenario:
    spec: NetworkSpec
    grid: TimeGrid
    kcs: list[float]
    outputs: list[str] = field(default_factory=lambda: ["errors"])
    source: str = ""
    raw: dict = field(default_factory=dict)


# -- operator expressions -------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_]+)|(?P<op>[-+*(),]))"
)


def _tokenize(text: str, where: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ScenarioError(where, f"unexpected character at {text[pos:]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text: str, n: int, where: str, pair_order: str):
        self.toks = _tokenize(text, where)
        self.i = 0
        self.n = n
        self.where = where
        self.pair_order = pair_order

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, value=None, kind=None):
        tk = self.peek()
        if tk[0] is None or (value and tk[1] != value) or (kind and tk[0] != kind):
            want = value or kind
            raise ScenarioError(self.where, f"expected {want!r}, found {tk[1]!r}")
        self.i += 1
        return tk[1]

    def parse(self) -> np.ndarray:
        d = 2**self.n
        total = np.zeros((d, d), dtype=complex)
        sign = 1.0
        if self.peek()[1] == "-":
            self.take("-")
            sign = -1.0
        total += sign * self.term()
        while self.peek()[0] is not None:
            op = self.take(kind="op")
            if op not in "+-":
                raise ScenarioError(self.where, f"unexpected {op!r}")
            total += (1.0 if op == "+" else -1.0) * self.term()
        return total

    def scalar(self) -> float | None:
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return float(val)
        if kind == "name" and val == "sqrt":
            self.take()
            self.take("(")
            x = float(self.take(kind="num"))
            self.take(")")
            return float(np.sqrt(x))
        return None

    def term(self) -> np.ndarray:
        coeff = self.scalar()
        if coeff is not None:
            if self.peek()[1] != "*":
                raise ScenarioError(self.where, "a scalar must multiply an operator")
            self.take("*")
        coeff = 1.0 if coeff is None else coeff
        first, collective = self.factor()
        if self.peek()[1] == "*":
            self.take("*")
            second, coll2 = self.factor()
            if collective or coll2:
                raise ScenarioError(self.where, "sum()/pairs() cannot be multiplied")
            (j1, a), (j2, b) = first, second
            if j1 == j2:
                raise ScenarioError(self.where, f"both factors act on qubit {j1}")
            return coeff * embed_product({j1: a, j2: b}, self.n)
        if collective:
            return coeff * first
        j, a = first
        return coeff * embed_product({j: a}, self.n)

    def pauli(self) -> np.ndarray:
        name = self.take(kind="name")
        if name not in PAULI:
            raise ScenarioError(self.where, f"unknown operator {name!r}")
        return PAULI[name]

    def factor(self):
        kind, val = self.peek()
        if kind != "name":
            raise ScenarioError(self.where, f"expected an operator, found {val!r}")
        if val == "sum":
            self.take()
            self.take("(")
            a = self.pauli()
            self.take(")")
            return sum(embed_product({j: a}, self.n) for j in range(1, self.n + 1)), True
        if val == "pairs":
            self.take()
            self.take("(")
            a = self.pauli()
            self.take(",")
            b = self.pauli()
            self.take(")")
            acc = np.zeros((2**self.n,) * 2, dtype=complex)
            for j, k in combinations(range(1, self.n + 1), 2):
                if self.pair_order == "gt":
                    j, k = k, j
                acc += embed_product({j: a, k: b}, self.n)
            return acc, True
        a = self.pauli()
        self.take("(")
        j = int(self.take(kind="num"))
        self.take(")")
        if not 1 <= j <= self.n:
            raise ScenarioError(self.where, f"qubit {j} outside 1..{self.n}")
        return (j, a), False


def parse_operator(text: str, n: int, where: str = "operator", pair_order: str = "lt") -> np.ndarray:
    if pair_order not in ("lt", "gt"):
        raise ValueError(f"pair order must be 'lt' or 'gt', got {pair_order!r}")
    if not isinstance(text, str):
        raise ScenarioError(where, "operator expression must be a string")
    if not text.strip() or text.strip() == "0":
        return np.zeros((2**n, 2**n), dtype=complex)
    return _Parser(text, n, where, pair_order).parse()


# -- sections -------------------------------------------------------------


def _check_keys(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise ScenarioError(where, "expected a mapping")
    extra = set(d) - allowed
    if extra:
        raise ScenarioError(where, f"unknown field(s) {sorted(extra)}")


def _graph(raw, n: int) -> QuantumGraph:
    if raw == "complete":
        return QuantumGraph.complete(n)
    if isinstance(raw, dict):
        _check_keys(raw, {"complete", "edges"}, "graph")
        if "complete" in raw:
            return QuantumGraph.complete(n, float(raw["complete"]))
        raw = raw.get("edges", [])
    if not isinstance(raw, list):
        raise ScenarioError("graph", "expected 'complete' or an edge list")
    edges = []
    for i, e in enumerate(raw):
        if not isinstance(e, (list, tuple)) or len(e) not in (2, 3):
            raise ScenarioError(f"graph[{i}]", "edge must be [j, k] or [j, k, weight]")
        edges.append((int(e[0]), int(e[1]), float(e[2]) if len(e) == 3 else 1.0))
    try:
        return QuantumGraph(n, tuple(edges))
    except ValueError as exc:
        raise ScenarioError("graph", str(exc)) from None


def _initial_state(raw, n: int) -> np.ndarray:
    where = "initial_state"
    _check_keys(raw, {"product", "basis_mixture", "matrix"}, where)
    if len(raw) != 1:
        raise ScenarioError(where, "give exactly one of product, basis_mixture, matrix")
    (tag, val), = raw.items()
    if tag == "product":
        if not isinstance(val, list) or len(val) != n:
            raise ScenarioError(f"{where}.product", f"need a list of {n} named states")
        try:
            return tensor(*[NAMED_STATES[str(s)] for s in val])
        except KeyError as exc:
            raise ScenarioError(
                f"{where}.product", f"unknown state {exc.args[0]!r}; use {sorted(NAMED_STATES)}"
            ) from None
    if tag == "basis_mixture":
        if not isinstance(val, dict) or not val:
            raise ScenarioError(f"{where}.basis_mixture", "need a mapping bitstring -> weight")
        total = sum(float(w) for w in val.values())
        if total <= 0 or any(float(w) < 0 for w in val.values()):
            raise ScenarioError(f"{where}.basis_mixture", "weights must be non-negative, not all zero")
        rho = 0
        for bits, w in val.items():
            bits = str(bits)
            if len(bits) != n:
                raise ScenarioError(f"{where}.basis_mixture", f"bitstring {bits!r} is not {n} bits")
            rho = rho + float(w) / total * basis_projector(bits)
        return rho
    try:
        m = np.array([[complex(str(x).replace(" ", "")) for x in row] for row in val])
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}.matrix", f"cannot parse entries ({exc})") from None
    if m.shape != (2**n, 2**n):
        raise ScenarioError(f"{where}.matrix", f"expected shape {(2**n, 2**n)}, got {m.shape}")
    return m


def _lindblad(raw, n: int, pair_order: str):
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise ScenarioError("lindblad", "expected a list of {rate, op} entries")
    out = []
    for i, item in enumerate(raw):
        where = f"lindblad[{i}]"
        _check_keys(item, {"rate", "op"}, where)
        if "op" not in item:
            raise ScenarioError(where, "missing 'op'")
        rate = float(item.get("rate", 1.0))
        if not rate > 0:
            raise ScenarioError(f"{where}.rate", "rate must be positive")
        out.append((rate, parse_operator(item["op"], n, f"{where}.op", pair_order)))
    return tuple(out)


def _grid(raw) -> TimeGrid:
    if raw is None:
        return TimeGrid(10.0, 201)
    _check_keys(raw, {"t_end", "samples"}, "grid")
    try:
        return TimeGrid(float(raw.get("t_end", 10.0)), int(raw.get("samples", 201)))
    except ValueError as exc:
        raise ScenarioError("grid", str(exc)) from None


def scenario_from_dict(raw: dict, source: str = "", pair_order: str = "lt") -> Scenario:
    _check_keys(raw, TOP_LEVEL, "scenario")
    if "qubits" not in raw:
        raise ScenarioError("qubits", "missing")
    n = raw["qubits"]
    if not isinstance(n, int) or not 1 <= n <= 6:
        raise ScenarioError("qubits", "must be an integer in 1..6")
    graph = _graph(raw.get("graph", "complete"), n)
    h = parse_operator(raw.get("hamiltonian", "0"), n, "hamiltonian", pair_order)
    if np.linalg.norm(h - h.conj().T) > 1e-12:
        raise ScenarioError("hamiltonian", "expression is not Hermitian")
    lind = _lindblad(raw.get("lindblad"), n, pair_order)
    rho0 = _initial_state(raw["initial_state"], n) if "initial_state" in raw else None

    kc = raw.get("kc", 0.0)
    kcs = [float(k) for k in kc] if isinstance(kc, list) else [float(kc)]
    if not kcs or any(k < 0 for k in kcs):
        raise ScenarioError("kc", "gains must be non-negative")
    outputs = raw.get("outputs", ["errors"])
    if not isinstance(outputs, list) or set(outputs) - OUTPUTS:
        raise ScenarioError("outputs", f"choose from {sorted(OUTPUTS)}")
    try:
        spec = NetworkSpec(
            graph, h, lind, kcs[0], rho0, name=str(raw.get("name", "")),
            meta={"pair_order": pair_order},
        )
    except ValueError as exc:
        raise ScenarioError("scenario", str(exc)) from None
    return Scenario(spec, _grid(raw.get("grid")), kcs, list(outputs), source, raw)


def load_scenario(path_or_name, pair_order: str = "lt") -> Scenario:
    """Read a scenario file, or one of the built-in examples by name."""
    name = str(path_or_name)
    if name in BUILTINS:
        text = resources.files("qblend.scenarios").joinpath(f"{name}.yaml").read_text()
        source = f"builtin:{name}"
    else:
        path = Path(name)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ScenarioError(name, f"cannot read file ({exc.strerror})") from None
        source = str(path)
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"line {mark.line + 1}" if mark else "parse"
        raise ScenarioError(f"{source} {loc}", str(getattr(exc, "problem", exc))) from None
    if not isinstance(raw, dict):
        raise ScenarioError(source, "top level must be a mapping")
    return scenario_from_dict(raw, source, pair_order)
