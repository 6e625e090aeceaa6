"""TOML scenario files: parsing with line-numbered diagnostics, and serialization.

Node labels in files are 1-based; everything in memory is 0-based.  The
translation happens here and nowhere else.

Layout::

    [plant]        a (rows), x0, optional transform/block_form,
                   [plant.observations] "label" = rows
    [network]      nodes, edges = [[u, v], ...]      (or [generate])
    [resilience]   f
    [attack]       compromised, [attack.design], [attack.runtime]
    [run]          rounds, seed, estimator_mode, initial_range or
                   [run.initial_estimates], [run.gains], [run.medags]
"""
from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .adversary import (BROADCAST_EARLY, HONEST, SILENT, AttackScript, Constant, Honest,
                        PerRecipient, RandomUniform, ScaledTruth, ScriptedRounds, Silent)
from .errors import ConfigurationError, ScenarioParseError
from .graph_analysis import SensorNetwork
from .medag import Medag
from .netgen import GenSpec, SourceRule, generate
from .plant import LtiPlant
from .simulator import InitialRange, Scenario

KNOWN_SECTIONS = ("plant", "network", "generate", "resilience", "attack", "run")


@dataclass
class ScenarioDocument:
    """A parsed scenario plus what is needed to write it back out."""

    scenario: Scenario
    generate: GenSpec | None = None
    medag_paths: dict[int, str] = field(default_factory=dict)


class _Locator:
    """Maps ``(section, key)`` back to a line of the source text."""

    def __init__(self, text: str):
        self.lines = text.splitlines()

    def find(self, section: str | None, key: str | None = None) -> int | None:
        if section is None:
            return None
        header = re.compile(r"^\s*\[\s*" + re.escape(section).replace(r"\.", r"\s*\.\s*") + r"\s*\]")
        keypat = re.compile(r"^\s*\"?" + re.escape(key) + r"\"?\s*=") if key is not None else None
        start = None
        for no, line in enumerate(self.lines, start=1):
            if header.match(line):
                start = no
                if keypat is None:
                    return no
                continue
            if start is not None:
                if re.match(r"^\s*\[", line):
                    break
                if keypat.match(line):
                    return no
        if start is None and "." in section:
            return self.find(section.rsplit(".", 1)[0], section.rsplit(".", 1)[1])
        return start


class _Reader:
    def __init__(self, text: str):
        self.loc = _Locator(text)

    def fail(self, msg: str, section: str | None = None, key: str | None = None):
        raise ScenarioParseError(msg, line=self.loc.find(section, key), section=section)

    def get(self, table: Mapping, key: str, section: str, kind=None, default=...):
        if key not in table:
            if default is ...:
                self.fail(f"[{section}] is missing required key '{key}'", section)
            return default
        value = table[key]
        if kind is not None and not _is_kind(value, kind):
            self.fail(f"[{section}] key '{key}' must be {kind}", section, key)
        return value

    def label(self, s, n: int, section: str, key: str | None = None) -> int:
        try:
            lab = int(s)
        except (TypeError, ValueError):
            self.fail(f"node label {s!r} is not an integer", section, key or str(s))
        if not 1 <= lab <= n:
            self.fail(f"node label {lab} outside 1..{n}", section, key or str(s))
        return lab - 1

    def matrix(self, value, section: str, key: str, cols: int | None = None) -> np.ndarray:
        try:
            arr = np.asarray(value, dtype=float)
        except (TypeError, ValueError):
            self.fail(f"'{key}' must be a numeric matrix", section, key)
        if arr.size == 0:
            return np.zeros((0, cols or 0))
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2 or (cols is not None and arr.shape[1] != cols):
            self.fail(f"'{key}' has shape {arr.shape}, expected rows of length {cols}", section, key)
        if not np.all(np.isfinite(arr)):
            self.fail(f"'{key}' contains non-finite entries", section, key)
        return arr


def _is_kind(value, kind) -> bool:
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "str":
        return isinstance(value, str)
    if kind == "list":
        return isinstance(value, list)
    if kind == "table":
        return isinstance(value, dict)
    raise ValueError(kind)


# -- parsing --------------------------------------------------------------------

def _runtime_policy(rd: _Reader, spec, n: int, section: str, key: str):
    if isinstance(spec, str):
        spec = {"policy": spec}
    if not isinstance(spec, dict) or "policy" not in spec:
        rd.fail("runtime policy must be a name or a table with 'policy'", section, key)
    kind = spec["policy"]
    if kind == "honest":
        return Honest()
    if kind == "silent":
        return Silent()
    if kind == "constant":
        return Constant(float(rd.get(spec, "value", section, "number")))
    if kind == "random":
        return RandomUniform(int(rd.get(spec, "seed", section, "int")),
                             float(rd.get(spec, "low", section, "number")),
                             float(rd.get(spec, "high", section, "number")))
    if kind == "scaled-truth":
        return ScaledTruth(float(rd.get(spec, "factor", section, "number")))
    if kind == "per-recipient":
        recips = rd.get(spec, "recipients", section, "table", {})
        policies = {rd.label(lab, n, section, key): _runtime_policy(rd, p, n, section, key)
                    for lab, p in recips.items()}
        default = _runtime_policy(rd, spec.get("default", "honest"), n, section, key)
        return PerRecipient(policies, default)
    rd.fail(f"unknown runtime policy {kind!r}", section, key)


def _design_policy(rd: _Reader, spec, section: str, key: str):
    if isinstance(spec, str):
        if spec not in (HONEST, SILENT, BROADCAST_EARLY):
            rd.fail(f"unknown design policy {spec!r}", section, key)
        return spec
    if isinstance(spec, dict) and spec.get("policy") == "scripted-rounds":
        rounds = rd.get(spec, "rounds", section, "list")
        return ScriptedRounds(frozenset(int(r) for r in rounds))
    rd.fail("design policy must be honest, silent, broadcast-early or {policy='scripted-rounds', rounds=[...]}",
            section, key)


def _gen_spec(rd: _Reader, g: Mapping) -> GenSpec:
    sec = "generate"
    model = rd.get(g, "model", sec, "str")
    rule_kind = g.get("source_rule", "random-subset")
    explicit = tuple(frozenset(int(v) - 1 for v in s) for s in g.get("explicit_sources", []))
    try:
        rule = SourceRule(kind=rule_kind, size=int(g.get("source_size", 0)),
                          probability=float(g.get("source_probability", 0.0)),
                          explicit=explicit, count=int(g.get("source_count", 1)))
        seed_graph = None
        seed_sources: frozenset[int] = frozenset()
        if model == "ba":
            sg = rd.get(g, "seed_graph", sec, "table")
            sn = rd.get(sg, "nodes", "generate.seed_graph", "int")
            seed_graph = SensorNetwork.from_edges(
                sn, [(rd.label(u, sn, sec, "seed_graph"), rd.label(v, sn, sec, "seed_graph"))
                     for u, v in sg.get("edges", [])])
            seed_sources = frozenset(rd.label(s, sn, sec, "seed_graph") for s in sg.get("sources", []))
        return GenSpec(model=model, n_nodes=int(rd.get(g, "n_nodes", sec, "int")),
                       r=int(g.get("r", 1)), seed=int(g.get("seed", 0)),
                       p=float(g.get("p", 0.0)), d=float(g.get("d", 0.0)),
                       seed_graph=seed_graph, seed_sources=seed_sources, source_rule=rule)
    except ConfigurationError as exc:
        if isinstance(exc, ScenarioParseError):
            raise
        rd.fail(str(exc), sec)


def parse_gen_spec(text: str) -> GenSpec:
    """A stand-alone generator spec: a file whose only required section is [generate]."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioParseError(f"invalid TOML: {exc}") from None
    rd = _Reader(text)
    if "generate" not in data:
        raise ScenarioParseError("missing [generate] section", section="generate")
    return _gen_spec(rd, data["generate"])


def parse_scenario(text: str, base_dir: str | Path | None = None) -> ScenarioDocument:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioParseError(f"invalid TOML: {exc}") from None
    rd = _Reader(text)
    for sec in data:
        if sec not in KNOWN_SECTIONS:
            rd.fail(f"unknown section [{sec}]", sec)
    for sec in ("plant", "resilience"):
        if sec not in data:
            raise ScenarioParseError(f"missing [{sec}] section", section=sec)
    if ("network" in data) == ("generate" in data):
        raise ScenarioParseError("exactly one of [network] and [generate] must be present", section="network")

    gen = None
    if "network" in data:
        nw = data["network"]
        n = int(rd.get(nw, "nodes", "network", "int"))
        if n < 1:
            rd.fail("network needs at least one node", "network", "nodes")
        edges = []
        for e in rd.get(nw, "edges", "network", "list", []):
            if not isinstance(e, list) or len(e) != 2:
                rd.fail(f"edge {e!r} must be a pair of labels", "network", "edges")
            edges.append((rd.label(e[0], n, "network", "edges"), rd.label(e[1], n, "network", "edges")))
        try:
            net = SensorNetwork.from_edges(n, edges)
        except ConfigurationError as exc:
            rd.fail(str(exc), "network", "edges")
    else:
        gen = _gen_spec(rd, data["generate"])
        net = generate(gen)
        n = net.node_count

    pl = data["plant"]
    a = rd.matrix(rd.get(pl, "a", "plant", "list"), "plant", "a")
    dim = a.shape[0]
    if a.shape != (dim, dim):
        rd.fail(f"'a' must be square, got shape {a.shape}", "plant", "a")
    obs_table = rd.get(pl, "observations", "plant", "table", {})
    obs = {i: np.zeros((0, dim)) for i in range(n)}
    for lab, rows in obs_table.items():
        i = rd.label(lab, n, "plant.observations", lab)
        obs[i] = rd.matrix(rows, "plant.observations", lab, cols=dim)
    x0 = np.asarray(pl.get("x0", [0.0] * dim), dtype=float)
    if x0.shape != (dim,):
        rd.fail(f"'x0' must have {dim} entries", "plant", "x0")
    transform = block_form = None
    if ("transform" in pl) != ("block_form" in pl):
        rd.fail("'transform' and 'block_form' must be given together", "plant")
    if "transform" in pl:
        transform = rd.matrix(pl["transform"], "plant", "transform", cols=dim)
        block_form = rd.matrix(pl["block_form"], "plant", "block_form", cols=dim)
    try:
        plant = LtiPlant(a, obs, x0)
    except ConfigurationError as exc:
        rd.fail(str(exc), "plant")

    f = int(rd.get(data["resilience"], "f", "resilience", "int"))
    if f < 0:
        rd.fail("f must be nonnegative", "resilience", "f")

    attack_t = data.get("attack", {})
    compromised = frozenset(rd.label(v, n, "attack", "compromised") for v in attack_t.get("compromised", []))
    design = {}
    for lab, pol in attack_t.get("design", {}).items():
        i = rd.label(lab, n, "attack.design", lab)
        design[i] = _design_policy(rd, pol, "attack.design", lab)
    runtime = {}
    for lab, pol in attack_t.get("runtime", {}).items():
        i = rd.label(lab, n, "attack.runtime", lab)
        runtime[i] = _runtime_policy(rd, pol, n, "attack.runtime", lab)
    try:
        attack = AttackScript(compromised, design, runtime)
    except ValueError as exc:
        rd.fail(str(exc), "attack")

    run_t = data.get("run", {})
    rounds = int(rd.get(run_t, "rounds", "run", "int", 50))
    seed = int(rd.get(run_t, "seed", "run", "int", 0))
    mode = rd.get(run_t, "estimator_mode", "run", "str", "resilient")
    init: Any = None
    if "initial_range" in run_t and "initial_estimates" in run_t:
        rd.fail("give either 'initial_range' or 'initial_estimates', not both", "run")
    if "initial_range" in run_t:
        lo, hi = run_t["initial_range"]
        init = InitialRange(float(lo), float(hi))
    elif "initial_estimates" in run_t:
        init = {}
        for lab, vec in run_t["initial_estimates"].items():
            init[rd.label(lab, n, "run.initial_estimates", lab)] = tuple(float(v) for v in vec)
    gains = {}
    for lab, rows in run_t.get("gains", {}).items():
        gains[rd.label(lab, n, "run.gains", lab)] = np.atleast_2d(np.asarray(rows, dtype=float))
    medag_paths = {int(j): str(p) for j, p in run_t.get("medags", {}).items()}
    medags = None
    if medag_paths:
        base = Path(base_dir) if base_dir is not None else Path(".")
        medags = {}
        for j, p in medag_paths.items():
            try:
                medags[j] = Medag.from_text((base / p).read_text())
            except OSError as exc:
                rd.fail(f"cannot read MEDAG file {p}: {exc}", "run.medags", str(j))
    try:
        scenario = Scenario(plant=plant, net=net, f=f, attack=attack, rounds=rounds, seed=seed,
                            initial_estimates=init, observer_gains=gains, estimator_mode=mode,
                            transform=transform, block_form=block_form, medags=medags)
    except ConfigurationError as exc:
        rd.fail(str(exc), "run")
    return ScenarioDocument(scenario=scenario, generate=gen, medag_paths=medag_paths)


def load_scenario(path: str | Path) -> ScenarioDocument:
    path = Path(path)
    return parse_scenario(path.read_text(), base_dir=path.parent)


# -- serialization --------------------------------------------------------------

def _rows(mat) -> list:
    return [[float(v) for v in row] for row in np.atleast_2d(np.asarray(mat, dtype=float))]


def _runtime_out(pol) -> Any:
    if isinstance(pol, Honest):
        return "honest"
    if isinstance(pol, Silent):
        return "silent"
    if isinstance(pol, Constant):
        return {"policy": "constant", "value": float(pol.value)}
    if isinstance(pol, RandomUniform):
        return {"policy": "random", "seed": int(pol.seed), "low": float(pol.low), "high": float(pol.high)}
    if isinstance(pol, ScaledTruth):
        return {"policy": "scaled-truth", "factor": float(pol.factor)}
    if isinstance(pol, PerRecipient):
        return {"policy": "per-recipient", "default": _runtime_out(pol.default),
                "recipients": {str(i + 1): _runtime_out(p) for i, p in sorted(pol.policies.items())}}
    raise TypeError(pol)


def _design_out(pol) -> Any:
    if isinstance(pol, ScriptedRounds):
        return {"policy": "scripted-rounds", "rounds": sorted(pol.rounds)}
    return pol


def gen_spec_table(spec: GenSpec) -> dict:
    g: dict[str, Any] = {"model": spec.model, "n_nodes": spec.n_nodes, "r": spec.r, "seed": spec.seed}
    if spec.model == "er":
        g["p"] = spec.p
    if spec.model == "rgg":
        g["d"] = spec.d
    rule = spec.source_rule
    g["source_rule"] = rule.kind
    g["source_size"] = rule.size
    g["source_probability"] = rule.probability
    g["source_count"] = rule.count
    if rule.explicit:
        g["explicit_sources"] = [sorted(i + 1 for i in s) for s in rule.explicit]
    if spec.seed_graph is not None:
        g["seed_graph"] = {"nodes": spec.seed_graph.node_count,
                           "edges": [[u + 1, v + 1] for u, v in sorted(spec.seed_graph.edges)],
                           "sources": sorted(i + 1 for i in spec.seed_sources)}
    return g


def dump_scenario(doc: ScenarioDocument) -> str:
    sc = doc.scenario
    plant: dict[str, Any] = {"a": _rows(sc.plant.a_matrix), "x0": [float(v) for v in sc.plant.initial_state]}
    if sc.transform is not None:
        plant["transform"] = _rows(sc.transform)
        plant["block_form"] = _rows(sc.block_form)
    plant["observations"] = {str(i + 1): _rows(c) for i, c in sorted(sc.plant.observations.items())
                             if c.shape[0] > 0}
    data: dict[str, Any] = {"plant": plant}
    if doc.generate is not None:
        data["generate"] = gen_spec_table(doc.generate)
    else:
        data["network"] = {"nodes": sc.net.node_count,
                           "edges": [[u + 1, v + 1] for u, v in sorted(sc.net.edges)]}
    data["resilience"] = {"f": sc.f}
    att = sc.attack
    if att.compromised:
        data["attack"] = {
            "compromised": sorted(i + 1 for i in att.compromised),
            "design": {str(i + 1): _design_out(p) for i, p in sorted(att.design.items())},
            "runtime": {str(i + 1): _runtime_out(p) for i, p in sorted(att.runtime.items())},
        }
    run: dict[str, Any] = {"rounds": sc.rounds, "seed": sc.seed, "estimator_mode": sc.estimator_mode}
    init = sc.initial_estimates
    if isinstance(init, InitialRange):
        run["initial_range"] = [float(init.low), float(init.high)]
    elif init is not None:
        run["initial_estimates"] = {str(i + 1): [float(v) for v in vec] for i, vec in sorted(init.items())}
    if sc.observer_gains:
        run["gains"] = {str(i + 1): _rows(g) for i, g in sorted(sc.observer_gains.items())}
    if doc.medag_paths:
        run["medags"] = {str(j): p for j, p in sorted(doc.medag_paths.items())}
    data["run"] = run
    return tomli_w.dumps(data)

