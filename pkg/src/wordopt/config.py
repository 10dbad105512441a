"""Problem documents: schema validation, conversion to ProblemSpec, and emission back to text.

Two equivalent forms are accepted: XML validated against ``schema/problem.xsd``
and a YAML structured-text form validated against ``schema/problem.schema.json``.
"""

from __future__ import annotations

import hashlib
import json
import os
import xml.etree.ElementTree as ET
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Optional

import jsonschema
import xmlschema
import yaml

from .core import Alphabet, ContractError, Problem

SEED_ENV = "WORDOPT_SEED"
POOL_ENV = "WORDOPT_POOL"

SAW_SCORES = {"pivot-count", "hp"}


class ConfigError(ValueError):
    pass


@dataclass
class FunctionRef:
    name: str
    params: dict = field(default_factory=dict)


@dataclass
class ProblemSpec:
    name: str
    alphabet: tuple
    n: int
    score: FunctionRef
    metaheuristic: FunctionRef
    move: Optional[FunctionRef] = None
    initial: Optional[FunctionRef] = None
    seed: Optional[int] = None
    max_iterations: Optional[int] = None
    target_score: Optional[float] = None
    instances: int = 1
    workers: int = 1
    transport: str = "inprocess"
    pool: Optional[str] = None
    report_dir: Optional[str] = None
    checkpoint: Optional[str] = None
    checkpoint_every: int = 0

    def __post_init__(self):
        self.alphabet = tuple(self.alphabet)
        saw_like = self.score.name in SAW_SCORES
        if self.move is None:
            self.move = FunctionRef("pivot" if saw_like else "hamming")
        if self.initial is None:
            self.initial = FunctionRef("straight-line" if saw_like else "random")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]

    def effective_seed(self, override: Optional[int] = None) -> int:
        """CLI override, else the document, else $WORDOPT_SEED, else 0."""
        if override is not None:
            return int(override)
        if self.seed is not None:
            return self.seed
        return int(os.environ.get(SEED_ENV, 0))

    def effective_pool(self, override: Optional[str] = None) -> Optional[str]:
        return override or self.pool or os.environ.get(POOL_ENV) or None


def _schema_file(name: str):
    return resources.files("wordopt") / "schema" / name


_XSD = None
_JSONSCHEMA = None


def xml_schema():
    global _XSD
    if _XSD is None:
        with resources.as_file(_schema_file("problem.xsd")) as path:
            _XSD = xmlschema.XMLSchema(str(path))
    return _XSD


def json_schema() -> dict:
    global _JSONSCHEMA
    if _JSONSCHEMA is None:
        _JSONSCHEMA = json.loads(_schema_file("problem.schema.json").read_text())
    return _JSONSCHEMA


# --- typed parameters ----------------------------------------------------------

def _param_type(value) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, (list, tuple)):
        return "floats" if any(isinstance(v, float) for v in value) else "ints"
    return "str"


def _param_text(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return " ".join(repr(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _param_value(text: str, kind: str, path: str):
    text = (text or "").strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if text.lower() not in ("true", "false", "1", "0"):
                raise ValueError(text)
            return text.lower() in ("true", "1")
        if kind == "ints":
            return [int(t) for t in text.split()]
        if kind == "floats":
            return [float(t) for t in text.split()]
    except ValueError:
        raise ConfigError(f"{path}: {text!r} is not a valid {kind}") from None
    return text


# --- XML ------------------------------------------------------------------------

def _xml_function(el, path) -> FunctionRef:
    params = {}
    for p in el.findall("param"):
        name = p.get("name")
        if name in params:
            raise ConfigError(f"{path}/param[@name='{name}']: duplicate parameter")
        params[name] = _param_value(p.text, p.get("type", "str"), f"{path}/param[@name='{name}']")
    return FunctionRef(el.get("name"), params)


def _parse_xml(text: str) -> ProblemSpec:
    schema = xml_schema()
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ConfigError(f"malformed XML: {exc}") from None
    error = next(schema.iter_errors(text), None)
    if error is not None:
        raise ConfigError(f"schema violation at {error.path or '/'}: {error.reason}")
    kw = {"name": root.get("name"),
          "alphabet": tuple(s.text.strip() for s in root.find("alphabet").findall("symbol")),
          "n": int(root.findtext("n"))}
    if root.find("seed") is not None:
        kw["seed"] = int(root.findtext("seed"))
    for tag in ("score", "move", "initial", "metaheuristic"):
        el = root.find(tag)
        if el is not None:
            kw[tag] = _xml_function(el, f"/problem/{tag}")
    stop = root.find("stop")
    if stop is not None:
        if stop.find("max_iterations") is not None:
            kw["max_iterations"] = int(stop.findtext("max_iterations"))
        if stop.find("target_score") is not None:
            kw["target_score"] = float(stop.findtext("target_score"))
    par = root.find("parallel")
    if par is not None:
        for key in ("instances", "workers"):
            if par.get(key) is not None:
                kw[key] = int(par.get(key))
        for key in ("transport", "pool"):
            if par.get(key) is not None:
                kw[key] = par.get(key)
    out = root.find("output")
    if out is not None:
        for key in ("report_dir", "checkpoint"):
            if out.get(key) is not None:
                kw[key] = out.get(key)
        if out.get("checkpoint_every") is not None:
            kw["checkpoint_every"] = int(out.get("checkpoint_every"))
    return ProblemSpec(**kw)


def _emit_xml(spec: ProblemSpec) -> str:
    root = ET.Element("problem", name=spec.name)
    alpha = ET.SubElement(root, "alphabet")
    for s in spec.alphabet:
        ET.SubElement(alpha, "symbol").text = s
    ET.SubElement(root, "n").text = str(spec.n)
    if spec.seed is not None:
        ET.SubElement(root, "seed").text = str(spec.seed)
    for tag in ("score", "move", "initial", "metaheuristic"):
        ref = getattr(spec, tag)
        el = ET.SubElement(root, tag, name=ref.name)
        for k, v in ref.params.items():
            p = ET.SubElement(el, "param", name=k, type=_param_type(v))
            p.text = _param_text(v)
    if spec.max_iterations is not None or spec.target_score is not None:
        stop = ET.SubElement(root, "stop")
        if spec.max_iterations is not None:
            ET.SubElement(stop, "max_iterations").text = str(spec.max_iterations)
        if spec.target_score is not None:
            ET.SubElement(stop, "target_score").text = repr(float(spec.target_score))
    par = ET.SubElement(root, "parallel", instances=str(spec.instances), workers=str(spec.workers),
                        transport=spec.transport)
    if spec.pool:
        par.set("pool", spec.pool)
    out = ET.SubElement(root, "output", checkpoint_every=str(spec.checkpoint_every))
    for key in ("report_dir", "checkpoint"):
        if getattr(spec, key):
            out.set(key, getattr(spec, key))
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


# --- YAML -----------------------------------------------------------------------

def _parse_yaml(text: str) -> ProblemSpec:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from None
    validator = jsonschema.Draft202012Validator(json_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = "/" + "/".join(str(p) for p in e.absolute_path)
        raise ConfigError(f"schema violation at {path}: {e.message}")

    def fn(key):
        d = doc.get(key)
        return None if d is None else FunctionRef(d["name"], dict(d.get("params") or {}))

    kw = {"name": doc["problem"], "alphabet": tuple(str(s) for s in doc["alphabet"]), "n": doc["n"],
          "seed": doc.get("seed"), "score": fn("score"), "metaheuristic": fn("metaheuristic"),
          "move": fn("move"), "initial": fn("initial")}
    kw.update((doc.get("stop") or {}))
    kw.update((doc.get("parallel") or {}))
    kw.update((doc.get("output") or {}))
    if kw.get("target_score") is not None:
        kw["target_score"] = float(kw["target_score"])
    return ProblemSpec(**kw)


def _emit_yaml(spec: ProblemSpec) -> str:
    def fn(ref):
        d = {"name": ref.name}
        if ref.params:
            d["params"] = {k: list(v) if isinstance(v, tuple) else v for k, v in ref.params.items()}
        return d

    doc = {"problem": spec.name, "alphabet": list(spec.alphabet), "n": spec.n}
    if spec.seed is not None:
        doc["seed"] = spec.seed
    for key in ("score", "move", "initial", "metaheuristic"):
        doc[key] = fn(getattr(spec, key))
    stop = {k: getattr(spec, k) for k in ("max_iterations", "target_score") if getattr(spec, k) is not None}
    if stop:
        doc["stop"] = stop
    doc["parallel"] = {"instances": spec.instances, "workers": spec.workers, "transport": spec.transport}
    if spec.pool:
        doc["parallel"]["pool"] = spec.pool
    doc["output"] = {"checkpoint_every": spec.checkpoint_every}
    for key in ("report_dir", "checkpoint"):
        if getattr(spec, key):
            doc["output"][key] = getattr(spec, key)
    return yaml.safe_dump(doc, sort_keys=False)


def detect_format(text: str) -> str:
    return "xml" if text.lstrip().startswith("<") else "yaml"


def parse_spec(text: str, fmt: Optional[str] = None, check: bool = True) -> ProblemSpec:
    """Validate a problem document and convert it; ``check`` also resolves every name."""
    fmt = fmt or detect_format(text)
    if fmt == "xml":
        spec = _parse_xml(text)
    elif fmt == "yaml":
        spec = _parse_yaml(text)
    else:
        raise ConfigError(f"unknown document format {fmt!r}")
    if check:
        validate_spec(spec)
    return spec


def emit_spec(spec: ProblemSpec, fmt: str = "xml") -> str:
    return _emit_xml(spec) if fmt == "xml" else _emit_yaml(spec)


def load_spec(path, check: bool = True) -> tuple:
    """(spec, document text, format) for a file on disk."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    fmt = detect_format(text)
    return parse_spec(text, fmt, check), text, fmt


# --- building --------------------------------------------------------------------

_STOP_NAMES = {
    "sa": ("max_iterations", "target_score"),
    "basin-hopping": ("max_iterations", "target_score"),
    "ga": ("max_iterations", "stop_threshold"),
    "pso": ("max_iterations", "stop_threshold"),
}


def mh_params(spec: ProblemSpec) -> dict:
    params = dict(spec.metaheuristic.params)
    iters, target = _STOP_NAMES.get(spec.metaheuristic.name, ("max_iterations", "target_score"))
    if spec.max_iterations is not None:
        params[iters] = spec.max_iterations
    if spec.target_score is not None:
        params[target] = spec.target_score
    return params


def build_problem(spec: ProblemSpec) -> Problem:
    from .registry import registry_resolve

    alphabet = Alphabet(spec.alphabet)
    ctx = {"alphabet": alphabet, "n": spec.n}
    score = registry_resolve("score", spec.score.name, spec.score.params, **ctx)
    move = registry_resolve("move", spec.move.name, spec.move.params, **ctx)
    initial = registry_resolve("initial", spec.initial.name, spec.initial.params, **ctx)
    return Problem(spec.name, alphabet, spec.n, score, move, initial)


def build_engine(spec: ProblemSpec, problem: Optional[Problem] = None, **extra):
    from .registry import registry_resolve

    problem = problem or build_problem(spec)
    engine = registry_resolve("metaheuristic", spec.metaheuristic.name, mh_params(spec), problem=problem)
    for k, v in extra.items():
        setattr(engine, k, v)
    return engine


def validate_spec(spec: ProblemSpec) -> None:
    """Resolve every named function and build the engine so errors surface before a run."""
    try:
        build_engine(spec)
    except ConfigError:
        raise
    except (ContractError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    if spec.transport not in ("inprocess", "socket"):
        raise ConfigError(f"/problem/parallel/@transport: unknown transport {spec.transport!r}")
