"""Hierarchical conditional search spaces: parse, validate, sample, encode, diff, version.

A space is an ordered tree of parameter nodes. Two kinds of nodes own children:

* an ``int`` node with a ``submodule`` replicates its children once per
  repetition index ``0..n-1``, where ``n`` is the sampled value;
* a ``choice`` node with a ``submodule`` keeps one branch of children per
  choice value, and only the chosen branch is instantiated.

Configurations address parameters by instance path, e.g.
``backbone_nums_block``, ``backbone_nums_block[1].block_type`` and
``backbone_nums_block[1].block_type.resnet.nums_layer`` (the branch value is a
path segment, so the two branches of a conditional never collide).
"""

from __future__ import annotations

import math
import re
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Any, Iterator, Mapping

import numpy as np
import yaml

INACTIVE = -1.0

_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_RANGE_RE = re.compile(r"^\s*(.+?)\s*\.\.\.\s*(.+?)\s*$")
_INDEX_RE = re.compile(r"\[\d+\]")
_PLAIN_VALUE_RE = re.compile(r"^[A-Za-z0-9_+\-]+(\.[0-9]+)?$")


class SpaceError(Exception):
    """Base class for search-space failures."""


class SpaceParseError(SpaceError):
    """Malformed space document; carries the source position when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class SpaceValidationError(SpaceError):
    """Semantically invalid node; names the offending path."""

    def __init__(self, message: str, path: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class ParamNode:
    """One parameter definition in the space tree."""

    name: str
    kind: str  # int | float | choice
    lo: float | int | None = None
    hi: float | int | None = None
    values: tuple[str, ...] = ()
    log_scale: bool = False
    children: tuple["ParamNode", ...] = ()  # repetition template (int nodes)
    branches: Mapping[str, tuple["ParamNode", ...]] = field(default_factory=dict)

    @property
    def has_children(self) -> bool:
        return bool(self.children) or bool(self.branches)


@dataclass(frozen=True)
class SearchSpace:
    """Immutable, versioned snapshot of a space tree."""

    space_id: str
    version: int
    roots: tuple[ParamNode, ...]
    parent_version: int | None = None
    created_at: float = 0.0
    note: str = ""


@dataclass(frozen=True)
class Configuration:
    """A concrete assignment of values to exactly the active parameters."""

    assignments: Mapping[str, Any]
    space_id: str
    space_version: int

    def canonical_key(self) -> tuple:
        """Order-independent identity, usable as a set/dict key."""
        return tuple(sorted(self.assignments.items()))


@dataclass(frozen=True)
class DiffEntry:
    path: str
    kind: str  # added | removed | range-narrowed | range-widened | values-changed
    old: Any = None
    new: Any = None

    def to_dict(self) -> dict[str, Any]:
        return {"path": self.path, "kind": self.kind, "old": self.old, "new": self.new}


@dataclass(frozen=True)
class SpaceDiff:
    entries: tuple[DiffEntry, ...]

    def __bool__(self) -> bool:
        return bool(self.entries)

    def to_list(self) -> list[dict[str, Any]]:
        return [e.to_dict() for e in self.entries]


@dataclass(frozen=True)
class DimSpec:
    """One slot of the fixed-length encoding (max expansion of the space)."""

    path: str       # instance path, e.g. depth[2].width
    node_path: str  # structural path, e.g. depth.width
    kind: str
    lo: float | int | None
    hi: float | int | None
    values: tuple[str, ...]
    log_scale: bool


# ---------------------------------------------------------------------------
# parsing


def _as_scalar(raw: Any, path: str) -> float | int:
    if isinstance(raw, bool) or not isinstance(raw, (int, float, str)):
        raise SpaceValidationError(f"expected a number, got {raw!r}", path)
    if isinstance(raw, str):
        try:
            return int(raw)
        except ValueError:
            try:
                return float(raw)
            except ValueError:
                raise SpaceValidationError(f"expected a number, got {raw!r}", path) from None
    return raw


def _parse_numeric_range(raw: Any, kind: str, path: str) -> tuple[float | int, float | int]:
    """Accept the ``[lo...hi]`` form (also a plain two-element list)."""
    if isinstance(raw, str):
        raw = [raw]
    if not isinstance(raw, (list, tuple)):
        raise SpaceValidationError(f"{kind} range must be [lo...hi], got {raw!r}", path)
    if len(raw) == 1 and isinstance(raw[0], str):
        m = _RANGE_RE.match(raw[0])
        if not m:
            raise SpaceValidationError(f"cannot parse range {raw[0]!r}", path)
        lo_raw, hi_raw = m.group(1), m.group(2)
    elif len(raw) == 2:
        lo_raw, hi_raw = raw
    else:
        raise SpaceValidationError(f"{kind} range must have two endpoints, got {raw!r}", path)
    lo = _as_scalar(lo_raw, path)
    hi = _as_scalar(hi_raw, path)
    if kind == "int":
        if int(lo) != lo or int(hi) != hi:
            raise SpaceValidationError(f"int range endpoints must be integers, got [{lo}...{hi}]", path)
        lo, hi = int(lo), int(hi)
    else:
        lo, hi = float(lo), float(hi)
    if lo > hi:
        raise SpaceValidationError(f"range lo > hi ([{lo}...{hi}])", path)
    return lo, hi


def _choice_value(raw: Any, path: str) -> str:
    if isinstance(raw, bool):
        value = "true" if raw else "false"
    elif isinstance(raw, float) and raw == int(raw):
        value = str(int(raw))
    else:
        value = str(raw)
    if not value:
        raise SpaceValidationError("choice value must be non-empty", path)
    if any(c in value for c in ".[]") or value.strip() != value:
        raise SpaceValidationError(f"choice value {value!r} may not contain '.', '[', ']' or edge whitespace", path)
    return value


def _parse_choice_values(raw: Any, path: str) -> tuple[str, ...]:
    if isinstance(raw, Mapping):  # YAML flow set {a, b} parses as {a: None, b: None}
        items = list(raw.keys())
    elif isinstance(raw, (list, tuple)):
        items = list(raw)
    else:
        raise SpaceValidationError(f"choice range must be a value set, got {raw!r}", path)
    values = tuple(_choice_value(v, path) for v in items)
    if not values:
        raise SpaceValidationError("choice range must be non-empty", path)
    if len(set(values)) != len(values):
        raise SpaceValidationError(f"choice values contain duplicates: {values}", path)
    return values


def _parse_node_map(raw: Any, path: str) -> tuple[ParamNode, ...]:
    if not isinstance(raw, Mapping):
        raise SpaceValidationError("expected a mapping of parameter names to definitions", path or "<root>")
    nodes = []
    seen = set()
    for name, node_raw in raw.items():
        name = str(name)
        child_path = f"{path}.{name}" if path else name
        if not _IDENT_RE.match(name):
            raise SpaceValidationError(f"invalid parameter name {name!r}", child_path)
        if name in seen:
            raise SpaceValidationError("duplicate sibling name", child_path)
        seen.add(name)
        nodes.append(_parse_node(name, node_raw, child_path))
    return tuple(nodes)


def _parse_node(name: str, raw: Any, path: str) -> ParamNode:
    if not isinstance(raw, Mapping):
        raise SpaceValidationError(f"parameter definition must be a mapping, got {raw!r}", path)
    unknown = set(raw) - {"type", "range", "log_scale", "submodule"}
    if unknown:
        raise SpaceValidationError(f"unknown keys {sorted(unknown)}", path)
    kind = raw.get("type")
    if kind not in ("int", "float", "choice"):
        raise SpaceValidationError(f"type must be int, float or choice, got {kind!r}", path)
    if "range" not in raw:
        raise SpaceValidationError("missing range", path)
    log_scale = bool(raw.get("log_scale", False))
    if log_scale and kind != "float":
        raise SpaceValidationError("log_scale applies to float parameters only", path)
    submodule = raw.get("submodule")

    if kind == "choice":
        values = _parse_choice_values(raw["range"], path)
        branches: dict[str, tuple[ParamNode, ...]] = {}
        if submodule is not None:
            if not isinstance(submodule, Mapping):
                raise SpaceValidationError("choice submodule must map choice values to branches", path)
            for key, branch_raw in submodule.items():
                key = _choice_value(key, path)
                if key not in values:
                    raise SpaceValidationError(f"submodule key {key!r} not in choice range {list(values)}", path)
                branch = _parse_node_map(branch_raw, f"{path}.{key}")
                if branch:
                    branches[key] = branch
        return ParamNode(name=name, kind="choice", values=values, branches=branches)

    lo, hi = _parse_numeric_range(raw["range"], kind, path)
    if kind == "float":
        if submodule is not None:
            raise SpaceValidationError("float parameters cannot carry a submodule", path)
        if log_scale and lo <= 0:
            raise SpaceValidationError("log_scale requires lo > 0", path)
        return ParamNode(name=name, kind="float", lo=lo, hi=hi, log_scale=log_scale)

    children: tuple[ParamNode, ...] = ()
    if submodule is not None:
        if lo < 0:
            raise SpaceValidationError("int with submodule requires lo >= 0", path)
        children = _parse_node_map(submodule, path)
    return ParamNode(name=name, kind="int", lo=lo, hi=hi, children=children)


def parse_space(text: str, space_id: str = "space", version: int = 1,
                parent_version: int | None = None, note: str = "") -> SearchSpace:
    """Parse a space document into a validated ``SearchSpace``.

    Uses the compact range grammar (``range: [2...5]`` for numerics,
    ``range: {a, b}`` for choices) on top of YAML. Syntax errors carry the
    source position; semantic errors name the offending path.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise SpaceParseError(str(getattr(exc, "problem", exc)), mark.line + 1, mark.column + 1) from exc
        raise SpaceParseError(str(exc)) from exc
    if raw is None:
        raise SpaceParseError("empty document")
    return space_from_doc(raw, space_id=space_id, version=version,
                          parent_version=parent_version, note=note)


def space_from_doc(doc: Mapping[str, Any], space_id: str = "space", version: int = 1,
                   parent_version: int | None = None, note: str = "") -> SearchSpace:
    """Build a space from an already-deserialized document mapping."""
    roots = _parse_node_map(doc, "")
    space = SearchSpace(space_id=space_id, version=version, roots=roots,
                        parent_version=parent_version, created_at=time.time(), note=note)
    validate_space(space)
    return space


def validate_space(space: SearchSpace) -> None:
    if space.parent_version is not None and space.version <= space.parent_version:
        raise SpaceValidationError(
            f"version {space.version} must exceed parent {space.parent_version}", "<space>")
    _validate_nodes(space.roots, "")


def _validate_nodes(nodes: tuple[ParamNode, ...], path: str) -> None:
    seen = set()
    for node in nodes:
        node_path = f"{path}.{node.name}" if path else node.name
        if node.name in seen:
            raise SpaceValidationError("duplicate sibling name", node_path)
        seen.add(node.name)
        if node.kind == "choice":
            if not node.values:
                raise SpaceValidationError("choice range must be non-empty", node_path)
            if len(set(node.values)) != len(node.values):
                raise SpaceValidationError("choice values contain duplicates", node_path)
            for key, branch in node.branches.items():
                if key not in node.values:
                    raise SpaceValidationError(f"submodule key {key!r} not in choice range", node_path)
                _validate_nodes(branch, f"{node_path}.{key}")
        elif node.kind in ("int", "float"):
            if node.lo is None or node.hi is None or node.lo > node.hi:
                raise SpaceValidationError(f"range lo > hi ([{node.lo}...{node.hi}])", node_path)
            if node.kind == "int" and node.children and node.lo < 0:
                raise SpaceValidationError("int with submodule requires lo >= 0", node_path)
            if node.log_scale and (node.kind != "float" or node.lo <= 0):
                raise SpaceValidationError("log_scale requires a float with lo > 0", node_path)
            if node.children:
                _validate_nodes(node.children, node_path)
        else:
            raise SpaceValidationError(f"unknown kind {node.kind!r}", node_path)


# ---------------------------------------------------------------------------
# serialization


def _format_number(v: float | int) -> str:
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def _format_choice_value(v: str) -> str:
    return v if _PLAIN_VALUE_RE.match(v) else f'"{v}"'


def node_to_doc(node: ParamNode) -> dict[str, Any]:
    doc: dict[str, Any] = {"type": node.kind}
    if node.kind == "choice":
        doc["range"] = list(node.values)
        if node.branches:
            doc["submodule"] = {
                key: {child.name: node_to_doc(child) for child in branch}
                for key, branch in node.branches.items()
            }
    else:
        doc["range"] = [node.lo, node.hi]
        if node.log_scale:
            doc["log_scale"] = True
        if node.children:
            doc["submodule"] = {child.name: node_to_doc(child) for child in node.children}
    return doc


def space_to_doc(space: SearchSpace) -> dict[str, Any]:
    return {node.name: node_to_doc(node) for node in space.roots}


def _emit_node(node: ParamNode, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    out.append(f"{pad}{node.name}:")
    out.append(f"{pad}  type: {node.kind}")
    if node.kind == "choice":
        inner = ", ".join(_format_choice_value(v) for v in node.values)
        out.append(f"{pad}  range: {{{inner}}}")
        if node.branches:
            out.append(f"{pad}  submodule:")
            for key in node.values:
                if key in node.branches:
                    out.append(f"{pad}    {_format_choice_value(key)}:")
                    for child in node.branches[key]:
                        _emit_node(child, indent + 3, out)
    else:
        out.append(f"{pad}  range: [{_format_number(node.lo)}...{_format_number(node.hi)}]")
        if node.log_scale:
            out.append(f"{pad}  log_scale: true")
        if node.children:
            out.append(f"{pad}  submodule:")
            for child in node.children:
                _emit_node(child, indent + 2, out)


def serialize_space(space: SearchSpace) -> str:
    """Emit the document grammar; ``parse(serialize(parse(x)))`` is a fixed point."""
    out: list[str] = []
    for node in space.roots:
        _emit_node(node, 0, out)
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# sampling and instance paths


def _sample_value(node: ParamNode, rng: np.random.Generator) -> Any:
    if node.kind == "int":
        return int(rng.integers(node.lo, node.hi + 1))
    if node.kind == "float":
        if node.lo == node.hi:
            return float(node.lo)
        if node.log_scale:
            return float(math.exp(rng.uniform(math.log(node.lo), math.log(node.hi))))
        return float(rng.uniform(node.lo, node.hi))
    return node.values[int(rng.integers(len(node.values)))]


def _sample_node(node: ParamNode, prefix: str, rng: np.random.Generator,
                 out: dict[str, Any]) -> None:
    path = prefix + node.name
    value = _sample_value(node, rng)
    out[path] = value
    if node.kind == "int" and node.children:
        for i in range(value):
            for child in node.children:
                _sample_node(child, f"{path}[{i}].", rng, out)
    elif node.kind == "choice":
        for child in node.branches.get(value, ()):
            _sample_node(child, f"{path}.{value}.", rng, out)


def sample(space: SearchSpace, seed: int | np.random.Generator) -> Configuration:
    """Draw a configuration uniformly (log-uniform for log-scaled floats)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out: dict[str, Any] = {}
    for node in space.roots:
        _sample_node(node, "", rng, out)
    return Configuration(assignments=out, space_id=space.space_id, space_version=space.version)


def _iter_active(nodes: tuple[ParamNode, ...], prefix: str,
                 assignments: Mapping[str, Any]) -> Iterator[tuple[str, ParamNode]]:
    """Walk the active instance tree implied by ``assignments``."""
    for node in nodes:
        path = prefix + node.name
        yield path, node
        value = assignments.get(path)
        if node.kind == "int" and node.children and isinstance(value, int):
            for i in range(value):
                yield from _iter_active(node.children, f"{path}[{i}].", assignments)
        elif node.kind == "choice" and value in node.branches:
            yield from _iter_active(node.branches[value], f"{path}.{value}.", assignments)


def validate_configuration(config: Configuration, space: SearchSpace) -> None:
    """Check the active-set invariant: exactly the active paths, all in range."""
    if config.space_id != space.space_id or config.space_version != space.version:
        raise SpaceValidationError(
            f"configuration is for {config.space_id}@{config.space_version}, "
            f"space is {space.space_id}@{space.version}", "<config>")
    expected = dict(_iter_active(space.roots, "", config.assignments))
    extra = set(config.assignments) - set(expected)
    if extra:
        raise SpaceValidationError("inactive or unknown parameters assigned", sorted(extra)[0])
    for path, node in expected.items():
        if path not in config.assignments:
            raise SpaceValidationError("active parameter missing", path)
        value = config.assignments[path]
        if node.kind == "int":
            if not isinstance(value, int) or isinstance(value, bool) or not node.lo <= value <= node.hi:
                raise SpaceValidationError(f"value {value!r} outside int range [{node.lo}...{node.hi}]", path)
        elif node.kind == "float":
            if not isinstance(value, (int, float)) or not node.lo <= value <= node.hi:
                raise SpaceValidationError(f"value {value!r} outside float range [{node.lo}...{node.hi}]", path)
        else:
            if value not in node.values:
                raise SpaceValidationError(f"value {value!r} not in choice range {list(node.values)}", path)


def configuration_in_space(config: Configuration, space: SearchSpace) -> bool:
    """True when the assignment structure and values fit ``space`` (any version)."""
    try:
        validate_configuration(
            replace(config, space_id=space.space_id, space_version=space.version), space)
        return True
    except SpaceError:
        return False


# ---------------------------------------------------------------------------
# fixed-length encoding


def _layout_node(node: ParamNode, prefix: str, out: list[DimSpec]) -> None:
    path = prefix + node.name
    out.append(DimSpec(path=path, node_path=_INDEX_RE.sub("", path), kind=node.kind,
                       lo=node.lo, hi=node.hi, values=node.values, log_scale=node.log_scale))
    if node.kind == "int" and node.children:
        for i in range(node.hi):
            for child in node.children:
                _layout_node(child, f"{path}[{i}].", out)
    elif node.kind == "choice":
        for value in node.values:
            for child in node.branches.get(value, ()):
                _layout_node(child, f"{path}.{value}.", out)


def space_layout(space: SearchSpace) -> tuple[DimSpec, ...]:
    """Pre-order flattening with repetitions expanded to their maximum count."""
    cached = getattr(space, "_layout_cache", None)
    if cached is not None:
        return cached
    out: list[DimSpec] = []
    for node in space.roots:
        _layout_node(node, "", out)
    layout = tuple(out)
    object.__setattr__(space, "_layout_cache", layout)  # memo on the frozen instance
    return layout


def _encode_value(dim: DimSpec, value: Any) -> float:
    if dim.kind == "choice":
        k = len(dim.values)
        return 0.0 if k == 1 else dim.values.index(value) / (k - 1)
    if dim.lo == dim.hi:
        return 0.0
    if dim.log_scale:
        return (math.log(value) - math.log(dim.lo)) / (math.log(dim.hi) - math.log(dim.lo))
    return (value - dim.lo) / (dim.hi - dim.lo)


def _decode_value(dim: DimSpec, x: float) -> Any:
    if dim.kind == "choice":
        k = len(dim.values)
        return dim.values[0] if k == 1 else dim.values[int(round(x * (k - 1)))]
    if dim.lo == dim.hi:
        return dim.lo
    if dim.log_scale:
        return float(math.exp(math.log(dim.lo) + x * (math.log(dim.hi) - math.log(dim.lo))))
    v = dim.lo + x * (dim.hi - dim.lo)
    return int(round(v)) if dim.kind == "int" else float(v)


def encode(config: Configuration, space: SearchSpace) -> np.ndarray:
    """Map a configuration to the fixed-length vector; inactive dims get -1."""
    if config.space_id != space.space_id or config.space_version != space.version:
        raise SpaceValidationError(
            f"configuration version {config.space_version} does not match space "
            f"version {space.version}", "<config>")
    layout = space_layout(space)
    vec = np.full(len(layout), INACTIVE)
    for i, dim in enumerate(layout):
        if dim.path in config.assignments:
            vec[i] = _encode_value(dim, config.assignments[dim.path])
    return vec


def decode(vector: np.ndarray, space: SearchSpace) -> Configuration:
    """Inverse of :func:`encode` on active dims."""
    layout = space_layout(space)
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (len(layout),):
        raise SpaceValidationError(
            f"vector length {vector.shape} does not match layout {len(layout)}", "<vector>")
    for i, x in enumerate(vector):
        if not (x == INACTIVE or 0.0 <= x <= 1.0):
            raise SpaceValidationError(f"entry {x!r} outside [0,1] and not the -1 sentinel",
                                       layout[i].path)
    index = {dim.path: i for i, dim in enumerate(layout)}

    out: dict[str, Any] = {}

    def walk(nodes: tuple[ParamNode, ...], prefix: str) -> None:
        for node in nodes:
            path = prefix + node.name
            x = vector[index[path]]
            if x == INACTIVE:
                raise SpaceValidationError("active dimension holds the inactive sentinel", path)
            dim = layout[index[path]]
            value = _decode_value(dim, x)
            out[path] = value
            if node.kind == "int" and node.children:
                for i in range(value):
                    walk(node.children, f"{path}[{i}].")
            elif node.kind == "choice" and value in node.branches:
                walk(node.branches[value], f"{path}.{value}.")

    walk(space.roots, "")
    return Configuration(assignments=out, space_id=space.space_id, space_version=space.version)


# ---------------------------------------------------------------------------
# enumeration and mutation


def space_size(space: SearchSpace, cap: int = 1_000_000) -> int | None:
    """Number of distinct configurations, or None once it exceeds ``cap``."""

    def node_count(node: ParamNode) -> int | None:
        if node.kind == "float":
            return None if node.lo != node.hi else 1
        if node.kind == "int":
            total = 0
            for v in range(node.lo, node.hi + 1):
                per_index = 1
                for child in node.children:
                    c = node_count(child)
                    if c is None:
                        return None
                    per_index *= c
                    if per_index > cap:
                        return None
                combo = per_index ** v if per_index > 1 else 1
                if combo > cap:
                    return None
                total += combo
                if total > cap:
                    return None
            return total
        total = 0
        for value in node.values:
            per = 1
            for child in node.branches.get(value, ()):
                c = node_count(child)
                if c is None:
                    return None
                per *= c
                if per > cap:
                    return None
            total += per
            if total > cap:
                return None
        return total

    total = 1
    for node in space.roots:
        c = node_count(node)
        if c is None:
            return None
        total *= c
        if total > cap:
            return None
    return total


def enumerate_configurations(space: SearchSpace, limit: int = 10_000) -> list[Configuration] | None:
    """All configurations of a finite space, or None when above ``limit``."""
    if space_size(space, cap=limit) is None:
        return None

    def node_assignments(node: ParamNode, prefix: str) -> list[dict[str, Any]]:
        path = prefix + node.name
        out: list[dict[str, Any]] = []
        if node.kind == "float":
            out.append({path: float(node.lo)})
            return out
        if node.kind == "int":
            for v in range(node.lo, node.hi + 1):
                partials: list[dict[str, Any]] = [{path: v}]
                for i in range(v):
                    for child in node.children:
                        partials = [
                            {**p, **c}
                            for p in partials
                            for c in node_assignments(child, f"{path}[{i}].")
                        ]
                out.extend(partials)
            return out
        for value in node.values:
            partials = [{path: value}]
            for child in node.branches.get(value, ()):
                partials = [
                    {**p, **c}
                    for p in partials
                    for c in node_assignments(child, f"{path}.{value}.")
                ]
            out.extend(partials)
        return out

    combos: list[dict[str, Any]] = [{}]
    for node in space.roots:
        combos = [{**a, **b} for a in combos for b in node_assignments(node, "")]
    return [Configuration(assignments=c, space_id=space.space_id, space_version=space.version)
            for c in combos]


def _resample_different(node: ParamNode, current: Any, rng: np.random.Generator) -> Any | None:
    """Uniform draw over the node's domain excluding ``current``; None if degenerate."""
    if node.kind == "choice":
        pool = [v for v in node.values if v != current]
        if not pool:
            return None
        return pool[int(rng.integers(len(pool)))]
    if node.kind == "int":
        pool = [v for v in range(node.lo, node.hi + 1) if v != current]
        if not pool:
            return None
        return pool[int(rng.integers(len(pool)))]
    if node.lo == node.hi:
        return None
    return _sample_value(node, rng)


def mutate_config(config: Configuration, space: SearchSpace, rng: np.random.Generator,
                  path: str | None = None) -> Configuration:
    """Re-sample exactly one active parameter; structure changes cascade.

    A parameter whose domain is a single value cannot mutate, so another
    active parameter is chosen. A fully degenerate configuration is returned
    unchanged.
    """
    active = {p: n for p, n in _iter_active(space.roots, "", config.assignments)}
    candidates = [path] if path is not None else list(active)
    if path is None:
        order = rng.permutation(len(candidates))
        candidates = [candidates[i] for i in order]
    for target in candidates:
        node = active[target]
        new_value = _resample_different(node, config.assignments[target], rng)
        if new_value is None:
            continue
        out = dict(config.assignments)
        old_value = out[target]
        out[target] = new_value
        if node.kind == "int" and node.children:
            for i in range(new_value, old_value):
                prefix = f"{target}[{i}]"
                for key in [k for k in out if k.startswith(prefix)]:
                    del out[key]
            for i in range(old_value, new_value):
                for child in node.children:
                    _sample_node(child, f"{target}[{i}].", rng, out)
        elif node.kind == "choice":
            prefix = f"{target}.{old_value}."
            for key in [k for k in out if k.startswith(prefix)]:
                del out[key]
            for child in node.branches.get(new_value, ()):
                _sample_node(child, f"{target}.{new_value}.", rng, out)
        return Configuration(assignments=out, space_id=config.space_id,
                             space_version=config.space_version)
    return config


# ---------------------------------------------------------------------------
# diff / apply / versioning


def _node_range_entry(path: str, old: ParamNode, new: ParamNode) -> DiffEntry | None:
    if (old.lo, old.hi, old.log_scale) == (new.lo, new.hi, new.log_scale):
        return None
    if old.log_scale != new.log_scale:
        return DiffEntry(path, "values-changed",
                         {"range": [old.lo, old.hi], "log_scale": old.log_scale},
                         {"range": [new.lo, new.hi], "log_scale": new.log_scale})
    if new.lo >= old.lo and new.hi <= old.hi:
        return DiffEntry(path, "range-narrowed", [old.lo, old.hi], [new.lo, new.hi])
    if new.lo <= old.lo and new.hi >= old.hi:
        return DiffEntry(path, "range-widened", [old.lo, old.hi], [new.lo, new.hi])
    return DiffEntry(path, "values-changed", [old.lo, old.hi], [new.lo, new.hi])


def _diff_node_maps(old: tuple[ParamNode, ...], new: tuple[ParamNode, ...],
                    prefix: str, out: list[DiffEntry]) -> None:
    old_map = {n.name: n for n in old}
    new_map = {n.name: n for n in new}
    for name, node in old_map.items():
        path = f"{prefix}{name}"
        if name not in new_map:
            out.append(DiffEntry(path, "removed", node_to_doc(node), None))
            continue
        other = new_map[name]
        if node.kind != other.kind:
            out.append(DiffEntry(path, "removed", node_to_doc(node), None))
            out.append(DiffEntry(path, "added", None, node_to_doc(other)))
            continue
        if node.kind == "choice":
            # dropped-branch removals go first so apply sees the branch intact;
            # values-changed then prunes any dropped (now empty) branch keys
            for value in node.values:
                if value not in other.values:
                    for child in node.branches.get(value, ()):
                        out.append(DiffEntry(f"{path}.{value}.{child.name}", "removed",
                                             node_to_doc(child), None))
            if node.values != other.values:
                out.append(DiffEntry(path, "values-changed", list(node.values), list(other.values)))
            for value in other.values:
                if value not in node.values:
                    for child in other.branches.get(value, ()):
                        out.append(DiffEntry(f"{path}.{value}.{child.name}", "added",
                                             None, node_to_doc(child)))
            for value in node.values:
                if value in other.values:
                    _diff_node_maps(node.branches.get(value, ()), other.branches.get(value, ()),
                                    f"{path}.{value}.", out)
        else:
            entry = _node_range_entry(path, node, other)
            if entry:
                out.append(entry)
            _diff_node_maps(node.children, other.children, f"{path}.", out)
    for name, node in new_map.items():
        if name not in old_map:
            out.append(DiffEntry(f"{prefix}{name}", "added", None, node_to_doc(node)))


def diff_spaces(old: SearchSpace, new: SearchSpace) -> SpaceDiff:
    """Minimal per-path change list; applying it to ``old`` reproduces ``new``."""
    out: list[DiffEntry] = []
    _diff_node_maps(old.roots, new.roots, "", out)
    return SpaceDiff(entries=tuple(out))


def _split_path(path: str) -> list[str]:
    return path.split(".")


def _apply_entry(nodes: tuple[ParamNode, ...], segments: list[str],
                 entry: DiffEntry) -> tuple[ParamNode, ...]:
    head, rest = segments[0], segments[1:]
    node_map = {n.name: n for n in nodes}

    if head in node_map:
        node = node_map[head]
        if not rest:
            return _apply_leaf(nodes, node, entry)
        if node.kind == "choice" and rest[0] in node.values:
            branch_key, branch_rest = rest[0], rest[1:]
            branch = node.branches.get(branch_key, ())
            if not branch_rest:
                raise SpaceValidationError("path ends on a branch key", entry.path)
            new_branch = _apply_entry(branch, branch_rest, entry)
            branches = dict(node.branches)
            if new_branch:
                branches[branch_key] = new_branch
            else:
                branches.pop(branch_key, None)
            return tuple(replace(node, branches=branches) if n is node else n for n in nodes)
        if node.kind == "int":
            new_children = _apply_entry(node.children, rest, entry)
            return tuple(replace(node, children=new_children) if n is node else n for n in nodes)
        raise SpaceValidationError("path descends through a leaf parameter", entry.path)

    if entry.kind == "added" and not rest:
        new_node = _parse_node(head, entry.new, entry.path)
        return nodes + (new_node,)
    raise SpaceValidationError("no parameter at path", entry.path)


def _apply_leaf(siblings: tuple[ParamNode, ...], node: ParamNode,
                entry: DiffEntry) -> tuple[ParamNode, ...]:
    if entry.kind == "removed":
        return tuple(n for n in siblings if n is not node)
    if entry.kind == "added":
        raise SpaceValidationError("parameter already exists", entry.path)
    if entry.kind in ("range-narrowed", "range-widened"):
        if node.kind == "choice":
            raise SpaceValidationError("range edit on a choice parameter", entry.path)
        lo, hi = entry.new
        lo = int(lo) if node.kind == "int" else float(lo)
        hi = int(hi) if node.kind == "int" else float(hi)
        return tuple(replace(node, lo=lo, hi=hi) if n is node else n for n in siblings)
    if entry.kind == "values-changed":
        if node.kind == "choice":
            values = tuple(_choice_value(v, entry.path) for v in entry.new)
            branches = {k: v for k, v in node.branches.items() if k in values}
            return tuple(replace(node, values=values, branches=branches)
                         if n is node else n for n in siblings)
        new = entry.new
        if isinstance(new, Mapping):
            lo, hi = new["range"]
            log_scale = bool(new.get("log_scale", node.log_scale))
        else:
            (lo, hi), log_scale = new, node.log_scale
        lo = int(lo) if node.kind == "int" else float(lo)
        hi = int(hi) if node.kind == "int" else float(hi)
        return tuple(replace(node, lo=lo, hi=hi, log_scale=log_scale)
                     if n is node else n for n in siblings)
    raise SpaceValidationError(f"unknown edit kind {entry.kind!r}", entry.path)


def apply_diff(space: SearchSpace, diff: SpaceDiff | list[DiffEntry] | list[dict]) -> tuple[ParamNode, ...]:
    """Apply edits to a copy of the space's node tree (the space is untouched)."""
    entries = diff.entries if isinstance(diff, SpaceDiff) else tuple(
        e if isinstance(e, DiffEntry) else DiffEntry(**e) for e in diff)
    roots = space.roots
    for entry in entries:
        roots = _apply_entry(roots, _split_path(entry.path), entry)
    return roots


def new_version(space: SearchSpace, edits: SpaceDiff | list[DiffEntry] | list[dict],
                note: str = "") -> SearchSpace:
    """Derive the next space version; the input space is never mutated."""
    entries = edits.entries if isinstance(edits, SpaceDiff) else tuple(
        e if isinstance(e, DiffEntry) else DiffEntry(**e) for e in edits)
    if not entries:
        raise SpaceValidationError("no-op edit", "<edits>")
    roots = apply_diff(space, list(entries))
    successor = SearchSpace(space_id=space.space_id, version=space.version + 1,
                            roots=roots, parent_version=space.version,
                            created_at=time.time(), note=note)
    validate_space(successor)
    return successor


class SpaceStore:
    """Append-only registry of space versions; writes serialized, reads lock-free."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._spaces: dict[str, dict[int, SearchSpace]] = {}

    def add(self, space: SearchSpace) -> SearchSpace:
        with self._lock:
            versions = self._spaces.setdefault(space.space_id, {})
            if space.version in versions:
                raise SpaceValidationError(
                    f"version {space.version} already exists for {space.space_id}", "<space>")
            versions[space.version] = space
        return space

    def create(self, document: str | Mapping[str, Any], space_id: str, note: str = "") -> SearchSpace:
        if isinstance(document, str):
            space = parse_space(document, space_id=space_id, note=note)
        else:
            space = space_from_doc(document, space_id=space_id, note=note)
        return self.add(space)

    def new_version(self, space_id: str, edits: Any, note: str = "",
                    base_version: int | None = None) -> SearchSpace:
        with self._lock:
            versions = self._spaces.get(space_id)
            if not versions:
                raise KeyError(space_id)
            base = versions[base_version if base_version is not None else max(versions)]
            successor = new_version(base, edits, note=note)
            versions[successor.version] = successor
        return successor

    def get(self, space_id: str, version: int | None = None) -> SearchSpace:
        versions = self._spaces.get(space_id)
        if not versions:
            raise KeyError(space_id)
        if version is None:
            return versions[max(versions)]
        if version not in versions:
            raise KeyError(f"{space_id}@{version}")
        return versions[version]

    def versions(self, space_id: str) -> list[int]:
        versions = self._spaces.get(space_id)
        if not versions:
            raise KeyError(space_id)
        return sorted(versions)

    def ids(self) -> list[str]:
        return sorted(self._spaces)

    def is_descendant(self, space_id: str, version: int, ancestor: int) -> bool:
        """True when ``ancestor`` is on the parent chain of ``version`` (or equal)."""
        try:
            current: int | None = version
            while current is not None:
                if current == ancestor:
                    return True
                current = self.get(space_id, current).parent_version
        except KeyError:
            return False
        return False
