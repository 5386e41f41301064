"""TSPLIB instance/tour parsing, serialization, and the bundled optima table."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .core import Instance, Tour, ValidationError

_SUPPORTED_TYPES = {"EUC_2D", "CEIL_2D", "ATT"}


class ParseError(ValueError):
    """Input text does not conform to the supported TSPLIB subset."""


@dataclass(frozen=True)
class OptimaTable:
    """Known optimal tour lengths keyed by instance name."""

    entries: dict[str, int]

    def get(self, name: str) -> int | None:
        return self.entries.get(name)


def _split_header(line: str) -> tuple[str, str]:
    if ":" in line:
        key, _, value = line.partition(":")
        return key.strip().upper(), value.strip()
    return line.strip().upper(), ""


def parse_instance(text: str) -> Instance:
    """Parse a TSPLIB ``.tsp`` file with NODE_COORD_SECTION into an Instance.

    Node ids are remapped to dense 0-based indices in file order; coordinates
    are read as reals. Raises ParseError naming the offending line on
    unsupported weight types, missing sections, or dimension mismatches.
    """
    name = ""
    dim: int | None = None
    weight_kind: str | None = None
    coords: list[tuple[float, float]] = []
    in_coords = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if in_coords:
            if line.upper() in ("EOF", "-1"):
                in_coords = False
                continue
            parts = line.split()
            if len(parts) < 3:
                # A header keyword ends the section; anything else is malformed.
                if _split_header(line)[0].isidentifier() or ":" in line:
                    in_coords = False
                else:
                    raise ParseError(f"line {lineno}: malformed coordinate line {line!r}")
                continue
            try:
                x, y = float(parts[-2]), float(parts[-1])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: bad coordinate in {line!r}") from exc
            coords.append((x, y))
            continue

        key, value = _split_header(line)
        if key == "NAME":
            name = value
        elif key == "DIMENSION":
            try:
                dim = int(value)
            except ValueError as exc:
                raise ParseError(f"line {lineno}: bad DIMENSION {value!r}") from exc
        elif key == "EDGE_WEIGHT_TYPE":
            weight_kind = value.upper()
            if weight_kind not in _SUPPORTED_TYPES:
                raise ParseError(f"line {lineno}: unsupported EDGE_WEIGHT_TYPE {value!r}")
        elif key == "NODE_COORD_SECTION":
            in_coords = True
        elif key == "EOF":
            break

    if weight_kind is None:
        raise ParseError("missing EDGE_WEIGHT_TYPE header")
    if not coords:
        raise ParseError("missing NODE_COORD_SECTION")
    if dim is None:
        raise ParseError("missing DIMENSION header")
    if dim != len(coords):
        raise ParseError(f"DIMENSION says {dim} nodes but NODE_COORD_SECTION has {len(coords)}")
    try:
        return Instance(name or "unnamed", np.asarray(coords, dtype=np.float64), weight_kind)
    except ValidationError as exc:
        raise ParseError(str(exc)) from exc


def serialize_instance(inst: Instance) -> str:
    """Emit the instance as a TSPLIB ``.tsp`` file (round-trips with parse_instance)."""
    lines = [
        f"NAME : {inst.name}",
        "TYPE : TSP",
        f"DIMENSION : {inst.n}",
        f"EDGE_WEIGHT_TYPE : {inst.weight_kind}",
        "NODE_COORD_SECTION",
    ]
    for i, (x, y) in enumerate(inst.coords, start=1):
        lines.append(f"{i} {float(x)!r} {float(y)!r}")
    lines.append("EOF")
    return "\n".join(lines) + "\n"


def read_tour(text: str, n: int | None = None) -> Tour:
    """Parse a TSPLIB ``.tour`` file (1-based ids, -1 terminator) into a Tour."""
    nodes: list[int] = []
    dim: int | None = None
    in_tour = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        upper = line.upper()
        if in_tour:
            if upper in ("-1", "EOF"):
                in_tour = False
                continue
            for token in line.split():
                if token == "-1":
                    in_tour = False
                    break
                try:
                    nodes.append(int(token))
                except ValueError as exc:
                    raise ParseError(f"line {lineno}: bad tour entry {token!r}") from exc
            continue
        key, value = _split_header(line)
        if key == "DIMENSION":
            dim = int(value)
        elif key == "TOUR_SECTION":
            in_tour = True
        elif key == "EOF":
            break

    if not nodes:
        raise ParseError("missing TOUR_SECTION or empty tour")
    if dim is not None and len(nodes) != dim:
        raise ParseError(f"DIMENSION says {dim} nodes but tour lists {len(nodes)}")
    if n is not None and len(nodes) != n:
        raise ParseError(f"expected a tour over {n} nodes, got {len(nodes)}")
    order = np.asarray(nodes, dtype=np.int64) - 1
    try:
        return Tour(order)
    except ValidationError as exc:
        raise ParseError(f"invalid tour: {exc}") from exc


def write_tour(tour: Tour, name: str = "tour") -> str:
    """Emit a Tour in TSPLIB ``.tour`` format (1-based, -1 terminated)."""
    lines = [
        f"NAME : {name}",
        "TYPE : TOUR",
        f"DIMENSION : {tour.n}",
        "TOUR_SECTION",
    ]
    lines.extend(str(int(v) + 1) for v in tour.order)
    lines.append("-1")
    lines.append("EOF")
    return "\n".join(lines) + "\n"


def load_optima(text: str) -> OptimaTable:
    """Parse ``name,length`` records into an OptimaTable.

    Blank lines and ``#`` comments are skipped; duplicate names with
    conflicting lengths are rejected.
    """
    entries: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2 or not parts[0]:
            raise ParseError(f"line {lineno}: expected 'name,length', got {line!r}")
        name = parts[0]
        try:
            length = int(parts[1])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: bad length {parts[1]!r}") from exc
        if length <= 0:
            raise ParseError(f"line {lineno}: optimum must be positive, got {length}")
        if name in entries and entries[name] != length:
            raise ParseError(f"line {lineno}: conflicting optimum for {name!r}")
        entries[name] = length
    return OptimaTable(entries)


def _data_text(filename: str) -> str:
    return resources.files("vitsp").joinpath("data", filename).read_text(encoding="utf-8")


def bundled_optima() -> OptimaTable:
    """The optima table shipped with the package."""
    return load_optima(_data_text("optima.csv"))


def bundled_instance(name: str) -> Instance:
    """A ``.tsp`` instance shipped with the package (e.g. ``berlin52``)."""
    return parse_instance(_data_text(f"{name}.tsp"))


def bundled_tour(name: str) -> Tour:
    """A ``.tour`` file shipped with the package (e.g. ``berlin52.opt``)."""
    return read_tour(_data_text(f"{name}.tour"))
