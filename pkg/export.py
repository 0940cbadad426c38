import csv
import json
import re
import sys
from collections.abc import Iterable, Mapping, Sequence
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Literal, TextIO

from loguru import logger

from errors import ParseError
from models import LatticePoint
from spanning import WIRED, ForestSample, Vertex, WeightedGraph

OutputFormat = Literal["csv", "json"]

LATTICE_LABEL = re.compile(r"^-?\d+(,-?\d+)*$")


def format_value(value: Any) -> str:
    """Text form of a table cell; floats use repr so reruns are byte-identical."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, LatticePoint):
        return value.label()
    if isinstance(value, (tuple, list)):
        return ";".join(format_value(v) for v in value)
    if value is None:
        return ""
    return str(value)


def _json_value(value: Any) -> Any:
    if isinstance(value, LatticePoint):
        return value.label()
    if isinstance(value, (tuple, list)):
        return [_json_value(v) for v in value]
    if isinstance(value, Mapping):
        return {str(k): _json_value(v) for k, v in value.items()}
    if hasattr(value, "item"):
        return value.item()
    return value


def write_csv(
    stream: TextIO,
    parameters: Mapping[str, Any],
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
) -> None:
    """Parameter echo as `#key=value` lines, then the header, then the rows."""
    for key in sorted(parameters):
        stream.write(f"#{key}={format_value(parameters[key])}\n")
    writer = csv.writer(stream, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])


def write_json_lines(
    stream: TextIO,
    parameters: Mapping[str, Any],
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
) -> None:
    """A config record, then one record per row."""
    config = {"record": "config", **{k: _json_value(v) for k, v in parameters.items()}}
    stream.write(json.dumps(config, sort_keys=True) + "\n")
    for row in rows:
        record = {"record": "row"}
        record.update({name: _json_value(v) for name, v in zip(header, row)})
        stream.write(json.dumps(record, sort_keys=True) + "\n")


@contextmanager
def open_output(path: Path | None) -> Iterator[TextIO]:
    """The file at `path`, or stdout."""
    if path is None:
        yield sys.stdout
        return
    with open(path, "w", newline="", encoding="utf-8") as handle:
        yield handle


def write_table(
    path: Path | None,
    output: OutputFormat,
    parameters: Mapping[str, Any],
    header: Sequence[str],
    rows: Sequence[Sequence[Any]],
) -> None:
    writer = write_csv if output == "csv" else write_json_lines
    with open_output(path) as stream:
        writer(stream, parameters, header, rows)
    logger.info("Table written", path=str(path or "-"), output=output, rows=len(rows))


def vertex_label(vertex: Vertex) -> str:
    if isinstance(vertex, LatticePoint):
        return vertex.label()
    return str(vertex)


def parse_vertex(label: str) -> Vertex:
    if label == WIRED:
        return WIRED
    if LATTICE_LABEL.match(label):
        return LatticePoint(tuple(int(c) for c in label.split(",")))
    return label


def dump_graph(g: WeightedGraph, stream: TextIO) -> None:
    """Header `d n lambda boundary`, then `edge a b conductance tag` in tag order."""
    header = [g.d, g.n, g.lam, g.boundary]
    stream.write(" ".join("-" if v is None else format_value(v) for v in header) + "\n")
    for edge in g.edges:
        stream.write(
            f"edge {vertex_label(edge.a)} {vertex_label(edge.b)} "
            f"{edge.conductance!r} {edge.tag}\n"
        )


def _number(text: str, kind: type, line_number: int, name: str) -> int | float:
    try:
        return kind(text)
    except ValueError:
        raise ParseError(
            f"line {line_number}: {name} must be {kind.__name__}, got {text!r}",
            line=line_number,
        ) from None


def load_graph(stream: TextIO) -> WeightedGraph:
    lines = [
        line.strip() for line in stream if line.strip() and not line.startswith("#")
    ]
    if not lines:
        raise ParseError("graph file is empty")
    fields = lines[0].split()
    if len(fields) != 4:
        raise ParseError(f"graph header needs 4 fields, got {lines[0]!r}")
    d, n, lam = (
        None if text == "-" else _number(text, kind, 1, name)
        for text, kind, name in zip(fields, (int, int, float), ("d", "n", "lambda"))
    )
    boundary = None if fields[3] == "-" else fields[3]

    edges: list[tuple[Vertex, Vertex, float]] = []
    for line_number, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != 5 or parts[0] != "edge":
            raise ParseError(f"line {line_number}: expected `edge a b conductance tag`")
        if _number(parts[4], int, line_number, "tag") != len(edges):
            raise ParseError(f"line {line_number}: edge tags must be 0, 1, 2, …")
        conductance = _number(parts[3], float, line_number, "conductance")
        edges.append((parse_vertex(parts[1]), parse_vertex(parts[2]), conductance))

    vertices = {v for a, b, _ in edges for v in (a, b)}
    return WeightedGraph.from_edges(
        edges,
        root=WIRED if WIRED in vertices else None,
        d=d,
        n=n,
        lam=lam,
        boundary=boundary,
    )


def dump_forest(sample: ForestSample, stream: TextIO) -> None:
    """One line: the sorted tags of the chosen edges."""
    stream.write(" ".join(str(tag) for tag in sorted(sample.chosen_edges)) + "\n")
