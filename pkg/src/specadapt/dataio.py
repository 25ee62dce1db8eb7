"""On-disk graph format, pair manifests, and the synthetic benchmark generator.

A graph directory holds:

    edges.tsv      one "u<TAB>v" pair per line, 0-indexed, undirected,
                   no self-loops, no duplicates in either orientation
    features.tsv   first line "n d", then n rows of d space-separated
                   decimals (17 significant digits, exact float64 round-trip)
    labels.tsv     optional; one "node<TAB>label" line per node
    meta.json      {"num_classes": C}

A pair manifest (pair.json) points at two such directories:
{"source": <path>, "target": <path>}, paths resolved relative to the
manifest's own directory.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import DomainPair, Graph

__all__ = [
    "GraphFormatError",
    "load_graph",
    "save_graph",
    "load_pair",
    "save_pair",
    "SbmDomainSpec",
    "SbmSpec",
    "default_sbm_spec",
    "generate_sbm_pair",
    "convert_citation_dump",
]


class GraphFormatError(ValueError):
    """Malformed on-disk graph data; messages carry file and line context."""


def _parse_int(token: str, where: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise GraphFormatError(f"{where}: expected an integer, got {token!r}") from None


def _load_features(path: Path) -> np.ndarray:
    try:
        lines = path.read_text().splitlines()
    except FileNotFoundError:
        raise GraphFormatError(f"{path}: missing features file") from None
    if not lines:
        raise GraphFormatError(f"{path}:1: empty features file")
    header = lines[0].split()
    if len(header) != 2:
        raise GraphFormatError(f"{path}:1: header must be 'n d', got {lines[0]!r}")
    n = _parse_int(header[0], f"{path}:1")
    d = _parse_int(header[1], f"{path}:1")
    if n < 1 or d < 1:
        raise GraphFormatError(f"{path}:1: n and d must be positive, got {n}, {d}")
    body = [line for line in lines[1:] if line.strip()]
    if len(body) != n:
        raise GraphFormatError(f"{path}: expected {n} feature rows, found {len(body)}")
    out = np.empty((n, d))
    for i, line in enumerate(body):
        parts = line.split()
        if len(parts) != d:
            raise GraphFormatError(f"{path}:{i + 2}: expected {d} values, got {len(parts)}")
        try:
            out[i] = [float(p) for p in parts]
        except ValueError:
            raise GraphFormatError(f"{path}:{i + 2}: non-numeric feature value") from None
    if not np.all(np.isfinite(out)):
        raise GraphFormatError(f"{path}: features contain non-finite values")
    return out


def _load_edges(path: Path, n: int) -> np.ndarray:
    try:
        lines = path.read_text().splitlines()
    except FileNotFoundError:
        raise GraphFormatError(f"{path}: missing edges file") from None
    adj = np.zeros((n, n))
    seen: set[tuple[int, int]] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise GraphFormatError(f"{path}:{lineno}: expected 'u<TAB>v', got {line!r}")
        u = _parse_int(parts[0], f"{path}:{lineno}")
        v = _parse_int(parts[1], f"{path}:{lineno}")
        if u == v:
            raise GraphFormatError(f"{path}:{lineno}: self-loop on node {u}")
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(f"{path}:{lineno}: edge ({u}, {v}) outside [0, {n})")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise GraphFormatError(f"{path}:{lineno}: duplicate edge ({u}, {v})")
        seen.add(key)
        adj[u, v] = 1.0
        adj[v, u] = 1.0
    return adj


def _load_labels(path: Path, n: int, num_classes: int) -> np.ndarray:
    lines = path.read_text().splitlines()
    labels = np.full(n, -1, dtype=np.int64)
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise GraphFormatError(f"{path}:{lineno}: expected 'node<TAB>label', got {line!r}")
        node = _parse_int(parts[0], f"{path}:{lineno}")
        label = _parse_int(parts[1], f"{path}:{lineno}")
        if not 0 <= node < n:
            raise GraphFormatError(f"{path}:{lineno}: node {node} outside [0, {n})")
        if labels[node] != -1:
            raise GraphFormatError(f"{path}:{lineno}: node {node} labeled twice")
        if not 0 <= label < num_classes:
            raise GraphFormatError(
                f"{path}:{lineno}: label {label} outside [0, {num_classes})"
            )
        labels[node] = label
    missing = np.flatnonzero(labels == -1)
    if missing.size:
        raise GraphFormatError(f"{path}: node {missing[0]} has no label")
    return labels


def _load_meta(path: Path) -> int:
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise GraphFormatError(f"{path}: missing meta file") from None
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict) or "num_classes" not in raw:
        raise GraphFormatError(f"{path}: meta must be an object with 'num_classes'")
    c = raw["num_classes"]
    if not isinstance(c, int) or c < 1:
        raise GraphFormatError(f"{path}: num_classes must be a positive integer, got {c!r}")
    return c


def load_graph(directory: str | Path) -> Graph:
    """Read one graph directory; labels are attached when labels.tsv exists."""
    directory = Path(directory)
    if not directory.is_dir():
        raise GraphFormatError(f"{directory}: not a directory")
    features = _load_features(directory / "features.tsv")
    num_classes = _load_meta(directory / "meta.json")
    adjacency = _load_edges(directory / "edges.tsv", features.shape[0])
    labels_path = directory / "labels.tsv"
    labels = None
    if labels_path.exists():
        labels = _load_labels(labels_path, features.shape[0], num_classes)
    try:
        return Graph(
            adjacency=adjacency,
            features=features,
            labels=labels,
            num_classes=num_classes,
        )
    except ValueError as exc:
        raise GraphFormatError(f"{directory}: {exc}") from None


def save_graph(directory: str | Path, g: Graph) -> Path:
    """Write a graph directory; round-trips exactly through load_graph.

    Only unweighted graphs serialize (the edge list carries no weights).
    """
    weights = np.unique(g.adjacency)
    if not np.all(np.isin(weights, (0.0, 1.0))):
        raise ValueError("only 0/1 adjacency matrices can be saved to this format")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows, cols = np.nonzero(np.triu(g.adjacency, k=1))
    edge_lines = [f"{u}\t{v}" for u, v in zip(rows.tolist(), cols.tolist())]
    (directory / "edges.tsv").write_text("\n".join(edge_lines) + ("\n" if edge_lines else ""))
    feat_lines = [f"{g.n} {g.feat_dim}"]
    for row in g.features:
        feat_lines.append(" ".join(f"{x:.17g}" for x in row))
    (directory / "features.tsv").write_text("\n".join(feat_lines) + "\n")
    (directory / "meta.json").write_text(json.dumps({"num_classes": g.num_classes}) + "\n")
    if g.labels is not None:
        label_lines = [f"{i}\t{int(y)}" for i, y in enumerate(g.labels)]
        (directory / "labels.tsv").write_text("\n".join(label_lines) + "\n")
    return directory


def load_pair(manifest: str | Path) -> DomainPair:
    """Read a pair manifest and both graph directories."""
    manifest = Path(manifest)
    try:
        raw = json.loads(manifest.read_text())
    except FileNotFoundError:
        raise GraphFormatError(f"{manifest}: missing manifest") from None
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{manifest}: invalid JSON ({exc})") from None
    for key in ("source", "target"):
        if not isinstance(raw, dict) or key not in raw:
            raise GraphFormatError(f"{manifest}: manifest must name a {key!r} directory")
    base = manifest.parent
    source = load_graph(base / raw["source"])
    target = load_graph(base / raw["target"])
    try:
        return DomainPair(source=source, target=target)
    except ValueError as exc:
        raise GraphFormatError(f"{manifest}: {exc}") from None


def save_pair(directory: str | Path, pair: DomainPair) -> Path:
    """Write source/ and target/ graph directories plus pair.json; returns
    the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_graph(directory / "source", pair.source)
    save_graph(directory / "target", pair.target)
    manifest = directory / "pair.json"
    manifest.write_text(json.dumps({"source": "source", "target": "target"}, indent=2) + "\n")
    return manifest


@dataclass(frozen=True)
class SbmDomainSpec:
    """Stochastic block model parameters for one domain."""

    nodes: int
    proportions: tuple[float, ...]
    p_in: float
    p_out: float

    def __post_init__(self):
        if self.nodes < 1:
            raise ValueError(f"nodes must be >= 1, got {self.nodes}")
        if not self.proportions or any(p <= 0.0 for p in self.proportions):
            raise ValueError("class proportions must all be positive")
        if abs(sum(self.proportions) - 1.0) > 1e-9:
            raise ValueError(f"class proportions must sum to 1, got {sum(self.proportions)}")
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ValueError(
                f"need 0 <= p_out <= p_in <= 1, got p_in={self.p_in}, p_out={self.p_out}"
            )


@dataclass(frozen=True)
class SbmSpec:
    """A pair of block models over a shared feature and label space.

    Both domains draw node features as class mean plus Gaussian noise; the
    target's class means are additionally displaced by shift along a fixed
    unit direction per class.
    """

    source: SbmDomainSpec
    target: SbmDomainSpec
    feat_dim: int = 16
    class_mean_scale: float = 1.0
    shift: float = 1.0
    noise: float = 0.5

    def __post_init__(self):
        if len(self.source.proportions) != len(self.target.proportions):
            raise ValueError("domains must share the class count")
        if self.feat_dim < 1:
            raise ValueError(f"feat_dim must be >= 1, got {self.feat_dim}")
        if self.shift < 0.0 or self.noise < 0.0 or self.class_mean_scale < 0.0:
            raise ValueError("shift, noise, and class_mean_scale must be >= 0")

    @property
    def num_classes(self) -> int:
        return len(self.source.proportions)


_DEFAULT_PROPORTIONS = (0.45, 0.35, 0.20)


def default_sbm_spec() -> SbmSpec:
    """The desk-scale benchmark pair: 200 + 200 nodes, 3 classes, a denser
    source graph, and a unit class-mean shift in the target features."""
    return SbmSpec(
        source=SbmDomainSpec(nodes=200, proportions=_DEFAULT_PROPORTIONS, p_in=0.10, p_out=0.01),
        target=SbmDomainSpec(nodes=200, proportions=_DEFAULT_PROPORTIONS, p_in=0.06, p_out=0.02),
        feat_dim=16,
        class_mean_scale=0.15,
        shift=1.0,
        noise=0.5,
    )


def _class_counts(spec: SbmDomainSpec) -> np.ndarray:
    counts = np.floor(np.asarray(spec.proportions) * spec.nodes).astype(np.int64)
    counts[-1] += spec.nodes - counts.sum()
    if np.any(counts < 1):
        raise ValueError(
            f"degenerate block model: a class would get {counts.min()} nodes "
            f"(n={spec.nodes}, proportions={spec.proportions})"
        )
    return counts


def _sample_domain(
    spec: SbmDomainSpec,
    means: np.ndarray,
    noise: float,
    rng: np.random.Generator,
) -> Graph:
    n = spec.nodes
    num_classes, feat_dim = means.shape
    labels = rng.permutation(np.repeat(np.arange(num_classes), _class_counts(spec)))
    same = labels[:, None] == labels[None, :]
    probs = np.where(same, spec.p_in, spec.p_out)
    draws = rng.random((n, n))
    upper = np.triu(draws < probs, k=1)
    adjacency = (upper | upper.T).astype(np.float64)
    features = means[labels] + noise * rng.standard_normal((n, feat_dim))
    return Graph(adjacency=adjacency, features=features, labels=labels, num_classes=num_classes)


def generate_sbm_pair(spec: SbmSpec, seed: int) -> DomainPair:
    """Deterministic synthetic domain pair; both graphs come back labeled
    (target labels are for evaluation only)."""
    rng = np.random.default_rng(seed)
    c, d = spec.num_classes, spec.feat_dim
    means = spec.class_mean_scale * rng.standard_normal((c, d))
    directions = rng.standard_normal((c, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    source = _sample_domain(spec.source, means, spec.noise, rng)
    target = _sample_domain(spec.target, means + spec.shift * directions, spec.noise, rng)
    return DomainPair(source=source, target=target)


def convert_citation_dump(dump_dir: str | Path, out_dir: str | Path) -> None:
    """Stub for mapping a citation-network dump into the on-disk format.

    Expected mapping once real dumps are available:
      * one line per paper with an integer id -> contiguous node ids in
        first-seen order
      * citation links (citing, cited) -> undirected rows of edges.tsv,
        deduplicated, self-citations dropped
      * bag-of-words/abstract vectors -> features.tsv ("n d" header, space
        separated decimals)
      * venue or field-of-study tags -> labels.tsv plus num_classes in
        meta.json

    Shipping the dumps themselves is out of scope, so this remains
    unimplemented on purpose.
    """
    raise NotImplementedError(
        "citation-dump conversion is documented but not implemented; "
        "supply graphs in the directory format instead"
    )
