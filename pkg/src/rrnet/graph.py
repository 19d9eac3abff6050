"""Attributed graphs: one shared node table, two intra edge lists, one inter edge list."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import BoundsError, FormatError, ShapeError, StateError

ROLES = ("intra1", "intra2", "inter")


@dataclass
class NodeTable:
    """Global node index space with a modality tag (1 or 2) per node.

    Raw attributes are kept per modality because the two modalities usually
    have different widths; ``features[t]`` holds one row per modality-``t``
    node, in ascending global-index order.
    """

    modality: np.ndarray
    features: dict[int, np.ndarray]

    def __post_init__(self):
        self.modality = np.asarray(self.modality, dtype=np.int8).reshape(-1)
        self.features = {t: np.asarray(f, dtype=np.float64) for t, f in self.features.items()}
        for t in (1, 2):
            count = int((self.modality == t).sum())
            f = self.features.get(t)
            if f is not None and (f.ndim != 2 or f.shape[0] != count):
                raise ShapeError(f"modality {t}: {count} nodes but features of shape {f.shape}")

    @classmethod
    def from_features(cls, f1: np.ndarray, f2: np.ndarray) -> "NodeTable":
        """Modality-1 nodes take indices ``[0, n1)``, modality-2 nodes ``[n1, n1+n2)``."""
        f1, f2 = np.asarray(f1, dtype=np.float64), np.asarray(f2, dtype=np.float64)
        tags = np.concatenate([np.ones(len(f1), np.int8), np.full(len(f2), 2, np.int8)])
        return cls(tags, {1: f1, 2: f2})

    @property
    def n(self) -> int:
        return int(self.modality.size)

    def nodes_of(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.modality == t)

    def local_index(self) -> np.ndarray:
        """Row of each node inside its modality's feature table."""
        local = np.empty(self.n, dtype=np.int64)
        for t in (1, 2):
            ids = self.nodes_of(t)
            local[ids] = np.arange(ids.size)
        return local

    def raw(self, node: int) -> np.ndarray:
        if not 0 <= node < self.n:
            raise BoundsError(f"node {node} out of range [0, {self.n})")
        t = int(self.modality[node])
        if t not in self.features:
            raise StateError(f"node attributes for modality {t} are not set")
        return self.features[t][self.local_index()[node]]

    def attrs(self) -> np.ndarray:
        """All raw attributes as one ``n x d`` array (only when both widths agree)."""
        local = self.local_index()
        widths = {f.shape[1] for f in self.features.values()}
        if len(widths) != 1:
            raise ShapeError(f"modalities have different widths {sorted(widths)}")
        out = np.empty((self.n, widths.pop()))
        for t, f in self.features.items():
            ids = self.nodes_of(t)
            out[ids] = f[local[ids]]
        return out


@dataclass
class EdgeList:
    senders: np.ndarray
    receivers: np.ndarray
    attrs: Optional[np.ndarray] = None

    def __post_init__(self):
        self.senders = np.asarray(self.senders, dtype=np.int64).reshape(-1)
        self.receivers = np.asarray(self.receivers, dtype=np.int64).reshape(-1)
        if self.senders.size != self.receivers.size:
            raise ShapeError(
                f"{self.senders.size} senders but {self.receivers.size} receivers")

    @classmethod
    def empty(cls) -> "EdgeList":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64))

    @classmethod
    def from_pairs(cls, pairs) -> "EdgeList":
        arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    def __len__(self) -> int:
        return int(self.senders.size)

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.senders.tolist(), self.receivers.tolist()))

    def shifted(self, sender_offset: int, receiver_offset: Optional[int] = None) -> "EdgeList":
        receiver_offset = sender_offset if receiver_offset is None else receiver_offset
        return EdgeList(self.senders + sender_offset, self.receivers + receiver_offset, self.attrs)


@dataclass
class GraphBundle:
    """Everything the model consumes.

    ``labels`` are targets in [0, 1] over the inter edges; ``label_mask``
    marks which of them enter the loss (``None`` means all of them).
    """

    nodes: NodeTable
    intra1: EdgeList = field(default_factory=EdgeList.empty)
    intra2: EdgeList = field(default_factory=EdgeList.empty)
    inter: EdgeList = field(default_factory=EdgeList.empty)
    labels: Optional[np.ndarray] = None
    label_mask: Optional[np.ndarray] = None

    def edges(self, role: str) -> EdgeList:
        if role not in ROLES:
            raise KeyError(f"unknown edge-list role {role!r}; expected one of {ROLES}")
        return getattr(self, role)

    def with_labels(self, labels, mask=None) -> "GraphBundle":
        labels = np.asarray(labels, dtype=np.float64).reshape(-1)
        mask = None if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
        return replace(self, labels=labels, label_mask=mask)

    def labeled_edges(self) -> np.ndarray:
        if self.labels is None:
            raise StateError("bundle carries no labels")
        if self.label_mask is None:
            return np.arange(len(self.inter))
        return np.flatnonzero(self.label_mask)


def init_edge_attrs(bundle: GraphBundle) -> GraphBundle:
    """Set every edge attribute to ``sender attrs (c) receiver attrs``."""
    nodes = bundle.nodes
    for t in (1, 2):
        if t not in nodes.features:
            raise StateError(f"node attributes for modality {t} are not set")
    local = nodes.local_index()

    def rows(ids: np.ndarray) -> np.ndarray:
        if ids.size == 0:
            return np.zeros((0, 0))
        tags = nodes.modality[ids]
        t = int(tags[0])
        if not np.all(tags == t):
            raise StateError("an endpoint column mixes modalities")
        return nodes.features[t][local[ids]]

    out = {}
    for role in ROLES:
        e = bundle.edges(role)
        if len(e) == 0:
            out[role] = EdgeList(e.senders, e.receivers, None)
        else:
            out[role] = EdgeList(e.senders, e.receivers,
                                 np.concatenate([rows(e.senders), rows(e.receivers)], axis=1))
    return replace(bundle, **out)


def incident_edges(bundle: GraphBundle, node: int, role: str) -> list[int]:
    """Indices of edges in ``role`` where ``node`` is sender or receiver, ascending."""
    if not 0 <= node < bundle.nodes.n:
        raise BoundsError(f"node {node} out of range [0, {bundle.nodes.n})")
    e = bundle.edges(role)
    return np.flatnonzero((e.senders == node) | (e.receivers == node)).tolist()


def degrees(bundle: GraphBundle, *roles: str) -> np.ndarray:
    """Number of incident edges per node, summed over ``roles``."""
    n = bundle.nodes.n
    deg = np.zeros(n, dtype=np.int64)
    for role in roles:
        e = bundle.edges(role)
        deg += np.bincount(e.senders, minlength=n) + np.bincount(e.receivers, minlength=n)
    return deg


@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


def validate(bundle: GraphBundle) -> list[Violation]:
    """Return every broken bundle invariant; an empty list means the bundle is well formed."""
    found: list[Violation] = []
    nodes = bundle.nodes
    n = nodes.n
    if not np.all(np.isin(nodes.modality, (1, 2))):
        found.append(Violation("modality-tag", "node modality tags must be 1 or 2"))
    expected = {"intra1": (1, 1), "intra2": (2, 2), "inter": (1, 2)}
    for role in ROLES:
        e = bundle.edges(role)
        if len(e) == 0:
            continue
        ids = np.concatenate([e.senders, e.receivers])
        if ids.min() < 0 or ids.max() >= n:
            found.append(Violation("index-range", f"{role}: edge endpoint outside [0, {n})"))
            continue
        loops = np.flatnonzero(e.senders == e.receivers)
        if loops.size:
            found.append(Violation("self-loop", f"{role}: edge {int(loops[0])} is a self-loop"))
        keys = e.senders * n + e.receivers
        uniq, counts = np.unique(keys, return_counts=True)
        if (counts > 1).any():
            k = int(uniq[np.argmax(counts > 1)])
            found.append(Violation("duplicate-edge", f"{role}: edge {k // n}->{k % n} repeated"))
        ms, mr = expected[role]
        bad = (nodes.modality[e.senders] != ms) | (nodes.modality[e.receivers] != mr)
        if bad.any():
            i = int(np.argmax(bad))
            code = "inter-modality" if role == "inter" else "intra-modality"
            found.append(Violation(
                code, f"{role}: edge {i} ({int(e.senders[i])}->{int(e.receivers[i])}) "
                      f"must go from modality {ms} to modality {mr}"))
        if e.attrs is not None and e.attrs.shape[0] != len(e):
            found.append(Violation("attr-shape", f"{role}: {e.attrs.shape[0]} attribute rows "
                                                 f"for {len(e)} edges"))
    if bundle.labels is not None:
        labels = bundle.labels
        if labels.size != len(bundle.inter):
            found.append(Violation("label-length", f"{labels.size} labels for "
                                                   f"{len(bundle.inter)} inter edges"))
        elif not np.all((labels >= 0) & (labels <= 1)):
            found.append(Violation("label-range", "labels must lie in [0, 1]"))
        if bundle.label_mask is not None and bundle.label_mask.size != labels.size:
            found.append(Violation("label-length", "label mask and labels differ in length"))
    return found


def write_edge_list(path, edges: EdgeList, role: str) -> None:
    if role not in ROLES:
        raise KeyError(f"unknown edge-list role {role!r}")
    lines = [f"# role: {role}"] + [f"{s}\t{r}" for s, r in edges.pairs()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path) -> tuple[str, EdgeList]:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# role:"):
        raise FormatError(f"{path}: first line must be '# role: <intra1|intra2|inter>'")
    role = text[0].split(":", 1)[1].strip()
    if role not in ROLES:
        raise FormatError(f"{path}: unknown role {role!r}")
    pairs = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected 'sender<TAB>receiver'")
        pairs.append((int(parts[0]), int(parts[1])))
    return role, (EdgeList.from_pairs(pairs) if pairs else EdgeList.empty())


def permute_nodes(bundle: GraphBundle, perm: np.ndarray) -> GraphBundle:
    """Relabel node ``i`` as ``perm[i]``; edge order and labels are unchanged."""
    perm = np.asarray(perm, dtype=np.int64)
    n = bundle.nodes.n
    if sorted(perm.tolist()) != list(range(n)):
        raise ShapeError("perm must be a permutation of range(n)")
    modality = np.empty(n, np.int8)
    modality[perm] = bundle.nodes.modality
    features = {}
    for t, f in bundle.nodes.features.items():
        old_ids = bundle.nodes.nodes_of(t)
        new_ids = perm[old_ids]
        # rows must follow ascending new global index
        features[t] = f[np.argsort(new_ids, kind="stable")]
    relabel = {role: EdgeList(perm[bundle.edges(role).senders], perm[bundle.edges(role).receivers],
                              bundle.edges(role).attrs) for role in ROLES}
    return GraphBundle(NodeTable(modality, features), relabel["intra1"], relabel["intra2"],
                       relabel["inter"], bundle.labels, bundle.label_mask)
