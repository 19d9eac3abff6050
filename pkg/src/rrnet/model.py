"""The relational reasoning network: encoder, stacked intra/inter GCN units, decoder.

Shapes, with ``h`` the latent width:

* node encoders (one per modality): ``raw_t -> h -> h``
* edge encoders (one per edge-list role): ``raw_edge -> h -> h``
* intra unit: edge MLP on ``v_s (c) v_r (c) e`` (3h -> h -> h), node MLP on
  ``mean_incident(e) (c) v`` (2h -> h -> h)
* inter unit: kernel ``W`` (h x 2h) giving ``W (v_s (c) v_r)``, edge MLP on
  ``W(...) (c) e`` (2h -> h -> h), node MLP as above
* decoder: ``h -> h -> 1`` followed by a sigmoid

A linear layer applied to a concatenation is evaluated as a sum of
per-block products, and blocks that are gathered node rows are projected
before the gather. Both are exact rewrites; they keep the widest
intermediates at ``h`` columns on large inter graphs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, FormatError, ShapeError, StateError
from .graph import EdgeList, GraphBundle
from .tensor import (
    Tensor, add, bce_loss, concat_rows, gather_rows, matmul, relu, scale_rows,
    scatter_add, sigmoid, slice_cols, slice_rows, transpose,
)


@dataclass
class ModelConfig:
    hidden: int = 16
    n_intra_units: int = 1
    n_inter_units: int = 1
    encoder_hidden_layers: int = 1
    raw_dims: tuple[int, int] = (1, 1)

    def __post_init__(self):
        self.raw_dims = tuple(int(d) for d in self.raw_dims)
        if self.hidden <= 0:
            raise ConfigError(f"hidden width must be positive, got {self.hidden}")
        if self.n_intra_units < 0 or self.n_inter_units < 0:
            raise ConfigError("unit counts must be non-negative")
        if self.n_intra_units + self.n_inter_units < 1:
            raise ConfigError("the model needs at least one GCN unit")
        if self.encoder_hidden_layers < 0:
            raise ConfigError("encoder_hidden_layers must be non-negative")
        if len(self.raw_dims) != 2 or min(self.raw_dims) <= 0:
            raise ConfigError(f"raw_dims must be two positive widths, got {self.raw_dims}")

    def edge_raw_dims(self) -> dict[str, int]:
        d1, d2 = self.raw_dims
        return {"intra1": 2 * d1, "intra2": 2 * d2, "inter": d1 + d2}


@dataclass
class Gathered:
    """Rows ``index`` of ``source``; projected first, gathered second."""

    source: Tensor
    index: np.ndarray


Part = Union[Tensor, Gathered]


@dataclass
class Linear:
    weight: Tensor
    bias: Tensor

    @classmethod
    def init(cls, fan_in: int, fan_out: int, rng: np.random.Generator, name: str) -> "Linear":
        bound = 1.0 / np.sqrt(fan_in)
        w = Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)), requires_grad=True,
                   name=f"{name}.weight")
        b = Tensor(rng.uniform(-bound, bound, (1, fan_out)), requires_grad=True,
                   name=f"{name}.bias")
        return cls(w, b)

    def __call__(self, parts: Sequence[Part]) -> Tensor:
        widths = [p.source.cols if isinstance(p, Gathered) else p.cols for p in parts]
        if sum(widths) != self.weight.rows:
            raise ShapeError(f"{self.weight.name}: input width {sum(widths)} "
                             f"but layer expects {self.weight.rows}")
        out = None
        start = 0
        for p, w in zip(parts, widths):
            block = self.weight if len(parts) == 1 else slice_rows(self.weight, start, start + w)
            start += w
            if isinstance(p, Gathered):
                term = gather_rows(matmul(p.source, block), p.index)
            else:
                term = matmul(p, block)
            out = term if out is None else add(out, term)
        return add(out, self.bias)


@dataclass
class MLP:
    layers: list[Linear]

    @classmethod
    def init(cls, widths: Sequence[int], rng: np.random.Generator, name: str) -> "MLP":
        return cls([Linear.init(a, b, rng, f"{name}.{i}")
                    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))])

    def __call__(self, parts: Sequence[Part]) -> Tensor:
        x = self.layers[0](parts)
        for layer in self.layers[1:]:
            x = layer([relu(x)])
        return x

    def parameters(self) -> list[Tensor]:
        return [t for layer in self.layers for t in (layer.weight, layer.bias)]


@dataclass
class IntraUnit:
    edge: MLP
    node: MLP


@dataclass
class InterUnit:
    kernel: Tensor
    edge: MLP
    node: MLP


@dataclass
class ModelParams:
    config: ModelConfig
    encoders: dict[str, MLP]
    intra_units: list[IntraUnit]
    inter_units: list[InterUnit]
    decoder: MLP

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out: list[Tensor] = []
        for key in ("node1", "node2", "intra1", "intra2", "inter"):
            out += self.encoders[key].parameters()
        for u in self.intra_units:
            out += u.edge.parameters() + u.node.parameters()
        for u in self.inter_units:
            out += [u.kernel] + u.edge.parameters() + u.node.parameters()
        out += self.decoder.parameters()
        return [(t.name, t) for t in out]

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, t in self.named_parameters():
            if name not in state:
                raise FormatError(f"tensor {name!r} missing from checkpoint")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise FormatError(f"tensor {name!r}: checkpoint shape {arr.shape}, "
                                  f"model expects {t.data.shape}")
            t.data = arr.copy()


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation from a seeded generator."""
    rng = np.random.default_rng(seed)
    h = config.hidden

    def encoder(raw: int, name: str) -> MLP:
        return MLP.init([raw] + [h] * (config.encoder_hidden_layers + 1), rng, name)

    d1, d2 = config.raw_dims
    edge_dims = config.edge_raw_dims()
    encoders = {
        "node1": encoder(d1, "enc.node1"),
        "node2": encoder(d2, "enc.node2"),
        "intra1": encoder(edge_dims["intra1"], "enc.edge_intra1"),
        "intra2": encoder(edge_dims["intra2"], "enc.edge_intra2"),
        "inter": encoder(edge_dims["inter"], "enc.edge_inter"),
    }
    intra = [IntraUnit(MLP.init([3 * h, h, h], rng, f"intra{i}.edge"),
                       MLP.init([2 * h, h, h], rng, f"intra{i}.node"))
             for i in range(config.n_intra_units)]
    inter = []
    for i in range(config.n_inter_units):
        bound = 1.0 / np.sqrt(2 * h)
        kernel = Tensor(rng.uniform(-bound, bound, (h, 2 * h)), requires_grad=True,
                        name=f"inter{i}.kernel")
        inter.append(InterUnit(kernel, MLP.init([2 * h, h, h], rng, f"inter{i}.edge"),
                               MLP.init([2 * h, h, h], rng, f"inter{i}.node")))
    decoder = MLP.init([h, h, 1], rng, "decoder")
    return ModelParams(config, encoders, intra, inter, decoder)


def unit_schedule(n_intra: int, n_inter: int) -> list[tuple[str, int]]:
    """Alternate intra and inter units, appending the surplus of the larger kind."""
    if n_intra + n_inter < 1:
        raise ConfigError("the model needs at least one GCN unit")
    order = []
    for i in range(max(n_intra, n_inter)):
        if i < n_intra:
            order.append(("intra", i))
        if i < n_inter:
            order.append(("inter", i))
    return order


@dataclass
class Latent:
    """Node attributes (n x h) and per-role edge attributes (|E| x h, ``None`` if empty)."""

    nodes: Tensor
    edges: dict[str, Optional[Tensor]] = field(default_factory=dict)


def _node_order(bundle: GraphBundle) -> np.ndarray:
    nodes = bundle.nodes
    n1 = int((nodes.modality == 1).sum())
    local = nodes.local_index()
    return np.where(nodes.modality == 1, local, n1 + local)


def encode(bundle: GraphBundle, params: ModelParams) -> Latent:
    """Map raw node and edge attributes into the latent space.

    Edge lists without stored attributes are encoded as if their attributes
    were ``sender raw (c) receiver raw``.
    """
    cfg = params.config
    nodes = bundle.nodes
    for t in (1, 2):
        if t not in nodes.features:
            raise StateError(f"node attributes for modality {t} are not set")
        if nodes.features[t].shape[1] != cfg.raw_dims[t - 1]:
            raise ShapeError(f"modality {t} raw width {nodes.features[t].shape[1]} "
                             f"but model expects {cfg.raw_dims[t - 1]}")
    raw = {t: Tensor(nodes.features[t]) for t in (1, 2)}
    stacked = concat_rows(params.encoders["node1"]([raw[1]]), params.encoders["node2"]([raw[2]]))
    v = gather_rows(stacked, _node_order(bundle))

    local = nodes.local_index()
    edge_widths = cfg.edge_raw_dims()
    edges: dict[str, Optional[Tensor]] = {}
    for role in ("intra1", "intra2", "inter"):
        e = bundle.edges(role)
        if len(e) == 0:
            edges[role] = None
            continue
        enc = params.encoders[role]
        if e.attrs is not None:
            if e.attrs.shape[1] != edge_widths[role]:
                raise ShapeError(f"{role} edge attribute width {e.attrs.shape[1]} "
                                 f"but model expects {edge_widths[role]}")
            edges[role] = enc([Tensor(e.attrs)])
        else:
            ts, tr = int(nodes.modality[e.senders[0]]), int(nodes.modality[e.receivers[0]])
            edges[role] = enc([Gathered(raw[ts], local[e.senders]),
                               Gathered(raw[tr], local[e.receivers])])
    return Latent(v, edges)


def _incident_mean(v: Tensor, pairs: Sequence[tuple[Tensor, EdgeList]]) -> Tensor:
    """Per node, the mean attribute of all incident edges (zero row when isolated)."""
    n = v.rows
    acc = None
    deg = np.zeros(n)
    for attrs, e in pairs:
        if attrs is None or len(e) == 0:
            continue
        for ends in (e.senders, e.receivers):
            term = scatter_add(attrs, ends, n)
            acc = term if acc is None else add(acc, term)
            deg += np.bincount(ends, minlength=n)
    if acc is None:
        return Tensor(np.zeros((n, v.cols)))
    return scale_rows(acc, np.where(deg > 0, 1.0 / np.maximum(deg, 1.0), 0.0))


def intra_edge_layer(bundle: GraphBundle, latent: Latent, unit: IntraUnit) -> dict[str, Optional[Tensor]]:
    out = {}
    for role in ("intra1", "intra2"):
        e = bundle.edges(role)
        attrs = latent.edges.get(role)
        if attrs is None or len(e) == 0:
            out[role] = attrs
            continue
        out[role] = unit.edge([Gathered(latent.nodes, e.senders),
                               Gathered(latent.nodes, e.receivers), attrs])
    return out


def inter_edge_layer(bundle: GraphBundle, latent: Latent, unit: InterUnit) -> Optional[Tensor]:
    e = bundle.inter
    attrs = latent.edges.get("inter")
    if attrs is None or len(e) == 0:
        return attrs
    h = latent.nodes.cols
    if unit.kernel.shape != (h, 2 * h):
        raise ShapeError(f"kernel shape {unit.kernel.shape}, expected {(h, 2 * h)}")
    w_send = transpose(slice_cols(unit.kernel, 0, h))
    w_recv = transpose(slice_cols(unit.kernel, h, 2 * h))
    aggregated = add(gather_rows(matmul(latent.nodes, w_send), e.senders),
                     gather_rows(matmul(latent.nodes, w_recv), e.receivers))
    return unit.edge([aggregated, attrs])


def node_layer(latent: Latent, pairs: Sequence[tuple[Optional[Tensor], EdgeList]], node_mlp: MLP) -> Tensor:
    """``v <- node_mlp(mean of incident edge attrs (c) v)`` for every node."""
    agg = _incident_mean(latent.nodes, pairs)
    return node_mlp([agg, latent.nodes])


def forward(bundle: GraphBundle, params: ModelParams) -> Tensor:
    """Probabilities over the inter edges, one row per edge."""
    cfg = params.config
    latent = encode(bundle, params)
    for kind, i in unit_schedule(cfg.n_intra_units, cfg.n_inter_units):
        if kind == "intra":
            unit = params.intra_units[i]
            latent.edges.update(intra_edge_layer(bundle, latent, unit))
            latent.nodes = node_layer(latent, [(latent.edges["intra1"], bundle.intra1),
                                               (latent.edges["intra2"], bundle.intra2)], unit.node)
        else:
            unit = params.inter_units[i]
            latent.edges["inter"] = inter_edge_layer(bundle, latent, unit)
            latent.nodes = node_layer(latent, [(latent.edges["inter"], bundle.inter)], unit.node)
    e = latent.edges["inter"]
    if e is None:
        return Tensor(np.zeros((0, 1)))
    return sigmoid(params.decoder([e]))


def loss(p: Tensor, bundle: GraphBundle, reduction: str = "sum") -> Tensor:
    """Cross-entropy between ``p`` and the bundle's labels over the labeled inter edges."""
    if bundle.labels is None:
        raise StateError("bundle carries no labels")
    idx = bundle.labeled_edges()
    picked = p if idx.size == p.rows else gather_rows(p, idx)
    return bce_loss(picked, bundle.labels[idx].reshape(-1, 1), reduction=reduction)


# ---------------------------------------------------------------------------
# checkpoint file: named float64 tensors, little-endian
#
#   b"RRNETCKP"  u32 version  u32 count
#   count x (u16 name_len, name utf-8, u32 rows, u32 cols)
#   row-major float64 data for each tensor, in header order
# ---------------------------------------------------------------------------

MAGIC = b"RRNETCKP"
VERSION = 1


def write_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    header = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    body = []
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        if arr.ndim != 2:
            raise ShapeError(f"tensor {name!r} is not 2-D")
        raw = name.encode("utf-8")
        header.append(struct.pack("<H", len(raw)) + raw + struct.pack("<II", *arr.shape))
        body.append(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(b"".join(header + body))


def read_checkpoint(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    try:
        version, count = struct.unpack_from("<II", blob, 8)
        pos = 16
        table = []
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, pos)
            name = blob[pos + 2: pos + 2 + nlen].decode("utf-8")
            rows, cols = struct.unpack_from("<II", blob, pos + 2 + nlen)
            table.append((name, rows, cols))
            pos += 2 + nlen + 8
    except (struct.error, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: corrupt checkpoint header") from exc
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    out = {}
    for name, rows, cols in table:
        nbytes = rows * cols * 8
        if pos + nbytes > len(blob):
            raise FormatError(f"{path}: data for tensor {name!r} is truncated")
        arr = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols)
        if not np.all(np.isfinite(arr)):
            raise FormatError(f"{path}: tensor {name!r} holds non-finite values")
        out[name] = arr.astype(np.float64)
        pos += nbytes
    if pos != len(blob):
        raise FormatError(f"{path}: {len(blob) - pos} trailing bytes after last tensor")
    return out


def save_params(params: ModelParams, path) -> None:
    write_checkpoint(path, params.state_dict())


def load_params(path, config: ModelConfig) -> ModelParams:
    params = init_params(config, seed=0)
    params.load_state_dict(read_checkpoint(path))
    return params
