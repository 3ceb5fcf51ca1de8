"""Datasets: citation-graph ingestion, PCA, splits and synthetic generators.

Dataset directory layout::

    edges.tsv     src<TAB>dst[<TAB>weight]   (ids as in features.tsv)
    features.tsv  id<TAB>v1,v2,...
    labels.tsv    id<TAB>class
    splits.json   {"train": [...], "val": [...], "test": [...]}   (optional)
    idmap.tsv     index<TAB>raw id           (written on save / remap)
    labelmap.tsv  index<TAB>raw class        (written on save / remap)
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import breadth_first_order, connected_components

from motifgcn.graph import DirectedGraph, EdgeListError, iter_edge_lines, save_edge_list

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


@dataclass(eq=False)
class NodeDataset:
    graph: DirectedGraph
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    ids: list[str] | None = None
    classes: list[str] | None = None

    def __post_init__(self):
        n = self.graph.n
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.shape[0] != n or self.labels.shape != (n,):
            raise DatasetError(
                f"row counts disagree: graph n={n}, features {self.features.shape}, labels {self.labels.shape}"
            )
        if not np.all(np.isfinite(self.features)):
            raise DatasetError("features contain non-finite values")
        if n and self.labels.min() < 0:
            raise DatasetError("labels must be nonnegative")
        for name in ("train_mask", "val_mask", "test_mask"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=bool))
        if self.train_mask.shape != (n,) or self.val_mask.shape != (n,) or self.test_mask.shape != (n,):
            raise DatasetError("mask shape does not match vertex count")
        if np.any(self.train_mask & self.val_mask) or np.any(self.train_mask & self.test_mask) or np.any(
            self.val_mask & self.test_mask
        ):
            raise DatasetError("masks overlap")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def masks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.train_mask, self.val_mask, self.test_mask

    def with_features(self, features) -> NodeDataset:
        return NodeDataset(self.graph, features, self.labels, *self.masks, ids=self.ids, classes=self.classes)

    def with_masks(self, masks) -> NodeDataset:
        return NodeDataset(self.graph, self.features, self.labels, *masks, ids=self.ids, classes=self.classes)


def pca_reduce(features, target_dims: int) -> np.ndarray:
    """Project mean-centred rows onto the top ``target_dims`` principal axes.

    Each component is signed so that its largest-magnitude loading is
    positive.
    """
    x = np.asarray(features, dtype=np.float64)
    n, d = x.shape
    if not 1 <= target_dims <= min(n, d):
        raise ValueError(f"target_dims must be in [1, {min(n, d)}], got {target_dims}")
    xc = x - x.mean(axis=0)
    if d <= n:
        w, v = np.linalg.eigh(xc.T @ xc)
        comps = v[:, ::-1][:, :target_dims]
    else:
        # Gram trick: eigenvectors of X X^T map to principal axes through X^T
        w, u = np.linalg.eigh(xc @ xc.T)
        w, u = w[::-1][:target_dims], u[:, ::-1][:, :target_dims]
        comps = xc.T @ u
        comps /= np.maximum(np.linalg.norm(comps, axis=0), 1e-300)
    idx = np.argmax(np.abs(comps), axis=0)
    signs = np.sign(comps[idx, np.arange(target_dims)])
    signs[signs == 0] = 1.0
    return xc @ (comps * signs)


def _largest_remainder(total: int, weights: np.ndarray) -> np.ndarray:
    if weights.sum() == 0:
        return np.zeros(weights.size, dtype=np.int64)
    exact = total * weights / weights.sum()
    base = np.floor(exact).astype(np.int64)
    rem = total - base.sum()
    order = np.argsort(-(exact - base), kind="stable")
    base[order[:rem]] += 1
    return base


def make_splits(
    n: int,
    fractions=(0.1, 0.1, 0.1),
    seed: int = 0,
    labels=None,
    stratify: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint train/val/test masks of sizes ``floor(fraction * n)``.

    With labels and ``stratify`` each mask's quota is shared among classes in
    proportion to class size; a class that runs out of vertices is topped up
    from the remaining pool with a warning.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) < 0 or sum(fractions) > 1.0 + 1e-12:
        raise ValueError(f"fractions must be three nonnegative numbers summing to <= 1, got {fractions}")
    rng = np.random.default_rng(seed)
    sizes = [int(np.floor(f * n + 1e-9)) for f in fractions]
    masks = [np.zeros(n, dtype=bool) for _ in range(3)]
    if labels is None or not stratify:
        perm = rng.permutation(n)
        start = 0
        for m, s in zip(masks, sizes):
            m[perm[start : start + s]] = True
            start += s
        return tuple(masks)

    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)
    pools = {c: list(rng.permutation(np.flatnonzero(labels == c))) for c in classes}
    counts = np.array([len(pools[c]) for c in classes], dtype=np.float64)
    for m, s in zip(masks, sizes):
        quota = _largest_remainder(s, counts)
        short = 0
        for c, q in zip(classes, quota):
            take = min(int(q), len(pools[c]))
            short += int(q) - take
            for _ in range(take):
                m[pools[c].pop()] = True
        if short:
            warnings.warn(f"stratified split short by {short} vertices; filling unstratified", stacklevel=2)
            rest = np.array([i for c in classes for i in pools[c]], dtype=np.int64)
            pick = set(rng.choice(rest, size=short, replace=False).tolist())
            m[list(pick)] = True
            for c in classes:
                pools[c] = [i for i in pools[c] if i not in pick]
    return tuple(masks)


@dataclass
class SyntheticSpec:
    """Directed block model; ``block_probs[a][b]`` is P(edge u -> v) for u in a, v in b.

    Features are class means (unit-norm Gaussian directions scaled by
    ``signal``) plus isotropic noise of standard deviation ``noise``.
    """

    n: int = 1000
    blocks: int = 4
    block_probs: list[list[float]] | None = None
    feature_dim: int = 16
    signal: float = 1.0
    noise: float = 1.0
    seed: int = 0
    fractions: tuple[float, float, float] = (0.1, 0.1, 0.1)
    stratify: bool = True
    # used when block_probs is None
    pattern: str = "cycle"
    p_forward: float = 0.01
    p_within: float = 0.0
    directionality: float = 1.0

    def __post_init__(self):
        if self.block_probs is None:
            self.block_probs = directional_block_probs(
                self.blocks, self.p_forward, self.p_within, self.directionality, self.pattern
            )
        p = np.asarray(self.block_probs, dtype=np.float64)
        if p.shape != (self.blocks, self.blocks):
            raise ValueError(f"block_probs must be {self.blocks}x{self.blocks}")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("block probabilities must lie in [0, 1]")
        self.block_probs = p.tolist()
        self.fractions = tuple(self.fractions)

    def to_dict(self) -> dict:
        from dataclasses import asdict

        d = asdict(self)
        d["fractions"] = list(self.fractions)
        return d


def directional_block_probs(blocks: int, p_forward: float, p_within: float, strength: float, pattern: str = "cycle"):
    """Block probabilities where class identity lives in edge direction.

    ``cycle``: block a links to a+1 (mod blocks) with ``p_forward`` and back
    with ``p_forward * (1 - strength)``. With no within-block edges the
    undirected view cannot tell a block from the one two steps away.

    ``bipartite``: the first half of the blocks send edges to the second half;
    every vertex has the same expected total degree but sources have high
    out-degree and sinks high in-degree.
    """
    if not 0.0 <= strength <= 1.0:
        raise ValueError("strength must be in [0, 1]")
    p = np.full((blocks, blocks), 0.0)
    np.fill_diagonal(p, p_within)
    back = p_forward * (1.0 - strength)
    if pattern == "cycle":
        for a in range(blocks):
            b = (a + 1) % blocks
            p[a, b] += p_forward
            p[b, a] += back
    elif pattern == "bipartite":
        half = blocks // 2
        for a in range(half):
            for b in range(half, blocks):
                p[a, b] = p_forward
                p[b, a] = back
    else:
        raise ValueError(f"unknown pattern {pattern!r}")
    return p.tolist()


def _sample_block_edges(rng, blocks_of, members, probs):
    src, dst = [], []
    for a, ma in enumerate(members):
        for b, mb in enumerate(members):
            pr = probs[a][b]
            if pr <= 0 or ma.size == 0 or mb.size == 0:
                continue
            hit = rng.random((ma.size, mb.size)) < pr
            r, c = np.nonzero(hit)
            s, t = ma[r], mb[c]
            keep = s != t
            src.append(s[keep])
            dst.append(t[keep])
    if not src:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(src), np.concatenate(dst)


def generate_synthetic(spec: SyntheticSpec) -> NodeDataset:
    """Sample a directed block-model dataset; fully determined by ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    labels = np.arange(spec.n) % spec.blocks
    labels = labels[rng.permutation(spec.n)]
    members = [np.flatnonzero(labels == b) for b in range(spec.blocks)]
    src, dst = _sample_block_edges(rng, labels, members, spec.block_probs)
    g = DirectedGraph.from_edges(spec.n, src, dst)
    means = rng.standard_normal((spec.blocks, spec.feature_dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    feats = spec.signal * means[labels] + spec.noise * rng.standard_normal((spec.n, spec.feature_dim))
    masks = make_splits(spec.n, spec.fractions, seed=spec.seed + 1, labels=labels, stratify=spec.stratify)
    return NodeDataset(g, feats, labels, *masks)


def generate_planted_motif(
    n: int = 300,
    classes: int = 3,
    motif: str = "M7",
    instances: int = 300,
    noise_edges: int = 600,
    feature_dim: int = 8,
    signal: float = 1.0,
    noise: float = 1.5,
    seed: int = 0,
    fractions=(0.2, 0.2, 0.3),
) -> NodeDataset:
    """Random digraph with motif instances planted inside classes.

    ``instances`` same-class vertex triples receive the chosen triad pattern
    (with a random vertex relabelling); ``noise_edges`` further directed
    edges join uniformly random vertex pairs regardless of class.
    """
    from motifgcn.motifs import CATALOG, MotifId

    pattern = CATALOG[MotifId.parse(motif)]
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % classes
    labels = labels[rng.permutation(n)]
    members = [np.flatnonzero(labels == c) for c in range(classes)]
    pat_r, pat_c = np.nonzero(pattern)
    src, dst = [], []
    for _ in range(instances):
        c = rng.integers(classes)
        tri = rng.choice(members[c], size=3, replace=False)
        src.extend(tri[pat_r].tolist())
        dst.extend(tri[pat_c].tolist())
    s = rng.integers(0, n, size=noise_edges)
    t = (s + rng.integers(1, n, size=noise_edges)) % n
    src.extend(s.tolist())
    dst.extend(t.tolist())
    # collapse multi-edges to unit weight
    key = np.unique(np.array(src, dtype=np.int64) * n + np.array(dst, dtype=np.int64))
    g = DirectedGraph.from_edges(n, key // n, key % n)
    means = rng.standard_normal((classes, feature_dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    feats = signal * means[labels] + noise * rng.standard_normal((n, feature_dim))
    masks = make_splits(n, fractions, seed=seed + 1, labels=labels)
    return NodeDataset(g, feats, labels, *masks)


def _sort_key(s: str):
    try:
        return (0, int(s), s)
    except ValueError:
        return (1, 0, s)


def load_cora_format(dir_path) -> NodeDataset:
    """Load a dataset directory; vertex order follows ``features.tsv``.

    Raw vertex ids and class names are remapped to contiguous integers; the
    mappings are kept on the dataset (``ids``, ``classes``).
    """
    d = Path(dir_path)
    ids: list[str] = []
    rows: list[list[float]] = []
    with open(d / "features.tsv", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetError(f"features.tsv:{lineno}: expected 'id<TAB>v1,v2,...'")
            ids.append(parts[0].strip())
            try:
                rows.append([float(v) for v in parts[1].split(",")] if parts[1].strip() else [])
            except ValueError:
                raise DatasetError(f"features.tsv:{lineno}: non-numeric feature value") from None
    index = {rid: i for i, rid in enumerate(ids)}
    if len(index) != len(ids):
        raise DatasetError("features.tsv has duplicate ids")
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise DatasetError(f"features.tsv rows have different lengths {sorted(widths)}")
    n = len(ids)
    features = np.array(rows, dtype=np.float64).reshape(n, widths.pop() if widths else 0)

    raw_labels: dict[str, str] = {}
    with open(d / "labels.tsv", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetError(f"labels.tsv:{lineno}: expected 'id<TAB>class'")
            if parts[0] not in index:
                raise DatasetError(f"labels.tsv:{lineno}: unknown vertex id {parts[0]!r}")
            raw_labels[parts[0]] = parts[1].strip()
    missing = [rid for rid in ids if rid not in raw_labels]
    if missing:
        raise DatasetError(f"{len(missing)} vertices have no label (first: {missing[0]!r})")
    classes = sorted(set(raw_labels.values()), key=_sort_key)
    cls_index = {c: i for i, c in enumerate(classes)}
    labels = np.array([cls_index[raw_labels[rid]] for rid in ids], dtype=np.int64)

    src, dst, wts = [], [], []
    for lineno, s, t, w, _hdr in iter_edge_lines(d / "edges.tsv"):
        if not s:
            continue
        if s not in index or t not in index:
            bad = s if s not in index else t
            raise EdgeListError(d / "edges.tsv", lineno, f"unknown vertex id {bad!r}")
        src.append(index[s])
        dst.append(index[t])
        wts.append(1.0 if w is None else w)
    g = DirectedGraph.from_edges(n, src, dst, wts)

    masks = [np.zeros(n, dtype=bool) for _ in range(3)]
    split_path = d / "splits.json"
    if split_path.exists():
        sp = json.loads(split_path.read_text(encoding="utf-8"))
        for m, key in zip(masks, ("train", "val", "test")):
            for rid in sp.get(key, []):
                rid = str(rid)
                if rid not in index:
                    raise DatasetError(f"splits.json: unknown vertex id {rid!r}")
                m[index[rid]] = True
    return NodeDataset(g, features, labels, *masks, ids=ids, classes=classes)


def save_dataset(ds: NodeDataset, dir_path) -> None:
    """Write ``ds`` in the directory layout read by ``load_cora_format``."""
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    ids = ds.ids or [str(i) for i in range(ds.n)]
    classes = ds.classes or [str(c) for c in range(ds.num_classes)]
    r, c, w = ds.graph.edges()
    with open(d / "edges.tsv", "w", encoding="utf-8") as fh:
        for i, j, x in zip(r.tolist(), c.tolist(), w.tolist()):
            fh.write(f"{ids[i]}\t{ids[j]}\t{x!r}\n")
    with open(d / "features.tsv", "w", encoding="utf-8") as fh:
        for i, row in enumerate(ds.features.tolist()):
            fh.write(ids[i] + "\t" + ",".join(repr(v) for v in row) + "\n")
    with open(d / "labels.tsv", "w", encoding="utf-8") as fh:
        for i, y in enumerate(ds.labels.tolist()):
            fh.write(f"{ids[i]}\t{classes[y]}\n")
    splits = {k: [ids[i] for i in np.flatnonzero(m)] for k, m in zip(("train", "val", "test"), ds.masks)}
    (d / "splits.json").write_text(json.dumps(splits), encoding="utf-8")
    with open(d / "idmap.tsv", "w", encoding="utf-8") as fh:
        for i, rid in enumerate(ids):
            fh.write(f"{i}\t{rid}\n")
    with open(d / "labelmap.tsv", "w", encoding="utf-8") as fh:
        for i, cname in enumerate(classes):
            fh.write(f"{i}\t{cname}\n")


def largest_wcc(g: DirectedGraph) -> np.ndarray:
    """Vertex indices of the largest weakly connected component (sorted)."""
    _, comp = connected_components(g.adjacency.csr, directed=True, connection="weak")
    sizes = np.bincount(comp)
    return np.flatnonzero(comp == np.argmax(sizes))


def subsample(ds: NodeDataset, n: int | None = None, largest_component: bool = True, seed: int = 0) -> NodeDataset:
    """Keep the largest weakly connected component, then optionally the first
    ``n`` vertices reached by breadth-first search from a seeded start vertex.

    Masks are carried over restricted to the kept vertices.
    """
    keep = largest_wcc(ds.graph) if largest_component else np.arange(ds.n)
    if n is not None and n < keep.size:
        sub = ds.graph.induced_subgraph(keep)
        und = sub.adjacency.csr + sub.adjacency.csr.T
        start = int(np.random.default_rng(seed).integers(keep.size))
        order = breadth_first_order(und, start, directed=False, return_predecessors=False)
        keep = np.sort(keep[order[:n]])
    g = ds.graph.induced_subgraph(keep)
    ids = [ds.ids[i] for i in keep] if ds.ids else [str(i) for i in keep]
    return NodeDataset(
        g, ds.features[keep], ds.labels[keep],
        ds.train_mask[keep], ds.val_mask[keep], ds.test_mask[keep],
        ids=ids, classes=ds.classes,
    )
