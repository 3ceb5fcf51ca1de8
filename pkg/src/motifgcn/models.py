"""Graph convolutional classifiers: ChebNet, MotifNet-d and MotifNet-m.

Every model is two graph convolution layers (ReLU) followed by a fully
connected layer and a softmax cross-entropy head. The families differ only
in the polynomial filter used inside the convolution layers:

* ``chebnet``: Chebyshev (or monomial) polynomial of one symmetric operator.
* ``motifnet_d``: full non-commutative polynomial in the incoming and
  outgoing edge operators, one coefficient matrix per word.
* ``motifnet_m``: recursive polynomial over a motif set with softmax
  attention over motifs at every step.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from motifgcn.autodiff import Node, Param, Tape
from motifgcn.filters import DEFAULT_WORD_BUDGET, WordBudgetError, coefficient_count, words
from motifgcn.graph import DirectedGraph
from motifgcn.motifs import MotifId, motif_adjacencies
from motifgcn.spectral import DENSE_CAP, RescaledLaplacian, estimate_lambda_max, normalized_laplacian, rescale

FAMILIES = ("chebnet", "motifnet_m", "motifnet_d")


class ModelSpecError(ValueError):
    pass


@dataclass
class ModelSpec:
    family: str
    order: int
    motifs: list[str] = field(default_factory=lambda: ["U"])
    widths: tuple[int, int, int, int] = (130, 128, 128, 70)
    attention: str = "per_channel"
    keep_prob: float = 0.5
    seed: int = 0
    basis: str = "chebyshev"
    word_budget: int = DEFAULT_WORD_BUDGET

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self.motifs = [MotifId.parse(m).value for m in self.motifs]
        if self.family not in FAMILIES:
            raise ModelSpecError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.order < 0:
            raise ModelSpecError("order must be >= 0")
        if len(self.widths) != 4 or min(self.widths) < 1:
            raise ModelSpecError(f"widths must be four positive ints, got {self.widths}")
        if self.attention not in ("per_channel", "per_layer"):
            raise ModelSpecError(f"attention must be 'per_channel' or 'per_layer', got {self.attention!r}")
        if self.basis not in ("chebyshev", "monomial"):
            raise ModelSpecError(f"basis must be 'chebyshev' or 'monomial', got {self.basis!r}")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ModelSpecError("keep_prob must be in (0, 1]")
        if self.family == "motifnet_d" and sorted(self.motifs) != ["Min", "Mout"]:
            raise ModelSpecError("motifnet_d uses exactly the motifs Min and Mout")
        if self.family == "chebnet":
            if len(self.motifs) != 1 or MotifId.parse(self.motifs[0]).is_directional:
                raise ModelSpecError("chebnet needs a single symmetric operator")
        if self.family == "motifnet_m" and len(self.motifs) < 1:
            raise ModelSpecError("motifnet_m needs at least one motif")
        if len(set(self.motifs)) != len(self.motifs):
            raise ModelSpecError("duplicate motifs in motif set")
        if self.family == "motifnet_d":
            # Min first so word letter 0 is the incoming-edge operator
            self.motifs = ["Min", "Mout"]
            if coefficient_count(2, self.order) > self.word_budget:
                raise WordBudgetError(
                    f"motifnet_d of order {self.order} needs {coefficient_count(2, self.order)} words"
                )

    @property
    def motif_ids(self) -> list[MotifId]:
        return [MotifId.parse(m) for m in self.motifs]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ModelSpec:
        return cls(**d)


def prepare_operators(
    g: DirectedGraph,
    motifs: Sequence[str | MotifId],
    lambda_policy: str = "bound",
    seed: int = 0,
) -> dict[MotifId, RescaledLaplacian]:
    """Rescaled Laplacian for each motif.

    ``lambda_policy``: ``"bound"`` rescales symmetric Laplacians with 2.0;
    ``"exact"`` estimates lambda_max by power iteration when n is within the
    dense cap. Directional operators always use the power-iteration estimate
    of their symmetric part.
    """
    if lambda_policy not in ("bound", "exact"):
        raise ValueError(f"lambda_policy must be 'bound' or 'exact', got {lambda_policy!r}")
    adjs = motif_adjacencies(g, motifs)
    out = {}
    for m, adj in adjs.items():
        lap = normalized_laplacian(adj)
        if lap.symmetric and (lambda_policy == "bound" or lap.n > DENSE_CAP):
            lam = 2.0
        else:
            lam = estimate_lambda_max(lap, seed=seed)
            if lam <= 0:
                lam = 2.0
        out[m] = rescale(lap, lam)
    return out


def glorot(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def conv_term_count(spec: ModelSpec) -> int:
    if spec.family == "motifnet_d":
        return coefficient_count(2, spec.order)
    return spec.order + 1


def conv_layer_params(spec: ModelSpec, q_in: int, q_out: int) -> int:
    n = conv_term_count(spec) * q_in * q_out + q_out
    if spec.family == "motifnet_m":
        att = len(spec.motifs) * spec.order
        n += att * q_out if spec.attention == "per_channel" else att
    return n


def count_parameters(spec: ModelSpec) -> int:
    """Trainable scalars in the model described by ``spec``."""
    q0, q1, q2, c = spec.widths
    return conv_layer_params(spec, q0, q1) + conv_layer_params(spec, q1, q2) + q2 * c + c


class GraphConvModel:
    """Parameters plus a forward pass recorded on a ``Tape``."""

    def __init__(self, spec: ModelSpec, operators: dict[MotifId, RescaledLaplacian] | Sequence[RescaledLaplacian]):
        self.spec = spec
        if isinstance(operators, dict):
            missing = [m for m in spec.motif_ids if m not in operators]
            if missing:
                raise ModelSpecError(f"operators missing for motifs {[str(m) for m in missing]}")
            self.operators = [operators[m] for m in spec.motif_ids]
        else:
            self.operators = list(operators)
            if len(self.operators) != len(spec.motifs):
                raise ModelSpecError(f"expected {len(spec.motifs)} operators, got {len(self.operators)}")
        sizes = {op.n for op in self.operators}
        if len(sizes) != 1:
            raise ModelSpecError("operators have different sizes")
        self.n = sizes.pop()
        self.params: dict[str, Param] = {}
        rng = np.random.default_rng(spec.seed)
        q0, q1, q2, c = spec.widths
        for layer, (qi, qo) in enumerate(((q0, q1), (q1, q2)), start=1):
            for t in range(conv_term_count(spec)):
                self._add(f"conv{layer}.theta{t}", glorot(rng, (qi, qo)))
            self._add(f"conv{layer}.bias", np.zeros((1, qo)), decay=False)
            if spec.family == "motifnet_m":
                rows = qo if spec.attention == "per_channel" else 1
                for j in range(1, spec.order + 1):
                    self._add(f"conv{layer}.att{j}", np.zeros((rows, len(spec.motifs))), decay=False)
        self._add("fc.weight", glorot(rng, (q2, c)))
        self._add("fc.bias", np.zeros((1, c)), decay=False)

    def _add(self, name, value, decay=True):
        self.params[name] = Param(name, value, decay=decay)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def _conv(self, tape: Tape, x: Node, layer: int) -> Node:
        spec = self.spec
        pre = f"conv{layer}"
        thetas = [tape.param(self.params[f"{pre}.theta{t}"]) for t in range(conv_term_count(spec))]
        ops = self.operators
        if spec.family == "chebnet":
            op = ops[0]
            terms = [x]
            for j in range(1, spec.order + 1):
                z = tape.const_spmv(op, terms[-1])
                if spec.basis == "chebyshev" and j >= 2:
                    z = tape.add(tape.scale(z, 2.0), tape.scale(terms[-2], -1.0))
                terms.append(z)
            out = self._mix(tape, terms, thetas)
        elif spec.family == "motifnet_d":
            cache = {(): x}
            for w in words(2, spec.order)[1:]:
                cache[w] = tape.const_spmv(ops[w[0]], cache[w[1:]])
            out = self._mix(tape, [cache[w] for w in words(2, spec.order)], thetas)
        else:
            out = self._recursive(tape, x, thetas, layer)
        return tape.add(out, tape.param(self.params[f"{pre}.bias"]))

    @staticmethod
    def _mix(tape: Tape, terms, thetas) -> Node:
        out = tape.matmul(terms[0], thetas[0])
        for z, th in zip(terms[1:], thetas[1:]):
            out = tape.add(out, tape.matmul(z, th))
        return out

    def _recursive(self, tape: Tape, x: Node, thetas, layer: int) -> Node:
        spec = self.spec
        q_in = x.shape[1]
        per_channel = spec.attention == "per_channel"
        q_out = thetas[0].shape[1]
        out = tape.matmul(x, thetas[0])
        g = tape.tile_cols(x, q_out) if per_channel else x
        for j in range(1, spec.order + 1):
            alpha = tape.softmax_rows(tape.param(self.params[f"conv{layer}.att{j}"]))
            if per_channel:
                alpha = tape.repeat_rows(alpha, q_in)
            g = tape.weighted_sum([tape.const_spmv(op, g) for op in self.operators], alpha)
            mixed = tape.blockwise_mix(g, thetas[j]) if per_channel else tape.matmul(g, thetas[j])
            out = tape.add(out, mixed)
        return out

    def forward(self, tape: Tape, features: np.ndarray) -> Node:
        """Logits node for all vertices."""
        keep = self.spec.keep_prob
        h = tape.const(features)
        for layer in (1, 2):
            h = tape.dropout(h, keep)
            h = tape.relu(self._conv(tape, h, layer))
        h = tape.dropout(h, keep)
        h = tape.matmul(h, tape.param(self.params["fc.weight"]))
        return tape.add(h, tape.param(self.params["fc.bias"]))

    def loss(self, tape: Tape, features, labels, mask) -> tuple[Node, Node]:
        logits = self.forward(tape, features)
        return tape.softmax_xent(logits, labels, mask), logits

    def predict(self, features) -> np.ndarray:
        tape = Tape(training=False)
        return self.forward(tape, features).value

    def attention(self) -> dict[str, np.ndarray]:
        """Effective attention weights per layer as ``(rows, K, p)`` arrays.

        ``rows`` is the number of output channels, or 1 when attention is
        shared across the layer.
        """
        if self.spec.family != "motifnet_m" or self.spec.order == 0:
            return {}
        out = {}
        for layer in (1, 2):
            steps = []
            for j in range(1, self.spec.order + 1):
                a = self.params[f"conv{layer}.att{j}"].value
                e = np.exp(a - a.max(axis=1, keepdims=True))
                steps.append(e / e.sum(axis=1, keepdims=True))
            out[f"conv{layer}"] = np.stack(steps, axis=2)
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            v = np.asarray(state[k], dtype=np.float64)
            if v.shape != p.value.shape:
                raise ModelSpecError(f"shape mismatch for {k}: {v.shape} vs {p.value.shape}")
            p.value = v.copy()


def build_model(spec: ModelSpec, operators) -> GraphConvModel:
    return GraphConvModel(spec, operators)
