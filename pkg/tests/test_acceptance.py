"""Acceptance criteria, each run at its stated tolerance.

Every criterion prints one ``PASS``/``FAIL`` line (collected and repeated in
the terminal summary). Run standalone with ``python tests/test_acceptance.py``.
Criterion 9 needs user-supplied directed CORA files in ``$MOTIFGCN_CORA_DIR``.
"""

import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import brute_motif_matrices, brute_triads, random_digraph  # noqa: E402
from test_filters import dense_words, unrolled_recursive_coeffs  # noqa: E402
from test_models import end_to_end_grad_check, model_for, tiny_problem  # noqa: E402

from motifgcn.autodiff import Param, Tape, numeric_grad  # noqa: E402
from motifgcn.data import SyntheticSpec, generate_planted_motif, generate_synthetic, load_cora_format, pca_reduce  # noqa: E402
from motifgcn.filters import (  # noqa: E402
    attention_weights,
    chebyshev_apply,
    coefficient_count,
    motifnet_d_apply,
    multivar_apply,
    recursive_apply,
    words,
)
from motifgcn.graph import SparseMatrix  # noqa: E402
from motifgcn.models import ModelSpec, build_model, conv_term_count, count_parameters, prepare_operators  # noqa: E402
from motifgcn.motifs import TRIAD_MOTIFS, MotifId, TriadCensus, motif_adjacency  # noqa: E402
from motifgcn.spectral import (  # noqa: E402
    dense_eigendecomposition,
    estimate_lambda_max,
    normalized_laplacian,
    rescale,
    spectral_filter_oracle,
)
from motifgcn.training import TrainConfig, motif_selection, train  # noqa: E402

RESULTS: list[str] = []


def report(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"CRITERION {number} {'PASS' if ok else 'FAIL'}: {title} -- {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def motif_corpus(count=100, seed=2024):
    """Random digraphs with n in [3, 30] and edge density in [0.03, 0.6]; some weighted."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = int(rng.integers(3, 31))
        out.append(random_digraph(rng, n, float(rng.uniform(0.03, 0.6)), weighted=bool(i % 2)))
    return out


# ---- 1 & 2: motif counting and symmetry --------------------------------------

def test_criterion_1_motif_counts_match_brute_force():
    t0 = time.perf_counter()
    mismatches, pairs_checked = [], 0
    for gi, g in enumerate(motif_corpus()):
        dense = g.adjacency.toarray()
        truth = brute_triads(dense)
        census = TriadCensus(g)
        found = {(i, j, l): m for i, j, l, m in census}
        if found != truth:
            mismatches.append((gi, "enumeration"))
        for m in TRIAD_MOTIFS:
            counts, _ = brute_motif_matrices(dense, m, truth)
            got = census.adjacency(m).counts.toarray()
            pairs_checked += counts.size
            if not np.array_equal(got, counts):
                mismatches.append((gi, m.value))
    elapsed = time.perf_counter() - t0
    report(
        1, "motif counts equal exhaustive enumeration",
        not mismatches and elapsed < 30.0,
        f"100 graphs, {pairs_checked} pair counts over 13 motifs, mismatches={mismatches[:5]}, {elapsed:.1f}s (<30s)",
    )


def test_criterion_2_motif_adjacency_symmetric():
    asym = []
    checked = 0
    for gi, g in enumerate(motif_corpus()):
        for m in [*TRIAD_MOTIFS, MotifId.U]:
            a = motif_adjacency(g, m)
            for name, mat in (("matrix", a.matrix), ("counts", a.counts)):
                d = mat.toarray()
                checked += 1
                if not np.array_equal(d, d.T):
                    asym.append((gi, m.value, name))
    report(2, "motif adjacencies exactly symmetric", not asym, f"{checked} matrices, asymmetric={asym[:5]}")


# ---- 3: Chebyshev recurrence vs eigendecomposition ---------------------------

def test_criterion_3_chebyshev_matches_spectral_oracle():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst = 0.0
    motifs = [MotifId.U, MotifId.M2, MotifId.M5, MotifId.M7]
    for i in range(50):
        n = int(rng.integers(8, 65))
        p = int(rng.integers(0, 9))
        g = random_digraph(rng, n, float(rng.uniform(0.1, 0.4)), weighted=True)
        lap = normalized_laplacian(motif_adjacency(g, motifs[i % len(motifs)]))
        lam = 2.0 if i % 2 else estimate_lambda_max(lap, seed=i)
        dec = dense_eigendecomposition(lap)
        q_in, q_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        f = rng.standard_normal((n, q_in))
        c = rng.standard_normal((p + 1, q_in, q_out))
        out = chebyshev_apply(rescale(lap, lam), c, f)
        ref = spectral_filter_oracle(dec, c, f, lambda_max=lam)
        worst = max(worst, float(np.max(np.abs(out - ref)) / np.max(np.abs(ref))))
    elapsed = time.perf_counter() - t0
    report(
        3, "Chebyshev recurrence equals eigenbasis filtering",
        worst <= 1e-9 and elapsed < 60.0,
        f"50 instances n<=64 p<=8, max relative error {worst:.2e} (<=1e-9), {elapsed:.1f}s (<60s)",
    )


# ---- 4: polynomial-family algebra ---------------------------------------------

def test_criterion_4_polynomial_family_algebra():
    rng = np.random.default_rng(4)
    n = 10
    worst_a = worst_b = 0.0
    counts_ok = True
    for k in (1, 2, 3):
        for p in (1, 2, 3):
            ops = [0.3 * rng.standard_normal((n, n)) for _ in range(k)]
            f = rng.standard_normal((n, 2))
            theta = rng.standard_normal((p + 1, 2, 3))
            for alpha in (
                attention_weights(rng.standard_normal((k, p))),
                attention_weights(rng.standard_normal((k, p, 3))),
            ):
                rec = recursive_apply(ops, theta, alpha, f)
                unrolled = multivar_apply(ops, unrolled_recursive_coeffs(theta, alpha), f)
                worst_a = max(worst_a, float(np.max(np.abs(rec - unrolled))))
            # the closed-form sum, the enumerated words and the coefficient counter agree
            closed = sum(k**j for j in range(p + 1))
            counts_ok &= coefficient_count(k, p) == closed == len(words(k, p))
            if k == 2:
                c = rng.standard_normal((closed, 2, 3))
                two = motifnet_d_apply(ops[0], ops[1], c, f)
                worst_b = max(worst_b, float(np.max(np.abs(two - multivar_apply(ops, c, f)))),
                              float(np.max(np.abs(two - dense_words(ops, c, f)))))
    # the printed closed form (1 + K^{p+1}) / (1 - K) is negative for K >= 2
    printed = [(1 + k ** (p + 1)) / (1 - k) for k in (2, 3) for p in (1, 2, 3)]
    ok = worst_a <= 1e-10 and worst_b <= 1e-10 and counts_ok and all(v < 0 for v in printed)
    report(
        4, "recursive/two-operator/multivariate filters agree; coefficient count sum K^j",
        ok,
        f"unroll err {worst_a:.1e}, two-operator err {worst_b:.1e} (<=1e-10), counts={counts_ok}, "
        f"printed form gives negative counts {sorted(set(printed))[:3]}",
    )


# ---- 5: gradients ---------------------------------------------------------------

def _op_cases(r):
    """One (build, params) pair per tape operation."""
    p = lambda name, *shape: Param(name, r.standard_normal(shape))  # noqa: E731
    a, b, c = p("a", 4, 3), p("b", 3, 5), p("c", 1, 3)
    a2 = p("a2", 4, 3)
    rel = Param("rel", np.where(np.abs(x := r.standard_normal((5, 4))) < 0.05, 0.3, x))
    sp = SparseMatrix.from_dense(r.standard_normal((6, 6)) * (r.random((6, 6)) < 0.4))
    xv = p("x", 6, 2)
    xs = [p(f"x{i}", 4, 3) for i in range(3)]
    w1, w3 = p("w1", 1, 3), p("w3", 3, 3)
    gm, th = p("g", 5, 6), p("th", 2, 3)
    logits = p("logits", 6, 3)
    labels = np.array([0, 2, 1, 1, 0, 2])
    mask = np.array([1, 0, 1, 1, 0, 1], dtype=bool)

    def dropout(t):
        t.training, t.rng = True, np.random.default_rng(3)
        return t.dropout(t.param(a), 0.6)

    return {
        "matmul": (lambda t: t.matmul(t.param(a), t.param(b)), [a, b]),
        "add": (lambda t: t.add(t.add(t.param(a), t.param(a2)), t.param(c)), [a, a2, c]),
        "scale": (lambda t: t.scale(t.param(a), -2.5), [a]),
        "relu": (lambda t: t.relu(t.param(rel)), [rel]),
        "dropout": (dropout, [a]),
        "const_spmv": (lambda t: t.const_spmv(sp, t.param(xv)), [xv]),
        "softmax_rows": (lambda t: t.softmax_rows(t.param(logits)), [logits]),
        "softmax_xent": (lambda t: t.softmax_xent(t.param(logits), labels, mask), [logits]),
        "weighted_sum(scalar)": (lambda t: t.weighted_sum([t.param(x) for x in xs], t.param(w1)), [*xs, w1]),
        "weighted_sum(column)": (lambda t: t.weighted_sum([t.param(x) for x in xs], t.param(w3)), [*xs, w3]),
        "repeat_rows": (lambda t: t.repeat_rows(t.param(a), 3), [a]),
        "tile_cols": (lambda t: t.tile_cols(t.param(a), 4), [a]),
        "blockwise_mix": (lambda t: t.blockwise_mix(t.param(gm), t.param(th)), [gm, th]),
        "sum": (lambda t: t.sum(t.param(a)), [a]),
    }


def _op_grad_error(build, params, rng):
    """Largest err / (1e-5 * max(|analytic|, |numeric|) + 1e-9); <= 1 passes."""
    probe = {}

    def scalar(record=False):
        tape = Tape(training=False)
        out = build(tape)
        if out.shape != (1, 1):
            probe.setdefault("l", rng.standard_normal((1, out.shape[0])))
            probe.setdefault("r", rng.standard_normal((out.shape[1], 1)))
            out = tape.matmul(tape.const(probe["l"]), tape.matmul(out, tape.const(probe["r"])))
        if record:
            tape.backward(out, params)
        return float(out.value[0, 0])

    scalar(record=True)
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        numeric = numeric_grad(scalar, p)
        bound = 1e-5 * np.maximum(np.abs(analytic), np.abs(numeric)) + 1e-9
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / bound)))
    return worst


def test_criterion_5_gradients_match_finite_differences():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    op_ratios = {name: _op_grad_error(b, ps, rng) for name, (b, ps) in _op_cases(rng).items()}
    model_fail = []
    for family, motifs, attention in (
        ("chebnet", ["U"], "per_channel"),
        ("motifnet_d", ["Min", "Mout"], "per_channel"),
        ("motifnet_m", ["U", "Min", "Mout"], "per_channel"),
        ("motifnet_m", ["U", "Min", "Mout"], "per_layer"),
    ):
        g, x, y, mask = tiny_problem(seed=4, n=12)
        m = model_for(g, family, 2, motifs, attention=attention, keep_prob=0.8, seed=2)
        r = np.random.default_rng(0)
        for name, p in m.params.items():
            if ".att" in name or name.endswith("bias"):
                p.value = 0.3 * r.standard_normal(p.value.shape)
        try:
            end_to_end_grad_check(m, x, y, mask, rel=1e-5)
        except AssertionError as e:
            model_fail.append((family, attention, str(e)))
    elapsed = time.perf_counter() - t0
    worst_op = max(op_ratios, key=op_ratios.get)
    ok = max(op_ratios.values()) <= 1.0 and not model_fail and elapsed < 120.0
    report(
        5, "reverse-mode gradients equal central differences",
        ok,
        f"{len(op_ratios)} ops (worst {worst_op} at {op_ratios[worst_op]:.1e} of the 1e-5 bound), "
        f"3 families end-to-end n=12 failures={model_fail}, {elapsed:.1f}s (<120s)",
    )


# ---- 6: parameter growth versus the published table ----------------------------

TABLE_ORDERS = list(range(1, 9))
TABLE_CHEBNET = [94, 128, 162, 196, 229, 263, 297, 331]  # thousands
TABLE_MOTIFNET_M = [95, 131, 166, 202, 237, 272, 308, 343]
TABLE_MOTIFNET_D = [128, 263, 534, 1074, 2156, 4319, 8646, 17298]


def test_criterion_6_parameter_growth_patterns():
    widths = (130, 64, 64, 70)
    count = lambda fam, p, motifs: count_parameters(ModelSpec(fam, p, motifs, widths))  # noqa: E731
    cheb = [count("chebnet", p, ["U"]) for p in TABLE_ORDERS]
    mnm = [count("motifnet_m", p, ["U", "Min", "Mout"]) for p in TABLE_ORDERS]
    mnd = [count("motifnet_d", p, ["Min", "Mout"]) for p in TABLE_ORDERS]
    const_cheb = len(set(np.diff(cheb))) == 1
    const_m = len(set(np.diff(mnm))) == 1
    terms_ok = all(conv_term_count(ModelSpec("motifnet_d", p, ["Min", "Mout"], widths)) == 2 ** (p + 1) - 1
                   for p in TABLE_ORDERS)
    d_equiv = all(mnd[i] == count("chebnet", 2 ** (p + 1) - 2, ["U"]) for i, p in enumerate(TABLE_ORDERS))

    # the table itself: constant increments up to rounding to 1K ...
    table_arith = all(np.ptp(np.diff(col)) <= 1 for col in (TABLE_CHEBNET, TABLE_MOTIFNET_M))
    # ... and the two-operator column follows a chebnet of order 2^{p+1}-2 fitted on the chebnet column
    design = np.column_stack([np.ones(8), np.array(TABLE_ORDERS) + 1.0])
    fixed, inc = np.linalg.lstsq(design, np.array(TABLE_CHEBNET, float), rcond=None)[0]
    predicted = [fixed + (2 ** (p + 1) - 1) * inc for p in TABLE_ORDERS]
    rel = max(abs(a - b) / b for a, b in zip(predicted, TABLE_MOTIFNET_D))
    ok = const_cheb and const_m and terms_ok and d_equiv and table_arith and rel <= 0.01
    report(
        6, "parameter counts follow the published growth patterns",
        ok,
        f"chebnet step {cheb[1] - cheb[0]}, motifnet_m step {mnm[1] - mnm[0]}, motifnet_d terms 2^(p+1)-1={terms_ok}, "
        f"d(p)=chebnet(2^(p+1)-2)={d_equiv}; table fit: p=8 predicted {predicted[-1]:,.0f}K vs 17,298K, "
        f"max rel dev {rel:.2%} (<=1%)",
    )


# ---- 7: direction-carried signal --------------------------------------------------

DIRECTIONALITY_SPEC = dict(n=1000, blocks=4, pattern="cycle", p_forward=0.01, p_within=0.0, noise=1.0, feature_dim=16)


def _directionality_cell(args):
    family, seed = args
    motifs = ["U"] if family == "chebnet" else ["U", "Min", "Mout"]
    ds = generate_synthetic(SyntheticSpec(seed=seed, **DIRECTIONALITY_SPEC))
    model = build_model(ModelSpec(family, 2, motifs, (16, 16, 16, 4), seed=seed), prepare_operators(ds.graph, motifs))
    rep = train(model, ds.features, ds.labels, ds.masks,
                TrainConfig(lr=1e-2, max_epochs=300, patience=100, seed=seed))
    return family, seed, rep.test_accuracy


@pytest.mark.slow
def test_criterion_7_directionality_advantage():
    t0 = time.perf_counter()
    cells = [(f, s) for f in ("chebnet", "motifnet_m") for s in range(5)]
    with ProcessPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(_directionality_cell, cells))
    acc = {f: [a for ff, _, a in results if ff == f] for f in ("chebnet", "motifnet_m")}
    med = {f: float(np.median(v)) for f, v in acc.items()}
    elapsed = time.perf_counter() - t0
    ok = (med["motifnet_m"] >= med["chebnet"] + 0.05 and min(med.values()) >= 0.45 and elapsed < 600)
    report(
        7, "direction-aware model beats undirected baseline on directed block model",
        ok,
        f"median test acc motifnet_m {med['motifnet_m']:.3f} vs chebnet {med['chebnet']:.3f} "
        f"(need +0.05, both >=0.45); per seed {acc}; {elapsed:.0f}s (<600s)",
    )


# ---- 8: motif selection recall ------------------------------------------------------

def _selection_cell(seed):
    ds = generate_planted_motif(motif="M7", seed=seed)
    res = motif_selection(ds.graph, ds.features, ds.labels, ds.masks,
                          TrainConfig(lr=1e-2, max_epochs=200, patience=200, seed=seed), hidden=(16, 16), seed=seed)
    return res.ranking()[0]


@pytest.mark.slow
def test_criterion_8_motif_selection_recall():
    with ProcessPoolExecutor(max_workers=4) as pool:
        tops = list(pool.map(_selection_cell, range(5)))
    hits = sum(t == "M7" for t in tops)
    report(8, "attention ranks the planted motif first", hits >= 4, f"top motif per seed {tops}; {hits}/5 (need >=4)")


# ---- 9: optional, user-supplied citation data ------------------------------------------

@pytest.mark.cora
@pytest.mark.skipif(not os.environ.get("MOTIFGCN_CORA_DIR"), reason="set MOTIFGCN_CORA_DIR to run")
def test_criterion_9_cora_extended_check():
    ds = load_cora_format(os.environ["MOTIFGCN_CORA_DIR"])
    shape_ok = (ds.n, ds.num_features, ds.num_classes) == (19793, 8710, 70)
    from motifgcn.data import make_splits

    ds = ds.with_features(pca_reduce(ds.features, 130)).with_masks(make_splits(ds.n, (0.1, 0.1, 0.1), seed=0))
    acc = {}
    for family, motifs in (("chebnet", ["U"]), ("motifnet_m", ["U", "Min", "Mout"])):
        model = build_model(ModelSpec(family, 2, motifs, (130, 64, 64, ds.num_classes)),
                            prepare_operators(ds.graph, motifs))
        acc[family] = train(model, ds.features, ds.labels, ds.masks, TrainConfig()).test_accuracy
    report(9, "directed citation data", shape_ok and acc["motifnet_m"] >= acc["chebnet"],
           f"n,d,C ok={shape_ok}; test acc {acc}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-m", "slow or not slow"]))
