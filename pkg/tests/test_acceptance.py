"""One test per acceptance criterion. Each prints a PASS/FAIL line with the measured value."""

import itertools
import math
import time

import numpy as np

from tcgl import numcore as nc
from tcgl import oracles, stkd, tcg
from tcgl import synthvideo as sv
from tcgl.harness import checkpoint as ck
from tcgl.harness.ablation import format_table, run_ablation
from tcgl.harness.config import TrainConfig
from tcgl.harness.evaluate import DatasetSpec, probe_order_accuracy, retrieve
from tcgl.harness.train import pretrain
from tcgl.harness.verify import GRAD_EPS, objective_grad_error, objective_relu_margin, tiny_config, verify

CHANCE_ORDER = 1 / 6
CHANCE_CLASS = 1 / 8
PROBE_SIZE = 6000
# Shorter than the 200-epoch default to keep six runs affordable; training saturates well before this.
ABLATION_EPOCHS = 60
ABLATION_SEEDS = (0, 1, 2)


def test_spectral_identity(criterion):
    rng = np.random.default_rng(100)
    start = time.perf_counter()
    worst = 0.0
    for i in range(100):
        length = 2 + i % 7
        v = rng.uniform(0, 1, (int(rng.integers(1, 4)), length, int(rng.integers(2, 6)), int(rng.integers(2, 6))))
        lhs = stkd.dct_spectrum(v)[:, 1:].sum(axis=1)
        rhs = length * (v[:, 0] - v.mean(axis=1))
        worst = max(worst, np.abs(lhs - rhs).max())
        worst = max(worst, np.abs(lhs - length * stkd.stkd_residual(v).data[:, 0]).max())
    seconds = time.perf_counter() - start
    ok = worst < 1e-9 and seconds < 5
    assert criterion("spectral identity", ok, f"max err {worst:.2e} (<1e-9) in {seconds:.2f}s (<5s)")


def test_stkd_invariants(criterion):
    rng = np.random.default_rng(101)
    zero_mean = linear = idem = 0.0
    for _ in range(50):
        v1, v2 = rng.standard_normal((2, 2, int(rng.integers(1, 9)), 4, 4))
        a, b = rng.standard_normal(2)
        r1, r2 = stkd.stkd_residual(v1).data, stkd.stkd_residual(v2).data
        zero_mean = max(zero_mean, np.abs(r1.mean(axis=1)).max())
        linear = max(linear, np.abs(stkd.stkd_residual(a * v1 + b * v2).data - (a * r1 + b * r2)).max())
        idem = max(idem, np.abs(stkd.stkd_residual(r1).data - r1).max())
    ok = zero_mean < 1e-12 and linear < 1e-9 and idem < 1e-12
    assert criterion("stkd invariants", ok,
                     f"zero-mean {zero_mean:.1e} (<1e-12), linearity {linear:.1e} (<1e-9), "
                     f"idempotence {idem:.1e} (<1e-12)")


def test_gradient_suite(criterion):
    start = time.perf_counter()
    report = verify(suites=["numcore", "stkd", "encoder", "tcg", "asop"])
    grads = [c for c in report.checks if "grad" in c.name]
    worst = max(c.value for c in grads)
    # Full objective at several points; a point whose nearest relu kink lies within
    # one finite-difference step is not differentiable across the step and is skipped.
    valid = [s for s in range(10) if objective_relu_margin(tiny_config(), s) > GRAD_EPS]
    objective = max(objective_grad_error(tiny_config(), s) for s in valid)
    seconds = time.perf_counter() - start
    ops = {c.name.split("/", 1)[1] for c in grads if c.name.startswith("grad/")}
    ok = all(c.passed for c in grads) and len(valid) >= 5 and objective < 1e-4 and seconds < 60
    assert ops >= {"add", "sub", "mul", "matmul", "relu", "exp", "log", "mean", "reshape", "take", "concat",
                   "stack", "linear", "softmax_cross_entropy", "l2_normalize", "conv3d"}
    assert criterion("gradient suite", ok,
                     f"{len(grads)} checks, worst rel err {worst:.1e}, full objective {objective:.1e} (<1e-4) "
                     f"at {len(valid)} kink-free points "
                     f"in {seconds:.1f}s (<60s)")


def test_permutation_codec(criterion):
    start = time.perf_counter()
    ok = True
    for n in range(2, 6):
        perms = list(itertools.permutations(range(n)))
        ranks = [sv.encode_permutation(p) for p in perms]
        ok &= ranks == list(range(math.factorial(n)))
        ok &= all(sv.decode_class(r, n) == p for r, p in zip(ranks, perms))
    ok &= sv.encode_permutation((0, 1, 2)) == 0 and sv.encode_permutation((2, 1, 0)) == 5
    seconds = time.perf_counter() - start
    ok &= seconds < 1
    assert criterion("permutation codec", ok, f"n=2..5 bijective and lexicographic in {seconds:.3f}s (<1s)")


def test_contrastive_oracle(criterion):
    rng = np.random.default_rng(102)
    err = sym = 0.0
    for _ in range(50):
        n, f = int(rng.integers(1, 7)), int(rng.integers(2, 7))
        head = tcg.init_projection(rng, f)
        u, v = rng.standard_normal((2, n, f))
        j = tcg.graph_contrastive_loss(nc.Tensor(u), nc.Tensor(v), head).item()
        arrays = [p.data for p in (head.w1, head.b1, head.w2, head.b2)]
        ref = oracles.contrastive_loss(oracles.mlp_projection(u, *arrays), oracles.mlp_projection(v, *arrays),
                                       head.tau)
        err = max(err, abs(j - ref))
        sym = max(sym, abs(j - tcg.graph_contrastive_loss(nc.Tensor(v), nc.Tensor(u), head).item()))
    one = rng.standard_normal((2, 1, 5))
    single = tcg.graph_contrastive_loss(nc.Tensor(one[0]), nc.Tensor(one[1]), tcg.init_projection(rng, 5)).item()
    ok = err < 1e-10 and sym < 1e-12 and single == 0.0
    assert criterion("contrastive oracle", ok, f"oracle err {err:.1e} (<1e-10), symmetry {sym:.1e}, N=1 gives {single}")


def test_gcn_and_views(criterion):
    rng = np.random.default_rng(103)
    equi = 0.0
    for n in range(3, 9):
        for _ in range(5):
            upper = np.triu(rng.random((n, n)) < 0.5, k=1)
            a = (upper | upper.T).astype(float)
            x = rng.standard_normal((n, 6))
            params = tcg.init_gcn(rng, 6, 5)
            p = np.eye(n)[rng.permutation(n)]
            base = tcg.gcn_forward((x, a), params).data
            equi = max(equi, np.abs(tcg.gcn_forward((p @ x, p @ a @ p.T), params).data - p @ base).max())
    views_ok = True
    for n in range(2, 9):
        g = tcg.build_chain_graph(rng.standard_normal((n, 4)))
        for seed in range(20):
            v = tcg.generate_view(g, rng.random(), rng.random(), seed)
            views_ok &= bool((v.a <= g.a).all() and (v.a == v.a.T).all())
        same = tcg.generate_view(g, 0.0, 0.0, 0)
        views_ok &= np.array_equal(same.a, g.a) and np.array_equal(same.x.data, g.x.data)
    dropped, _ = tcg.corruption_masks(rng, tcg.chain_adjacency(2, (20_000,)), 1, 0.3, 0.0)
    survival = dropped[:, 0, 1].mean()
    ok = equi < 1e-9 and views_ok and abs(survival - 0.7) <= 0.01
    assert criterion("gcn equivariance and views", ok,
                     f"equivariance {equi:.1e} (<1e-9), views ok={views_ok}, survival {survival:.4f} (0.7+-0.01)")


def test_synthetic_learnability(criterion, default_run, static_run):
    _, log, seconds = default_run
    reached = [r.epoch for r in log.rows if r.val_acc > 0.9]
    static_ckpt = static_run[0]
    static_acc = probe_order_accuracy(static_ckpt, DatasetSpec(PROBE_SIZE, "probe", dataset="static"))
    learn_ok = bool(reached) and reached[0] <= 200 and seconds < 600
    static_ok = abs(static_acc - CHANCE_ORDER) <= 0.05
    first = reached[0] if reached else None
    assert criterion("synthetic learnability", learn_ok and static_ok,
                     f"val>0.9 first at epoch {first} (<=200), final val {log.rows[-1].val_acc:.3f}, "
                     f"{seconds:.0f}s (<600s); static control {static_acc:.4f} on {PROBE_SIZE} tuples "
                     f"(1/6+-0.05)")


def test_ablation_direction(criterion):
    rows = run_ablation(TrainConfig(epochs=ABLATION_EPOCHS), "lambda_g,lambda_o", "1:1,0:1", seeds=ABLATION_SEEDS)
    print(format_table(rows, ABLATION_SEEDS))
    full, baseline = rows
    ok = full.mean >= baseline.mean - 0.02
    assert criterion("ablation direction", ok,
                     f"full {full.mean:.3f} vs order-only {baseline.mean:.3f} over seeds {ABLATION_SEEDS}, "
                     f"{ABLATION_EPOCHS} epochs (full >= baseline - 0.02)")


def test_retrieval_sanity(criterion, default_run, untrained):
    config = default_run[0].config
    gallery = DatasetSpec(config.train_size, "train")
    query = DatasetSpec(PROBE_SIZE, "query")
    trained = retrieve(default_run[0], gallery, query, (1,))[1]
    fresh = retrieve(untrained, gallery, query, (1,))[1]
    trained_ok = trained >= CHANCE_CLASS + 0.15
    fresh_ok = abs(fresh - CHANCE_CLASS) <= 0.03
    assert criterion("retrieval sanity", trained_ok and fresh_ok,
                     f"trained top-1 {trained:.4f} (>=0.275), untrained top-1 {fresh:.4f} (0.125+-0.03) "
                     f"over {PROBE_SIZE} queries")


def test_determinism_and_persistence(criterion):
    config = tiny_config(epochs=2, seed=5)
    a, log_a = pretrain(config)
    b, log_b = pretrain(config)
    runs_equal = a.to_bytes() == b.to_bytes()
    logs_equal = [r.values()[:-1] for r in log_a.rows] == [r.values()[:-1] for r in log_b.rows]
    blob = a.to_bytes()
    round_trip = ck.loads(blob).to_bytes() == blob
    identity = max(abs(r.j - (config.lambda_g * r.j_g + config.lambda_o * r.j_o)) for r in log_a.rows)
    ok = runs_equal and logs_equal and round_trip and identity < 1e-9
    assert criterion("determinism and persistence", ok,
                     f"checkpoints equal={runs_equal}, logs equal={logs_equal}, round-trip={round_trip}, "
                     f"J identity {identity:.1e} (<1e-9)")
