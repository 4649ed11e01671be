"""Executable invariant suites with a machine-readable report."""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .. import asop, oracles, stkd, tcg
from .. import numcore as nc
from .. import synthvideo as sv
from ..encoder import encode, init_encoder
from ..model import forward_batch, init_model
from .checkpoint import loads
from .config import TrainConfig
from .train import pretrain

GRAD_TOL = 1e-4
GRAD_EPS = 1e-5


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


@dataclass
class Report:
    checks: list[Check] = field(default_factory=list)
    seconds: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> str:
        def clean(v):
            return v if not isinstance(v, float) or math.isfinite(v) else repr(v)
        checks = [{k: clean(v) for k, v in asdict(c).items()} for c in self.checks]
        return json.dumps({"passed": self.passed, "checks": checks, "seconds": self.seconds}, indent=2)


class _Suite:
    def __init__(self, report: Report, name: str):
        self.report, self.name = report, name

    def below(self, name: str, value: float, tol: float, detail: str = "") -> None:
        value = float(value)
        self.report.checks.append(Check(self.name, name, bool(value < tol), value, tol, detail))

    def holds(self, name: str, ok: bool, detail: str = "") -> None:
        self.report.checks.append(Check(self.name, name, bool(ok), 0.0 if ok else 1.0, 0.5, detail))


def _worst(fn: Callable[[np.random.Generator], float], rng: np.random.Generator, count: int) -> float:
    return max(fn(rng) for _ in range(count))


# ---------------------------------------------------------------- numcore

def _op_cases() -> dict[str, Callable[[np.random.Generator], float]]:
    def gc(fn, *shapes, low=None):
        def run(rng):
            pts = [rng.uniform(0.5, 2.0, s) if low else rng.standard_normal(s) for s in shapes]
            return nc.grad_check(fn, pts, GRAD_EPS)
        return run

    return {
        "add": gc(lambda a, b: nc.sum(nc.mul(nc.add(a, b), nc.add(a, b))), (3, 4), (4,)),
        "sub": gc(lambda a, b: nc.sum(nc.mul(nc.sub(a, b), a)), (3, 4), (3, 4)),
        "mul": gc(lambda a, b: nc.sum(nc.mul(nc.mul(a, b), a)), (2, 3, 4), (4,)),
        "matmul": gc(lambda a, b: nc.sum(nc.mul(nc.matmul(a, b), nc.matmul(a, b))), (3, 4), (4, 2)),
        "relu": gc(lambda a: nc.sum(nc.mul(nc.relu(a), a)), (5, 4)),
        "exp": gc(lambda a: nc.sum(nc.exp(a)), (3, 3)),
        "log": gc(lambda a: nc.sum(nc.log(a)), (3, 3), low=True),
        "mean": gc(lambda a: nc.sum(nc.mul(nc.mean(a, axis=1, keepdims=True), a)), (3, 4)),
        "reshape": gc(lambda a: nc.sum(nc.mul(nc.reshape(a, (2, 6)), nc.reshape(a, (2, 6)))), (3, 4)),
        "take": gc(lambda a: nc.sum(nc.exp(nc.take(a, np.array([2, 0, 2])))), (3, 2)),
        "concat": gc(lambda a, b: nc.sum(nc.exp(nc.concat([a, b], axis=0))), (2, 3), (1, 3)),
        "stack": gc(lambda a, b: nc.sum(nc.mul(nc.stack([a, b]), nc.stack([b, a]))), (3,), (3,)),
        "linear": gc(lambda x, w, b: nc.sum(nc.exp(nc.linear(x, w, b))), (2, 3), (3, 4), (4,)),
        "softmax_cross_entropy": gc(lambda z: nc.sum(nc.softmax_cross_entropy(z, np.array([1, 5]))), (2, 6)),
        "l2_normalize": gc(lambda a, w: nc.sum(nc.mul(nc.l2_normalize(a), w)), (3, 5), (3, 5)),
        "conv3d": gc(lambda x, k: nc.sum(nc.mul(nc.conv3d(x, k), nc.conv3d(x, k))), (2, 4, 5, 5), (3, 2, 3, 3, 3)),
    }


def suite_numcore(report: Report, rng: np.random.Generator, instances: int = 20) -> None:
    s = _Suite(report, "numcore")
    for op, case in _op_cases().items():
        s.below(f"grad/{op}", _worst(case, rng, instances), GRAD_TOL, f"{instances} random instances")

    x = nc.Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    nc.sum(nc.exp(x)).backward()
    single = x.grad.copy()
    x.zero_grad()
    y = nc.exp(x)
    nc.add(nc.sum(y), nc.sum(nc.exp(x))).backward()
    s.holds("grad/fan-out accumulation", np.array_equal(x.grad, 2 * single))

    z = rng.standard_normal((8, 6)) * 10
    p = nc.softmax(nc.Tensor(z))
    s.below("softmax/sums to one", np.abs(p.sum(axis=-1) - 1).max(), 1e-12)
    s.holds("softmax/non-negative", bool((p >= 0).all()))

    a, k = rng.standard_normal((2, 4, 5, 5)), rng.standard_normal((3, 2, 3, 3, 3))
    s.holds("forward/deterministic", np.array_equal(nc.conv3d(a, k).data, nc.conv3d(a, k).data))

    leaf = nc.Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    out = nc.sum(nc.relu(nc.matmul(leaf, leaf)))
    rec = nc.record(out)
    s.holds("record/replay reproduces forward", np.array_equal(rec.replay({leaf.id: leaf.data})[out.id], out.data))


# ---------------------------------------------------------------- synthvideo

def suite_synthvideo(report: Report, rng: np.random.Generator) -> None:
    s = _Suite(report, "synthvideo")
    ok_bijection, ok_order = True, True
    for n in range(2, 6):
        perms = list(itertools.permutations(range(n)))  # lexicographic
        ranks = [sv.encode_permutation(p) for p in perms]
        ok_order &= ranks == list(range(math.factorial(n)))
        ok_bijection &= all(sv.decode_class(r, n) == p for r, p in zip(ranks, perms))
    s.holds("codec/bijection n=2..5", ok_bijection)
    s.holds("codec/lexicographic order n=2..5", ok_order)
    s.holds("codec/anchors", sv.encode_permutation((0, 1, 2)) == 0 and sv.encode_permutation((2, 1, 0)) == 5)

    cfg = sv.SamplerConfig()
    video = sv.generate_video(0, cfg, 1)
    counts = np.zeros(6)
    sub_ok = True
    for seed in range(10_000):
        t = sv.sample_and_shuffle(video, cfg, seed)
        counts[t.order_class] += 1
        if seed < 50:
            for snippet, rank in zip(t.snippets, t.permutation):
                start = rank * (cfg.l + cfg.p)
                sub_ok &= np.array_equal(snippet, video.samples[:, start:start + cfg.l])
                sub_ok &= t.order_class == sv.encode_permutation(t.permutation)
    s.below("shuffle/uniformity", np.abs(counts / counts.sum() - 1 / 6).max(), 0.02, "10,000 draws")
    s.holds("shuffle/snippets are sub-slices", sub_ok)
    static = sv.generate_video(sv.STATIC_CLASS, cfg, 3)
    s.holds("generate/static frames identical", bool((static.samples == static.samples[:, :1]).all()))


# ---------------------------------------------------------------- stkd

def suite_stkd(report: Report, rng: np.random.Generator) -> None:
    s = _Suite(report, "stkd")
    worst = 0.0
    t0 = time.perf_counter()
    for i in range(100):
        length = 2 + i % 7
        v = rng.uniform(0, 1, (int(rng.integers(1, 4)), length, 4, 5))
        spectrum = stkd.dct_spectrum(v)
        lhs = spectrum[:, 1:].sum(axis=1)
        rhs = length * stkd.stkd_residual(v).data[:, 0]
        worst = max(worst, np.abs(lhs - rhs).max())
    s.below("spectral identity", worst, 1e-9, f"100 videos, L=2..8, {time.perf_counter() - t0:.3f}s")

    zero_mean = linear = idem = 0.0
    for _ in range(20):
        v1, v2 = rng.standard_normal((2, 2, 6, 4, 4))
        a, b = rng.standard_normal(2)
        r1, r2 = stkd.stkd_residual(v1).data, stkd.stkd_residual(v2).data
        zero_mean = max(zero_mean, np.abs(r1.mean(axis=1)).max())
        linear = max(linear, np.abs(stkd.stkd_residual(a * v1 + b * v2).data - (a * r1 + b * r2)).max())
        idem = max(idem, np.abs(stkd.stkd_residual(r1).data - r1).max())
    s.below("zero mean", zero_mean, 1e-12)
    s.below("linearity", linear, 1e-9)
    s.below("idempotence", idem, 1e-12)
    err = _worst(lambda r: nc.grad_check(lambda v: nc.sum(nc.exp(stkd.stkd_residual(v))),
                                         r.standard_normal((2, 4, 3, 3))), rng, 20)
    s.below("gradient", err, GRAD_TOL)


# ---------------------------------------------------------------- tcg

def _random_adjacency(rng, n, density=0.5):
    upper = np.triu(rng.random((n, n)) < density, k=1)
    return (upper | upper.T).astype(np.float64)


def suite_tcg(report: Report, rng: np.random.Generator) -> None:
    s = _Suite(report, "tcg")
    equi = 0.0
    oracle = 0.0
    for n in range(3, 9):
        for _ in range(5):
            a = _random_adjacency(rng, n)
            x = rng.standard_normal((n, 5))
            params = tcg.init_gcn(rng, 5, 4, depth=int(rng.integers(1, 4)))
            perm = rng.permutation(n)
            p = np.eye(n)[perm]
            base = tcg.gcn_forward((x, a), params).data
            moved = tcg.gcn_forward((p @ x, p @ a @ p.T), params).data
            equi = max(equi, np.abs(moved - p @ base).max())
            ref = oracles.gcn(x, a, [w.data for w in params.weights], [b.data for b in params.biases])
            oracle = max(oracle, np.abs(ref - base).max())
    s.below("gcn/permutation equivariance", equi, 1e-9, "N=3..8")
    s.below("gcn/scalar oracle", oracle, 1e-10, "N=3..8")

    chain = tcg.chain_adjacency(6)
    view_ok = True
    for _ in range(200):
        dropped, mask = tcg.corruption_masks(rng, chain, 7, rng.random(), rng.random())
        view_ok &= bool((dropped <= chain).all() and (dropped == dropped.T).all())
        view_ok &= mask.shape == (1, 7) and set(np.unique(mask)) <= {0.0, 1.0}
    s.holds("views/edges only removed, symmetric, shared mask", view_ok)
    g = tcg.build_chain_graph(rng.standard_normal((5, 4)))
    v = tcg.generate_view(g, 0.0, 0.0, 0)
    s.holds("views/p=0 identity", np.array_equal(v.a, g.a) and np.array_equal(v.x.data, g.x.data))
    draws = tcg.corruption_masks(rng, tcg.chain_adjacency(2, (20_000,)), 1, 0.2, 0.0)[0]
    s.below("views/edge survival rate", abs(draws[:, 0, 1].mean() - 0.8), 0.01, "20,000 draws, p_r=0.2")

    head_err = sym = relabel = 0.0
    n1_ok = nonneg_ok = True
    for _ in range(50):
        n, f = int(rng.integers(1, 7)), int(rng.integers(3, 6))
        head = tcg.init_projection(rng, f, tau=float(rng.uniform(0.2, 1.0)))
        u, w = rng.standard_normal((2, n, f))
        j = tcg.graph_contrastive_loss(nc.Tensor(u), nc.Tensor(w), head).item()
        arrays = [t.data for t in (head.w1, head.b1, head.w2, head.b2)]
        ref = oracles.contrastive_loss(oracles.mlp_projection(u, *arrays), oracles.mlp_projection(w, *arrays),
                                       head.tau)
        head_err = max(head_err, abs(j - ref))
        sym = max(sym, abs(j - tcg.graph_contrastive_loss(nc.Tensor(w), nc.Tensor(u), head).item()))
        perm = rng.permutation(n)
        relabel = max(relabel, abs(j - tcg.graph_contrastive_loss(nc.Tensor(u[perm]), nc.Tensor(w[perm]),
                                                                   head).item()))
        nonneg_ok &= bool((tcg.pair_losses(nc.Tensor(u), nc.Tensor(w), head).data >= 0).all())
        if n == 1:
            n1_ok &= j == 0.0
    single = rng.standard_normal((1, 4))
    n1_ok &= tcg.graph_contrastive_loss(nc.Tensor(single), nc.Tensor(single + 1),
                                        tcg.init_projection(rng, 4)).item() == 0.0
    s.below("contrastive/scalar oracle", head_err, 1e-10, "50 instances, N<=6")
    s.below("contrastive/symmetry", sym, 1e-12)
    s.below("contrastive/relabeling invariance", relabel, 1e-10)
    s.holds("contrastive/N=1 is exactly zero", n1_ok)
    s.holds("contrastive/non-negative", nonneg_ok)

    err = _worst(lambda r: _graph_loss_grad(r), rng, 3)
    s.below("contrastive/gradient 4-node graph", err, GRAD_TOL)
    s.holds("contrastive/one SGD step decreases J_g", _sgd_decreases(rng))


def _graph_loss_grad(rng) -> float:
    head = tcg.init_projection(rng, 3)
    gcn = tcg.init_gcn(rng, 3, 3)
    a = tcg.chain_adjacency(4)
    a1, mask = tcg.corruption_masks(rng, a, 3, 0.2, 0.1)
    params = list(gcn.named_parameters().values()) + list(head.named_parameters().values())

    def loss():
        u = tcg.gcn_forward((nc.mul(x, mask), a1), gcn)
        v = tcg.gcn_forward((x, a), gcn)
        return tcg.graph_contrastive_loss(u, v, head)
    x = nc.Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    return nc.parameters_grad_check(loss, params + [x], GRAD_EPS)


def _sgd_decreases(rng) -> bool:
    gcn, head = tcg.init_gcn(rng, 4, 4), tcg.init_projection(rng, 4)
    x = rng.standard_normal((5, 4))
    a = tcg.chain_adjacency(5)
    a1, mask = tcg.corruption_masks(rng, a, 4, 0.2, 0.1)
    params = {f"g.{k}": v for k, v in gcn.named_parameters().items()}
    params.update({f"h.{k}": v for k, v in head.named_parameters().items()})

    def loss():
        return tcg.graph_contrastive_loss(tcg.gcn_forward((x * mask, a1), gcn), tcg.gcn_forward((x, a), gcn), head)
    before = loss()
    before.backward()
    nc.sgd_step(params, {k: p.grad for k, p in params.items()}, nc.OptimizerState(1e-3, 0.9, 5e-4))
    return loss().item() < before.item()


# ---------------------------------------------------------------- asop and the full objective

def tiny_config(**changes) -> TrainConfig:
    base = dict(n=2, l=4, p=1, m=2, height=5, width=5, feature_width=4, conv_channels=2, gcn_width=4,
                train_size=4, val_size=2, batch_size=2, epochs=1)
    base.update(changes)
    return TrainConfig(**base)


def _objective(config: TrainConfig, seed: int):
    model = init_model(config)
    videos = sv.make_dataset(2, config.sampler, seed, height=config.height, width=config.width)
    tuples = [sv.sample_and_shuffle(v, config.sampler, i) for i, v in enumerate(videos)]
    return model, lambda: forward_batch(model, config, tuples, np.random.default_rng(seed)).j


def objective_grad_error(config: TrainConfig, seed: int = 0) -> float:
    """Finite-difference check of the full objective over every parameter entry."""
    model, loss = _objective(config, seed)
    return nc.parameters_grad_check(loss, model.named_parameters().values(), GRAD_EPS)


def objective_relu_margin(config: TrainConfig, seed: int = 0) -> float:
    """Distance of the objective's check point from its nearest relu kink."""
    return nc.relu_margin(_objective(config, seed)[1]())


def suite_asop(report: Report, rng: np.random.Generator) -> None:
    s = _Suite(report, "asop")
    params = asop.init_asop(rng, 3, 8)
    f = nc.Tensor(rng.standard_normal((4, 3, 8)))
    probs = asop.asop_forward(f, params).probabilities
    s.below("probabilities sum to one", np.abs(probs.sum(axis=-1) - 1).max(), 1e-12)
    s.holds("n! classes", probs.shape[-1] == 6 and bool((probs >= 0).all()))
    gate = rng.uniform(0, 2, (3, 8))
    scale = 2.5
    base = nc.mul(f, gate).data
    s.below("gate bilinearity", np.abs(nc.mul(f, scale * gate).data - scale * base).max(), 1e-12)
    err = _worst(lambda r: nc.grad_check(
        lambda x: asop.order_loss(asop.asop_forward(x, params), np.array([0, 1, 2, 5])),
        r.standard_normal((4, 3, 8))), rng, 5)
    s.below("order loss gradient", err, GRAD_TOL)
    s.below("full objective gradient (tiny model)", objective_grad_error(tiny_config()), GRAD_TOL)
    s.below("full objective gradient (ungated, no STKD)",
            objective_grad_error(tiny_config(asop=False, stkd=False, view_mode="noise")), GRAD_TOL)


def suite_encoder(report: Report, rng: np.random.Generator) -> None:
    s = _Suite(report, "encoder")
    for variant in ("pooled-mlp", "tiny-conv3d"):
        params = init_encoder(rng, variant, channels=2, width=5, conv_channels=3)
        shapes_ok = all(encode(rng.standard_normal((2, length, 4, 4)), params).shape == (5,)
                        for length in (1, 2, 4, 8))
        s.holds(f"{variant}/output width for any length", shapes_ok)
        err = _worst(lambda r: nc.grad_check(lambda c: nc.sum(nc.exp(encode(c, params))),
                                             r.standard_normal((2, 3, 4, 4))), rng, 3)
        s.below(f"{variant}/gradient", err, GRAD_TOL)


# ---------------------------------------------------------------- harness

def suite_harness(report: Report, rng: np.random.Generator) -> None:
    s = _Suite(report, "harness")
    cfg = tiny_config(epochs=2)
    first, log = pretrain(cfg)
    second, log2 = pretrain(cfg)
    blob = first.to_bytes()
    s.holds("checkpoint round-trip bitwise", loads(blob).to_bytes() == blob)
    s.holds("repeat run bitwise identical", second.to_bytes() == blob and
            [r.values()[:-1] for r in log.rows] == [r.values()[:-1] for r in log2.rows])
    resumed, _ = pretrain(cfg, resume=first)
    s.holds("resume with zero epochs changes nothing", resumed.to_bytes() == blob)
    s.below("metrics J identity", max(abs(r.j - (cfg.lambda_g * r.j_g + cfg.lambda_o * r.j_o)) for r in log.rows),
            1e-9)


SUITES = {
    "numcore": suite_numcore,
    "synthvideo": suite_synthvideo,
    "stkd": suite_stkd,
    "encoder": suite_encoder,
    "tcg": suite_tcg,
    "asop": suite_asop,
    "harness": suite_harness,
}


def verify(config: TrainConfig | None = None, suites=None) -> Report:
    """Run the invariant suites; failures are recorded, never raised."""
    seed = 0 if config is None else config.seed
    report = Report()
    for name in suites or SUITES:
        rng = sv.stream(seed, "verify/" + name)
        t0 = time.perf_counter()
        try:
            SUITES[name](report, rng)
        except Exception as exc:  # a crashing suite is a failed suite
            report.checks.append(Check(name, f"{name}/crashed", False, float("nan"), 0.0, repr(exc)))
        report.seconds[name] = time.perf_counter() - t0
    return report
