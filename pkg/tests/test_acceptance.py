"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``CRITERION n PASS|FAIL`` line (also collected into the
terminal summary). Criteria 4 and 5 train the full toy benchmark and take
about a quarter of an hour on one core.
"""

import math
import time

import numpy as np
import pytest

from _gradcheck import analytic_gradient, fd_gradient, max_relative_error
from conftest import ACCEPTANCE_LINES
from modhdr.bench import BenchConfig, aggregate, run_benchmark
from modhdr.cli import main
from modhdr.features import FEATURE_ROWS, FeatureConfig
from modhdr.io import read_pfm, write_pfm
from modhdr.learn import TrainConfig, loss_eq, loss_rec, make_model, make_samples, restore, total_objective
from modhdr.metrics import Pu21Encoder, SsimParams, psnr, reinhard_tonemap, ssim
from modhdr.scenes import SceneKind, SceneSpec, generate
from modhdr.sensor import ModuloImage, wrap, wrapped_diff
from modhdr.unwrap import solve_dct, solve_dense_oracle, unwrap_exact


def report(n, title, ok, detail):
    line = f"CRITERION {n} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_1_itoh_exactness():
    rng = np.random.default_rng(101)
    kinds = list(SceneKind)
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(200):
        b = int(rng.choice([2, 4, 8]))
        size = int(rng.integers(16, 65))
        spec = SceneSpec(kinds[k % len(kinds)], (size, size), 1, float(rng.uniform(1.5, 4.0)), b,
                         int(rng.integers(2**32)), "enforce")
        x = generate(spec)
        est = unwrap_exact(wrap(x, b)).image
        est = est + (x.data.mean() - est.mean())
        worst = max(worst, float(np.abs(est - x.data).max()))
    dt = time.perf_counter() - t0
    report(1, "Itoh exactness", worst <= 1e-6 and dt < 30, f"max abs err {worst:.3g}, {dt:.1f}s")


def test_criterion_2_solver_oracle_equivalence():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(100):
        m = 6 if k < 50 else 8
        b = int(rng.integers(1, 9))
        g = wrapped_diff(ModuloImage(rng.uniform(0, 2.0**b, size=(m, m)), b))
        a, o = solve_dct(g).image, solve_dense_oracle(g).image
        worst = max(worst, float(np.linalg.norm(a - o) / max(np.linalg.norm(o), 1e-300)))
    dt = time.perf_counter() - t0
    report(2, "DCT solver vs dense oracle", worst <= 1e-8 and dt < 10, f"max rel L2 {worst:.3g}, {dt:.2f}s")


def test_criterion_3_gradient_correctness():
    rng = np.random.default_rng(303)
    cfg = FeatureConfig(True, True, True)
    tc = TrainConfig(gamma=0.1)
    kinds = list(SceneKind)
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(20):
        spec = SceneSpec(kinds[k % len(kinds)], (16, 16), 1, float(rng.uniform(1.5, 4.0)), 4, int(rng.integers(2**32)))
        batch = make_samples([generate(spec)], 4)
        model = make_model(cfg, 1, seed=int(rng.integers(2**32)))
        alphas = [list(rng.uniform(0.9, 1.1, size=1))]
        a = analytic_gradient(model, batch, cfg, tc, alphas)
        f = fd_gradient(model, batch, cfg, tc, alphas)
        worst = max(worst, max_relative_error(a, f))
    dt = time.perf_counter() - t0
    report(3, "analytic gradient vs finite differences", worst <= 1e-4 and dt < 120,
           f"max rel err {worst:.3g} over {model.theta.size} params x 20, {dt:.1f}s")


@pytest.fixture(scope="module")
def benchmark():
    bc = BenchConfig()
    results = run_benchmark(bc, tuple(FEATURE_ROWS), "y+diff")
    return bc, results, aggregate(results)


def _row(rows, features, gamma):
    return next(r for r in rows if r["features"] == features and r["gamma"] == gamma)


@pytest.mark.slow
def test_criterion_4_equivariance_regulariser(benchmark):
    bc, results, rows = benchmark
    base, reg = _row(rows, "y+diff", 0.0), _row(rows, "y+diff", bc.gamma)
    drop = 1 - reg["heldout_eq"] / base["heldout_eq"]
    dpsnr = reg["psnr_l"] - base["psnr_l"]
    dt = sum(r.seconds for r in results if r.features == "y+diff")
    ok = drop >= 0.10 and dpsnr >= -0.2 and dt < 20 * 60
    report(4, "equivariance regulariser effect", ok,
           f"held-out loss_eq {base['heldout_eq']:.4g} -> {reg['heldout_eq']:.4g} ({100 * drop:.1f}% lower, need >= 10%), "
           f"PSNR-L {base['psnr_l']:.3f} -> {reg['psnr_l']:.3f} dB ({dpsnr:+.3f}), {dt / 60:.1f} min")


@pytest.mark.slow
def test_criterion_5_feature_ordering(benchmark):
    _, results, rows = benchmark
    p = {name: _row(rows, name, 0.0)["psnr_y_pu"] for name in FEATURE_ROWS}
    dt = sum(r.seconds for r in results if r.gamma == 0.0)
    ok = p["y+diff"] >= p["y"] >= p["init"] and dt < 45 * 60
    table = ", ".join(f"{k} {v:.3f}" for k, v in p.items())
    report(5, "feature ordering y+diff >= y >= init", ok, f"median PSNR-Y-PU: {table}; {dt / 60:.1f} min")


def test_criterion_6_metric_sanity():
    rng = np.random.default_rng(606)
    x = rng.uniform(0, 100, size=(32, 32))
    y = x + rng.normal(scale=3, size=x.shape)
    p = SsimParams(data_range=100.0)
    checks = {
        "psnr(x,x)=inf": psnr(x, x, 100.0) == math.inf,
        "ssim(x,x)=1": abs(ssim(x, x) - 1) <= 1e-9,
        "ssim symmetric": abs(ssim(x, y, p) - ssim(y, x, p)) <= 1e-12,
        "psnr scale invariant": all(
            abs(psnr(s * x, s * y, s * 100.0) - psnr(x, y, 100.0)) <= 1e-9 for s in (1e-3, 0.5, 7.0, 1e4)
        ),
    }
    enc = Pu21Encoder()
    a, b = np.exp(rng.uniform(np.log(0.005), np.log(1e4), size=(2, 10_000)))
    ea, eb = enc.encode(a), enc.encode(b)
    checks["pu21 monotone"] = bool(np.all(np.sign(ea - eb) == np.sign(a - b)))
    checks["pu21(0.005)=0"] = abs(float(enc.encode(0.005))) <= 1e-6
    checks["reinhard(1)=0.5"] = reinhard_tonemap(np.array([[1.0]]))[0, 0, 0] == 0.5
    failed = [k for k, v in checks.items() if not v]
    report(6, "metric sanity suite", not failed, "all checks hold" if not failed else f"failed: {failed}")


def _snapshot(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_7_determinism_and_io(tmp_path, capsys):
    ds, work = tmp_path / "ds", tmp_path / "work"
    commands = [
        ["datagen", "--count", "10", "--size", "16", "--bit-depth", "4", "--seed", "7", "--itoh-mode", "enforce",
         "--kind", "gaussian-blobs", "--out-dir", str(ds)],
        ["simulate", "--input", str(ds / "scene_00000.pfm"), "--bit-depth", "4", "--out-dir", str(work)],
        ["unwrap", "--input", str(work / "scene_00000_mod.pfm"), "--bit-depth", "4", "--out-dir", str(work)],
        ["features", "--input", str(work / "scene_00000_mod.pfm"), "--bit-depth", "4", "--config", "all",
         "--out-dir", str(work)],
        ["train", "--manifest", str(ds / "manifest.json"), "--epochs", "3", "--seed", "5", "--out-dir", str(work)],
        ["eval", "--manifest", str(ds / "manifest.json"), "--method", "dct", "--align-mean",
         "--checkpoint", str(work / "model.ckpt"), "--previews", "--out-dir", str(work)],
    ]
    problems = []
    for argv in commands:
        if main(argv) != 0:
            problems.append(f"{argv[0]} failed")
            continue
        out1 = capsys.readouterr().out
        first = {**_snapshot(ds), **{f"w/{k}": v for k, v in _snapshot(work).items()}} if work.exists() else _snapshot(ds)
        main(argv)
        out2 = capsys.readouterr().out
        second = {**_snapshot(ds), **{f"w/{k}": v for k, v in _snapshot(work).items()}} if work.exists() else _snapshot(ds)
        if first != second or out1 != out2:
            problems.append(f"{argv[0]} not byte-identical")

    rng = np.random.default_rng(707)
    for k in range(50):
        c = int(rng.choice([1, 3]))
        img = rng.uniform(0, 10.0 ** rng.uniform(-3, 5), size=(int(rng.integers(1, 40)), int(rng.integers(1, 40)), c))
        write_pfm(tmp_path / "rt.pfm", img)
        if not np.array_equal(read_pfm(tmp_path / "rt.pfm").data, img.astype(np.float32).astype(np.float64)):
            problems.append(f"PFM round trip {k}")
    report(7, "determinism and PFM round trip", not problems,
           "6 subcommands byte-identical, 50 PFM round trips exact" if not problems else "; ".join(problems))


def test_criterion_8_loss_identities():
    rng = np.random.default_rng(808)
    cfg = FeatureConfig(True, True, True)
    worst_total, worst_alpha = 0.0, 0.0
    for k in range(10):
        xs = [generate(SceneSpec("composite", (16, 16), 1, 3.0, 4, int(rng.integers(2**32)))) for _ in range(3)]
        batch = make_samples(xs, 4)
        model = make_model(cfg, 1, seed=k)
        gamma = float(rng.uniform(0, 5))
        rep = total_objective(batch, model, cfg, TrainConfig(gamma=gamma, alpha_draws=2, seed=k))
        worst_total = max(worst_total, abs(rep.total - (rep.rec + gamma * rep.eq)))
        for x, s in zip(xs, batch):
            diff = abs(loss_eq(x, model, cfg, [1.0], 4) - loss_rec(x, restore(model, s.y, cfg)))
            worst_alpha = max(worst_alpha, diff)
        one = total_objective(batch, model, cfg, TrainConfig(gamma=gamma), alphas=[[1.0]] * 3)
        worst_alpha = max(worst_alpha, abs(one.eq - one.rec))
    report(8, "loss identities", worst_total <= 1e-12 and worst_alpha <= 1e-12,
           f"|total - rec - gamma eq| {worst_total:.3g}, |eq(alpha=1) - rec| {worst_alpha:.3g}")
