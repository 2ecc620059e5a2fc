"""Acceptance checks, one test per criterion, each recording a PASS/FAIL line."""
import hashlib
import json
import time

import numpy as np

from acceptance_log import record
from dlrcast import cli, gradcheck
from dlrcast import graph as gc
from dlrcast import thermal
from dlrcast.autodiff import Tensor
from dlrcast.model import ModelConfig, QuantileNetwork, count_params
from dlrcast.thermal import ConductorParams, WeatherSample
from dlrcast.training import TrainConfig, total_loss, train
from helpers import (bfs_distance2_oracle, grid_from_pairs, random_connected_pairs,
                     shared_endpoint_oracle, write_config)
from test_thermal import hand_rating
from test_training import naive_loss


def test_criterion_1_gradient_integrity():
    t0 = time.perf_counter()
    results = gradcheck.run_all(seed=0)
    elapsed = time.perf_counter() - t0
    worst = max(r.rel_error for r in results)
    names = {r.name for r in results}
    ok = all(r.passed for r in results) and "model[d-lgclstm]" in names and elapsed < 60
    record(1, "gradient integrity", ok,
           f"{sum(r.passed for r in results)}/{len(results)} checks, worst rel err {worst:.2e} "
           f"(< {gradcheck.TOLERANCE}), {elapsed:.1f} s (< 60 s)")
    assert ok


def test_criterion_2_graph_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches, shared = 0, 0
    for _ in range(200):
        n_buses = int(rng.integers(2, 16))
        max_lines = min(20, n_buses * (n_buses - 1) // 2)
        n_lines = int(rng.integers(n_buses - 1, max_lines + 1))
        pairs = random_connected_pairs(rng, n_buses, n_lines)
        lg = gc.to_line_graph(grid_from_pairs(pairs))
        if not np.array_equal(lg.adj1, shared_endpoint_oracle(pairs)):
            mismatches += 1
        if not np.array_equal(lg.adj2, bfs_distance2_oracle(lg.adj1)):
            mismatches += 1
        for i, j in zip(*np.nonzero(lg.adj2)):
            shared += len(set(pairs[i]) & set(pairs[j]))
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and shared == 0 and elapsed < 30
    record(2, "graph oracles", ok,
           f"200 graphs, {mismatches} oracle mismatches, {shared} shared endpoints on double-hop pairs, "
           f"{elapsed:.1f} s (< 30 s)")
    assert ok


def test_criterion_3_reduction_identity():
    rng = np.random.default_rng(3)
    n, d, hid = 6, 20, 8
    lstm = QuantileNetwork(ModelConfig("lstm", input_dim=d, hidden=hid, head_hidden=5, horizon=24), n, seed=11)
    dl = QuantileNetwork(ModelConfig("d-lgclstm", input_dim=d, hidden=hid, head_hidden=5, horizon=24), n,
                         operator=np.eye(n), seed=11)
    differing = 0
    for _ in range(50):
        x = rng.normal(size=(int(rng.integers(1, 4)), int(rng.integers(1, 12)), n, d))
        for a, b in zip(lstm.forward(x), dl.forward(x)):
            differing += not np.array_equal(a.value, b.value)
    record(3, "reduction identity", differing == 0, f"{differing}/100 outputs differ bitwise over 50 inputs")
    assert differing == 0


def test_criterion_4_quantile_correctness():
    rng = np.random.default_rng(4)
    n = 600
    x = rng.normal(size=(n, 2, 2, 3))
    y = rng.uniform(0.0, 1.0, size=(n, 2, 3))
    net = QuantileNetwork(ModelConfig("lstm", input_dim=3, hidden=4, head_hidden=4, horizon=3,
                                      shared_heads=True), 2, seed=1)
    train(net, x, y, TrainConfig(epochs=60, learning_rate=0.01, weight_decay=0.0, batch_size=50,
                                 val_fraction=0.0, seed=1))
    lower, upper = (t.value.reshape(n, 2, 3) for t in net.forward(x))
    q10, q90 = np.quantile(y, [0.1, 0.9], axis=0)
    dev = max(np.abs(lower.mean(axis=0) - q10).max(), np.abs(upper.mean(axis=0) - q90).max())
    worst_loss = 0.0
    for _ in range(200):
        m, tau = rng.integers(1, 5), rng.integers(1, 6)
        lo, up, yy = (rng.normal(size=(m, tau)) for _ in range(3))
        q = tuple(sorted(rng.uniform(0.01, 0.99, 2)))
        got = total_loss(Tensor(lo), Tensor(up), yy, q).value[0, 0]
        worst_loss = max(worst_loss, abs(got - naive_loss(lo, up, yy, q)))
    ok = dev < 0.05 and worst_loss < 1e-12
    record(4, "quantile correctness", ok,
           f"max |bound - empirical q10/q90| = {dev:.4f} (< 0.05); pinball vs naive loop {worst_loss:.1e} (< 1e-12)")
    assert ok


def test_criterion_5_physics_sanity():
    drake = ConductorParams()
    rng = np.random.default_rng(5)
    n = 1000
    ta, v = rng.uniform(-20, 45, n), rng.uniform(0, 15, n)
    wd, g, az = rng.uniform(0, 360, n), rng.uniform(0, 1100, n), rng.uniform(0, 180, n)
    base = thermal.ampacity_array(drake, ta, v, wd, g, az)
    windier = thermal.ampacity_array(drake, ta, v + 0.5, wd, g, az)
    # ties are expected where natural convection dominates (calm air along the line)
    wind_bad = int(np.sum(windier < base))
    plateaus = int(np.sum(windier == base))
    temp_bad = int(np.sum(thermal.ampacity_array(drake, ta + 1.0, v, wd, g, az) > base))
    oracle = hand_rating(40.0, 0.61, 90.0, 1000.0)
    got = thermal.ampacity(drake, WeatherSample(40.0, 0.61, 90.0, 1000.0), line_azimuth=0.0)
    rel = abs(got - oracle) / oracle
    ok = wind_bad == 0 and temp_bad == 0 and rel < 0.05
    record(5, "physics sanity", ok,
           f"{wind_bad} wind and {temp_bad} temperature monotonicity violations in {n} probes "
           f"({plateaus} natural-convection ties); "
           f"reference {got:.1f} A vs oracle {oracle:.1f} A ({100 * rel:.3f}% < 5%)")
    assert ok


def test_criterion_6_end_to_end_coverage(tmp_path):
    t0 = time.perf_counter()
    out = str(tmp_path / "demo")
    assert cli.main(["gen-data", "--config", "demo-20bus", "--out-dir", out]) == 0
    reports = {}
    for variant in ("d-lgclstm", "lstm"):
        assert cli.main(["train", "--config", "demo-20bus", "--out-dir", out, "--variant", variant]) == 0
        assert cli.main(["eval", "--config", "demo-20bus", "--out-dir", out, "--variant", variant,
                         "--checkpoint", f"{out}/checkpoints/{variant}"]) == 0
        reports[variant] = json.loads((tmp_path / "demo" / f"metrics_{variant}.json").read_text())
    elapsed = time.perf_counter() - t0
    dl, base = reports["d-lgclstm"], reports["lstm"]
    ok = abs(dl["PICP"] - 80.0) <= 10.0 and dl["QS"] <= base["QS"] and elapsed < 20 * 60
    record(6, "end-to-end coverage", ok,
           f"D-LGCLSTM PICP {dl['PICP']:.2f} (80 +/- 10), QS {dl['QS']:.3f} vs LSTM QS {base['QS']:.3f}; "
           f"{elapsed / 60:.1f} min (< 20 min)")
    assert ok


def test_criterion_7_parameter_accounting():
    hidden, d_in = 64, 20
    one_layer = 4 * (d_in * hidden + hidden * hidden + hidden)
    two_layer = one_layer + 4 * (hidden * hidden + hidden * hidden + hidden)
    dl = count_params(ModelConfig("d-lgclstm", input_dim=d_in, hidden=hidden))["cell_per_direction"]
    lg = count_params(ModelConfig("lgclstm", input_dim=d_in, hidden=hidden))["cell_per_direction"]
    ok = dl == one_layer == 21760 and lg == two_layer == 54784 and dl < lg
    record(7, "parameter accounting", ok,
           f"D-LGCLSTM cell {dl} (hand {one_layer}) < LGCLSTM cell {lg} (hand {two_layer})")
    assert ok


def _digest_tree(root):
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def _run_every_command(out, cfg, capsys):
    stdout = {}
    ckpt = str(out / "checkpoints" / "d-lgclstm")
    commands = [
        ["gen-data"],
        ["train", "--variant", "d-lgclstm"],
        ["eval", "--variant", "d-lgclstm", "--checkpoint", ckpt],
        ["forecast", "--checkpoint", ckpt, "--line", "L1", "--robust", "--svg"],
        ["bench"],
    ]
    for argv in commands:
        assert cli.main(argv + ["--config", cfg, "--out-dir", str(out)]) == 0
        capsys.readouterr()
    assert cli.main(["gradcheck", "--seed", "3"]) == 0
    stdout["gradcheck"] = capsys.readouterr().out
    return _digest_tree(out), stdout


def test_criterion_8_determinism(tmp_path, capsys):
    cfg = write_config(tmp_path / "tiny.json")
    first = _run_every_command(tmp_path / "a", cfg, capsys)
    second = _run_every_command(tmp_path / "b", cfg, capsys)
    differing = sorted(k for k in first[0] if first[0][k] != second[0].get(k))
    same_set = first[0].keys() == second[0].keys()
    ok = not differing and same_set and first[1] == second[1]
    record(8, "determinism", ok,
           f"{len(first[0])} artifacts from gen-data/train/eval/forecast/bench plus gradcheck report; "
           f"{len(differing)} differ between runs" + (f" ({', '.join(differing)})" if differing else ""))
    assert ok
