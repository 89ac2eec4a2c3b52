"""Smoke test for the refresh_adam Python extension.

Build and install first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/refresh_adam-*.whl

then run `python python/smoke_test.py` from the repository root.
"""

import math
import pathlib
import tempfile

import refresh_adam as ra

ROOT = pathlib.Path(__file__).resolve().parent.parent


def check_grid():
    labels = ra.grid_labels()
    assert len(labels) == 13 and labels[0] == "0" and labels[5] == "0.944"
    assert abs(ra.grid()[5] - (1 - 10 ** -1.25)) < 1e-12
    assert math.isclose(ra.effective_horizon(0.9), 10.0)


def check_selection():
    sel = ra.select_beta(10000)
    assert sel.label == "0.900" and (sel.lower, sel.upper) == (7199, 12802)
    assert ra.select_beta(6000, 1000.0).label == "0.822"
    assert ra.select_beta(500).clamped
    try:
        ra.select_beta(0)
    except ValueError:
        pass
    else:
        raise AssertionError("T_ES = 0 must be rejected")


def check_optimizer():
    opt = ra.BalancedAdam(0.9, epsilon=0.0)
    params = [0.0, 0.0]
    for _ in range(5):
        params = opt.step(params, [2.0, -0.5], 0.1)
    assert opt.t == 5
    assert all(math.isclose(p, e, abs_tol=1e-12) for p, e in zip(params, [-0.5, 0.5]))


def check_horizon_and_metrics():
    assert ra.round_sig1(7341) == 7000
    assert ra.early_stop_step([(0, 1.0), (1, 0.9), (2, 0.95), (3, 0.94)], 3, 2) == 1
    assert math.isclose(ra.cvar([1, 2, 3, 4], 0.25), 4.0)
    summary = ra.aggregate([("a", "dev", 0.005), ("b", "held_out", 0.001)])
    assert summary["global"]["count"] == 2


def check_pipeline():
    with tempfile.TemporaryDirectory() as ws:
        rec = ra.sweep(ROOT / "manifests" / "logistic-dev.toml", workspace=ws, refine_top_k=2, extra_seeds=1)
        assert len(rec.betas) == 13 and rec.t_es > 0
        again = ra.load_record(pathlib.Path(ws) / "records" / "logistic-dev.toml")
        assert again.losses == rec.losses
        report = ra.analyze([rec])
        assert report["development"]["count"] == 1
        selected, rows = ra.calibrate([rec], [500.0, 1000.0])
        assert selected in (500.0, 1000.0) and len(rows) == 2
        rows = ra.robustness([rec], sigmas=[0.0, 0.1], draws=4, seed=1)
        assert rows[0]["global"] == report["global"]
        assert rows[1]["evaluations"] + rows[1]["infeasible"] == 4


if __name__ == "__main__":
    check_grid()
    check_selection()
    check_optimizer()
    check_horizon_and_metrics()
    check_pipeline()
    print("smoke test passed")
