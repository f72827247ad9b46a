"""Smoke test for the `fate` extension module.

Build and run from the repository root:

    cargo build -p fate-py --release --features extension-module
    cp target/release/libfate.so python/fate.so
    python3 python/smoke_test.py
"""

import math
import os
import sys
import tempfile

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, HERE)

import fate  # noqa: E402

FIXTURES = os.path.join(HERE, "..", "crates", "cli", "tests", "fixtures")


def check(name, ok):
    print(f"{'ok  ' if ok else 'FAIL'} {name}")
    if not ok:
        raise SystemExit(1)


def main():
    check("pearson of a line", abs(fate.pearson([1, 2, 3, 4], [2, 4, 6, 8]) - 1.0) < 1e-12)
    try:
        fate.pearson([1, 1, 1], [1, 2, 3])
        check("constant input rejected", False)
    except fate.FateError as e:
        check("constant input rejected", str(e).startswith("E_"))

    labels, m = fate.correlation_matrix(["a", "b"], [[1, 2, 3, 5], [2, 1, 4, 4]])
    check("correlation matrix symmetric", labels == ["a", "b"] and m[0][1] == m[1][0] and m[0][0] == 1.0)

    km = fate.kmeans([[0.0], [1.0], [10.0], [11.0]], 2, seed=3, restarts=10)
    check("kmeans recovers two clusters", sorted(c[0] for c in km["centroids"]) == [0.5, 10.5])

    check("mse/mae", fate.mse([1, 2], [1, 4]) == 2.0 and fate.mae([1, 2], [1, 4]) == 1.0)
    check("lr schedule peaks at warmup", fate.lr_schedule(400, 64, 400) > fate.lr_schedule(800, 64, 400))

    gc = fate.gradient_check(seed=0)
    check(f"gradient check (max rel err {gc['max_rel_error']:.2e})", gc["passed"])

    files = [(f, os.path.join(FIXTURES, f"{f}.csv")) for f in ("temperature", "humidity", "pressure")]
    prepared = fate.prepare_wide(
        files,
        [("Vancouver", "temperature", 2)],
        lag=5,
        train=60,
        val=14,
        coords=os.path.join(FIXTURES, "coords.json"),
    )
    train, val, test = prepared.splits()
    check("windowing", len(prepared.dataset) == 94 and (len(train), len(val), len(test)) == (60, 14, 20))
    check("no leakage", prepared.dataset.leakage_free())

    x, y = train.sample(0)
    cfg = fate.ModelConfig(5, len(train.stations), len(train.features), 1, num_heads=2, key_dim=4, dense_units=16)
    w = fate.Weights.init(cfg, seed=1)
    check("input shape", x.shape == [cfg.lag, cfg.stations, cfg.params])

    pred, mods = fate.forward(x, w, cfg)
    sums = [sum(a.get([t, u, s]) for s in range(cfg.stations)) for a in mods[0] for t in range(5) for u in range(5)]
    check("forward output and attention normalization", len(pred) == 1 and all(abs(v - 1) < 1e-12 for v in sums))

    w2, history = fate.fit(cfg, w, train, val, max_epochs=3, batch_size=16, seed=2, warmup_steps=20)
    check("training history", len(history["epochs"]) >= 1 and all(math.isfinite(e["val_mse"]) for e in history["epochs"]))

    ev = fate.evaluate(w2, cfg, test)
    check("evaluation in original units", ev["samples"] == 20 and ev["per_target"][0]["mae"] > 0)

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.fate")
        w2.save(path, cfg)
        cfg3, w3 = fate.Weights.load(path)
        check("checkpoint round trip", w3 == w2 and cfg3.to_dict() == cfg.to_dict())

    report = fate.modulation_report(w2, cfg, test)
    check("modulation scores per head sum to one", all(abs(sum(h) - 1) < 1e-9 for h in report["scores"]))
    print("smoke test passed")


if __name__ == "__main__":
    main()
