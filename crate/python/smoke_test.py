#!/usr/bin/env python3
"""Smoke test for the dppkit_py extension module.

Build the module first, then run this script:

    cargo build -p dppkit-py --release
    python3 python/smoke_test.py

The script copies the cdylib next to a temp directory under the name Python
expects, imports it, and exercises the main types end to end.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def locate_cdylib() -> Path:
    candidates = [
        ROOT / "target" / "release" / "libdppkit_py.so",
        ROOT / "target" / "debug" / "libdppkit_py.so",
        ROOT / "target" / "release" / "libdppkit_py.dylib",
        ROOT / "target" / "debug" / "libdppkit_py.dylib",
    ]
    for c in candidates:
        if c.exists():
            return c
    sys.exit("dppkit_py cdylib not found; run `cargo build -p dppkit-py` first")


def import_module():
    lib = locate_cdylib()
    tmp = Path(tempfile.mkdtemp(prefix="dppkit-py-"))
    suffix = ".so" if lib.suffix == ".so" else ".so"  # CPython accepts .so on mac too
    shutil.copy(lib, tmp / f"dppkit_py{suffix}")
    sys.path.insert(0, str(tmp))
    import dppkit_py

    return dppkit_py


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} vs {b}"


def main():
    dk = import_module()

    # features and kernels
    grid = dk.FeatureMatrix.grid(4)
    assert grid.n_items == 16 and grid.dim == 2
    assert grid.rows()[0] == [0.0, 0.0] and grid.rows()[15] == [1.0, 1.0]

    # exact DPP machinery
    dpp = dk.Dpp(grid, kernel="exp-quadratic", beta=0.5)
    assert dpp.n == 16
    approx(sum(l / (1 + l) for l in dpp.eigenvalues), dpp.expected_size(), 1e-9)

    ident = dk.Dpp.from_kernel([[1.0, 0.0], [0.0, 1.0]])
    approx(ident.log_prob([0, 1]), -math.log(4.0), 1e-12)
    probs = ident.enumerate_probs()
    approx(sum(probs), 1.0, 1e-12)

    s = dpp.sample(seed=1)
    assert len(set(s)) == len(s)
    ks = dpp.sample_kdpp(5, seed=2)
    assert len(ks) == 5 and dpp.sample_kdpp(5, seed=2) == ks

    v = dpp.conditional_marginals([3])
    assert v[3] == 0.0 and all(0.0 <= x <= 1.0 for x in v)
    mode = dpp.greedy_mode(4)
    assert mode == dpp.greedy_mode(4) and len(mode) == 4
    assert mode[0] == 0  # lowest-index corner wins the symmetric tie

    cond = dpp.condition_kernel([0])
    assert len(cond) == 15

    # attention and baselines
    a = dk.inhibitive_attention(grid, [0, 5])
    approx(sum(a), 1.0, 1e-12)
    assert dk.sample_uniform(10, 4, seed=3) == dk.sample_uniform(10, 4, seed=3)
    med = dk.kmedoids(grid, 3, seed=4)
    assert len(set(med)) == 3
    att = dk.sample_attention_only(grid, 4, seed=5)
    assert len(set(att)) == 4

    # surrogate: init, save/load round trip, masked forward, sampling
    model = dk.SurrogateModel.init("static", 16, [24], seed=6)
    q = model.forward([2, 7])
    assert q[2] == 0.0 and q[7] == 0.0
    with tempfile.TemporaryDirectory() as td:
        path = str(Path(td) / "ckpt.json")
        model.save(path)
        loaded = dk.SurrogateModel.load(path)
        assert loaded.forward([2, 7]) == q
    drawn = model.sample(6, seed=7, condition=[11])
    assert drawn[0] == 11 and len(set(drawn)) == 6
    assert model.sample_mode(6) == model.sample_mode(6)

    # a short training run moves the loss down
    trained, curve = dk.train_static(
        grid, n_paths=60, k=5, hidden=[32], epochs=4, seed=8, beta=0.5
    )
    assert len(curve) == 4 and curve[-1] < curve[0]
    mode_nll = dpp.nll(trained.sample_mode(5))
    unif_nll = sum(dpp.nll(dk.sample_uniform(16, 5, seed=100 + i)) for i in range(50)) / 50
    print(f"trained mode NLL {mode_nll:.3f} vs mean uniform NLL {unif_nll:.3f}")

    print("smoke test passed")


if __name__ == "__main__":
    main()
