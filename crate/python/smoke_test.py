"""Smoke test for the lpsumm_py extension.

Build it with `cargo build --release -p lpsumm-python`, then copy
`target/release/liblpsumm_py.so` to `lpsumm_py.so` somewhere on PYTHONPATH
(this script also looks in `target/release` and `target/debug`).
"""

import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load():
    try:
        import lpsumm_py
        return lpsumm_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = os.path.join(ROOT, "target", profile, "liblpsumm_py.so")
        if os.path.exists(lib):
            tmp = tempfile.mkdtemp()
            shutil.copy(lib, os.path.join(tmp, "lpsumm_py.so"))
            sys.path.insert(0, tmp)
            import lpsumm_py
            return lpsumm_py
    sys.exit("lpsumm_py not found; build it with cargo build -p lpsumm-python")


def close(a, b, tol=1e-8):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def main():
    m = load()

    x, b, planted = m.generate("augmented-identity", n=200, d=3, k=2, seed=1)
    assert len(x) == 200 and len(x[0]) == 5 and len(planted) == 2

    f = m.well_conditioned_basis(x, p="2", basis="orth")
    assert close(f["alpha"], 5 ** 0.5) and f["beta"] == 1.0

    lev = m.leverage_scores(x, p="2", basis="orth", tau=0.5)
    assert close(lev["scores_summary"]["sum"], 5.0)
    assert all(i in lev["kept_indices"] for i in planted)

    st = m.high_leverage_rows(x, tau=0.5, block=20)
    assert all(i in st["kept_indices"] for i in planted)

    t, trace, dist = m.subspace_embedding(x, p="1", gamma=0.5)
    assert len(t) <= len(x) and trace and dist >= 1.0

    a = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
    sol = m.regress(a, [1.0, 1.0, 2.0], p="2")
    assert close(sol["x"][0], 1.0) and close(sol["x"][1], 1.0) and sol["objective"] < 1e-9
    sol = m.regress([[1.0], [1.0]], [0.0, 2.0], p="inf")
    assert close(sol["x"][0], 1.0) and close(sol["objective"], 1.0)

    xs, bs, _ = m.generate("gaussian", n=300, d=3, noise=0.01, seed=2)
    res = m.linf_stream(xs, bs, eps=0.2, block=30)
    exact = m.regress(xs, bs, p="inf")
    assert res["objective"] <= exact["objective"] + 1e-9 and res["certified_gap"] > 0

    r1 = [[(1 + 0.1 * i) * v for v in (1.0, -2.0, 0.5)] for i in range(20)]
    left, right, meta = m.l1_lowrank(r1, k=1)
    assert len(left) == 20 and len(right) == 1 and meta["l1_error"] < 1e-8

    triples, bound = m.amm([[1.0, 0.0], [0.0, 2.0]], [[1.0, 0.0], [0.0, 2.0]], 0.1)
    assert sorted(triples) == [(0, 0, 1.0), (1, 1, 4.0)] and bound >= 0

    try:
        m.regress([[1.0]], [1.0], p="0.5")
    except m.LpsummError:
        pass
    else:
        raise AssertionError("p < 1 must be rejected")

    print("lpsumm_py smoke test passed")


if __name__ == "__main__":
    main()
