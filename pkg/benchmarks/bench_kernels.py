"""Compare the compiled and pure-Python kernels on the hot inner-loop calls.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. Reports the
median time per call for each backend and the speedup, and checks that both
backends agree.
"""

import argparse
import timeit

import numpy as np

from handforce.hand_model import load_hand
from handforce.kernels import BACKENDS
from handforce.plant import initial_state


def _inputs(seed=0):
    hand = load_hand()
    rng = np.random.default_rng(seed)
    q = rng.uniform(hand.joint_lower, hand.joint_upper).reshape(hand.m, hand.n)
    fk_args = (*hand._packed, q)
    ang = np.radians([0, 90, 180, 270])
    anchors = np.column_stack([0.03 * np.cos(ang), 0.03 * np.sin(ang), [0.01, -0.01, 0.01, -0.01]])
    normals = anchors * [1, 1, 0] / 0.03
    st = initial_state(np.array([0, 0, 0.1]), np.eye(3), anchors, normals)
    tips = st.contact_points() - 0.002 * normals + rng.normal(0, 3e-4, (4, 3))
    k = np.tile([500.0, 500.0, 111.0], (4, 1))
    cw_args = (st.object_position, st.object_rotation, st.anchors, st.frames, tips, k, 0.65, np.array([0, 0, -0.52]))
    return fk_args, cw_args


def bench(repeat=7, number=2000):
    fk_args, cw_args = _inputs()
    rows = []
    results = {}
    for name, mod in BACKENDS.items():
        for fn, args in (("hand_fk", fk_args), ("contact_wrench", cw_args)):
            call = getattr(mod, fn)
            times = timeit.repeat(lambda: call(*args), repeat=repeat, number=number)
            rows.append((fn, name, np.median(times) / number))
            results[(fn, name)] = call(*args)
    for fn in ("hand_fk", "contact_wrench"):
        if (fn, "compiled") in results:
            a, b = results[(fn, "python")], results[(fn, "compiled")]
            gap = max(float(np.max(np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))) for x, y in zip(a, b))
            print(f"{fn}: max backend disagreement {gap:.2e}")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--number", type=int, default=2000)
    args = ap.parse_args()
    rows = bench(args.repeat, args.number)
    print(f"{'kernel':<16}{'backend':<10}{'us/call':>10}")
    per = {}
    for fn, name, t in rows:
        per[(fn, name)] = t
        print(f"{fn:<16}{name:<10}{t * 1e6:>10.2f}")
    for fn in ("hand_fk", "contact_wrench"):
        if (fn, "compiled") in per:
            print(f"{fn} speedup: {per[(fn, 'python')] / per[(fn, 'compiled')]:.1f}x")
    if "compiled" not in BACKENDS:
        print("compiled extension not built; only the python backend was timed")


if __name__ == "__main__":
    main()
