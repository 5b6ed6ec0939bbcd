"""Compare the numba and numpy backends on the hot kernels.

    python benchmarks/bench_backends.py [--n-theta 8] [--repeat 3]

Prints one line per kernel with the best wall time of each backend, the
speed-up and the max relative difference of the results.
"""
import argparse
import time

import numpy as np

from qbx3d import _backend, geometry, kernels, qbx, treecode


def best_of(f, repeat):
    out, best = None, np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = f()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases(n_theta):
    d = geometry.Domain([(geometry.sphere(1.0, (2.01 * i, 0, 0)), n_theta, n_theta)
                         for i in range(2)])
    sigma = np.cos(d.nodes[:, 0]) + d.nodes[:, 2] ** 2
    sw = sigma * d.weights
    tp = treecode.TreecodeParams()

    def direct():
        return kernels.dl_direct(d.nodes, d.nodes, d.normals, sw)

    def tree():
        t = treecode.build_tree(d, sigma, tp)
        return treecode.treecode_eval(t, d.nodes, tp)

    sd = geometry.sphere_domain(max(2, n_theta // 2))
    params = qbx.QbxParams(p=10, kappa=4, r_c=0.2, d_qbx=0.7)
    s2 = np.cos(sd.nodes[:, 0])

    def corrected():
        qbx.clear_cache()
        return qbx.corrected_eval(sd, s2, None, params)

    return [("dl_direct (N=%d)" % d.n_nodes, direct),
            ("treecode eval (N=%d)" % d.n_nodes, tree),
            ("QBX build + apply (N=%d)" % sd.n_nodes, corrected)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-theta", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _backend.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print("%-32s %12s %12s %9s %10s" % ("kernel", "numba [s]", "numpy [s]", "speed-up",
                                       "max diff"))
    for name, f in cases(args.n_theta):
        _backend.set_backend("numba")
        f()  # compile
        tn, vn = best_of(f, args.repeat)
        _backend.set_backend("numpy")
        tp, vp = best_of(f, max(1, args.repeat // 2))
        diff = np.abs(vn - vp).max() / np.abs(vp).max()
        print("%-32s %12.4f %12.4f %9.1f %10.1e" % (name, tn, tp, tp / tn, diff))
    _backend.set_backend("numba")


if __name__ == "__main__":
    main()
