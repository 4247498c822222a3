"""Time the numeric kernels under the numba and pure-numpy backends.

The backend is fixed at import time, so each one runs in its own interpreter
with TSRT_DISABLE_NUMBA set accordingly.

    python3 benchmarks/bench_kernels.py [--size 200000] [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, timeit
import numpy as np
from tsrt import kernels
from tsrt.clockmodel import ErrorModel, sample_estimation_errors

size, repeat = int(sys.argv[1]), int(sys.argv[2])
xs = np.linspace(0.0, 6.0, size)
eo, es = sample_estimation_errors(ErrorModel(16.67e-6, 1.58e-6), 1, rng_seed=0, size=size)
ps = np.geomspace(1e-12, 0.5, 200)

# one call first so compile time is reported apart from steady state
t0 = timeit.default_timer()
kernels.erfc_array(xs[:10]); kernels.erfc_inv(1e-3, 1e-15); kernels.exceedance_count(eo[:10], es[:10], 1.0, 1.0)
warmup = timeit.default_timer() - t0

def best(fn):
    return min(timeit.repeat(fn, number=1, repeat=repeat))

out = {
    "backend": kernels.backend(),
    "warmup_s": warmup,
    "erfc_array_s": best(lambda: kernels.erfc_array(xs)),
    "erfc_inv_x200_s": best(lambda: [kernels.erfc_inv(float(p), 1e-15) for p in ps]),
    "exceedance_count_s": best(lambda: kernels.exceedance_count(eo, es, 1924.0, 10e-3)),
}
print(json.dumps(out))
"""


def run(flag, size, repeat):
    env = dict(os.environ, TSRT_DISABLE_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", WORKER, str(size), str(repeat)],
                         capture_output=True, text=True, env=env, check=True)
    return json.loads(res.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    jit, ref = run("0", args.size, args.repeat), run("1", args.size, args.repeat)
    keys = [k for k in jit if k.endswith("_s")]
    print(f"{'kernel':<22}{jit['backend']:>12}{ref['backend']:>12}{'speedup':>10}")
    for k in keys:
        speedup = ref[k] / jit[k] if jit[k] > 0 else float("inf")
        print(f"{k:<22}{jit[k]:>12.4g}{ref[k]:>12.4g}{speedup:>10.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
