import json
import os
import subprocess
import sys

import numpy as np
from numpy.testing import assert_allclose

import lgmi

SCRIPT = """
import json, numpy as np, lgmi
from lgmi.lgde import LgdeOptions, lgde_density_at_samples
data = np.random.default_rng(7).normal(size=(60, 2))
data[:, 1] += 0.6 * data[:, 0]
s = lgmi.SampleSet(data)
full = lgde_density_at_samples(s)
cut = lgde_density_at_samples(s, LgdeOptions(truncation_k=15))
print(json.dumps({"backend": lgmi.backend(), "full": full.log_density.tolist(),
                  "cut": cut.log_density.tolist(), "status": full.status.tolist()}))
"""


def run(disable):
    env = dict(os.environ)
    env.pop("LGMI_DISABLE_NUMBA", None)
    if disable:
        env["LGMI_DISABLE_NUMBA"] = "1"
    res = subprocess.run([sys.executable, "-c", SCRIPT], capture_output=True, text=True, env=env, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def test_backend_flag_and_parity():
    fast, slow = run(False), run(True)
    assert slow["backend"] == "numpy"
    assert fast["backend"] == ("numba" if lgmi.backend() == "numba" else "numpy")
    # summation order differs between backends; the optimizer's stopping
    # tolerance, not rounding, sets how closely the fits agree
    assert_allclose(fast["full"], slow["full"], rtol=1e-6)
    assert_allclose(fast["cut"], slow["cut"], rtol=1e-6)
    assert fast["status"] == slow["status"]
    assert np.all(np.isfinite(fast["full"]))
