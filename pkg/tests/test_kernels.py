"""Both kernel backends agree and the env flag selects the fallback."""

import os
import subprocess
import sys

import numpy as np
import pytest

from soelkit import kernels


rng = np.random.default_rng(0)
CASES = [
    (rng.normal(size=(40, 3)), rng.normal(size=(25, 3))),
    (rng.normal(size=(1, 5)), rng.normal(size=(1, 5))),
]


@pytest.mark.parametrize("a,b", CASES)
def test_pairwise_backends_agree(a, b):
    ref = kernels.pairwise_sq_dists_numpy(a, b)
    got = kernels.pairwise_sq_dists(a, b)
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)


def test_sq_dists_to_point_backends_agree():
    pts = rng.normal(size=(60, 4))
    p = rng.normal(size=4)
    np.testing.assert_allclose(
        kernels.sq_dists_to_point(pts, p),
        kernels.sq_dists_to_point_numpy(pts, p),
        rtol=1e-12)


def test_kde_backends_agree():
    support = np.sort(rng.normal(size=80))
    x = rng.normal(size=30)
    np.testing.assert_allclose(
        kernels.gaussian_kde_eval(support, 0.37, x),
        kernels.gaussian_kde_eval_numpy(support, 0.37, x),
        rtol=1e-12)


def test_maxmin_backends_agree():
    outer = rng.normal(size=(30, 2))
    inner = rng.normal(size=(7, 2))
    assert kernels.maxmin_sq_dist(outer, inner) == pytest.approx(
        kernels.maxmin_sq_dist_numpy(outer, inner), rel=1e-12)


def test_pairwise_diagonal_zero():
    a = rng.normal(size=(10, 3))
    d = kernels.pairwise_sq_dists(a, a)
    np.testing.assert_allclose(np.diag(d), 0.0, atol=1e-9)
    assert np.all(d >= 0.0)


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, SOELKIT_NO_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c",
         "from soelkit import kernels; print(kernels.ACTIVE_BACKEND)"],
        capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "numpy"


def test_backends_give_same_pipeline_results():
    """The alpha estimate agrees across backends at tight tolerance."""
    code = (
        "import numpy as np, soelkit as sk\n"
        "rng = np.random.default_rng(5)\n"
        "scores = rng.normal(size=300)\n"
        "q = rng.choice(300, 40, replace=False)\n"
        "labels = (scores[q] > 1).astype(float)\n"
        "est = sk.estimate_alpha(scores, scores[q], labels)\n"
        "print(repr(est.alpha_hat))\n"
    )
    vals = {}
    for flag in ("0", "1"):
        env = dict(os.environ, SOELKIT_NO_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code],
                             capture_output=True, text=True, env=env, check=True)
        vals[flag] = float(out.stdout.strip())
    assert vals["0"] == pytest.approx(vals["1"], rel=1e-10)
