import os
import unittest

import numpy as np

from fairpls.recipe import DATA_DIR_ENV

data_path = os.path.abspath(
    os.path.join(os.path.dirname(__file__), "test_data"))


def datafile(name):
    path = os.path.join(data_path, name)
    if not os.path.exists(path):
        raise Exception(
            ("The path %r could not be located in the test suite's data package." % (path, )) +
            "If you are NOT running the test suite, you should not"
            " be using this function.")
    return path


def centered(values):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    return values - values.mean(axis=0)


def random_problem(seed, n=50, d=8, m=1, noise=0.5):
    """Centered ``X``, ``Y`` and a binary ``S`` with a group shift on the first features."""
    rng = np.random.default_rng(seed)
    s = (rng.random(n) < 0.5).astype(np.float64)
    s[:2] = (0, 1)
    X = rng.standard_normal((n, d))
    X[:, : max(1, d // 2)] += s[:, None]
    beta = rng.standard_normal((d, m))
    Y = X @ beta + noise * rng.standard_normal((n, m))
    return centered(X), centered(Y), centered(s), s


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), np.finfo(float).tiny))


def sign_aligned(a, b):
    """``a`` with its sign flipped to match ``b``."""
    return a if float(np.dot(a, b)) >= 0 else -a


def requires_real_data(*files):
    """Skip unless ``FAIRPLS_DATA_DIR`` names a directory holding ``files``."""
    data_dir = os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        return unittest.skip(f"{DATA_DIR_ENV} is not set")
    missing = [f for f in files if not os.path.exists(os.path.join(data_dir, f))]
    if missing:
        return unittest.skip(f"{missing} not found in {data_dir}")
    return lambda func: func
