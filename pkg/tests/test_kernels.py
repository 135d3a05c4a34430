import random
import subprocess
import sys

import numpy as np
import pytest

from rhem import kernels
from rhem.events import Event
from rhem.statistics import StatState, parse_catalog

CAT = parse_catalog("sub_rep:1-4, prior_succ:1-3, closure, succ_disparity, num_collab, "
                    "num_collab_succ, num_auth")

needs_cython = pytest.mark.skipif("cython" not in kernels.available_backends(),
                                  reason="compiled kernels not built")


def replay(backend, events, half_life):
    s = StatState("n", half_life=half_life, backend=backend)
    for i, (t, h, y) in enumerate(events):
        s.advance([Event(f"e{i}", t, "n", h, None, y)])
    return s


@needs_cython
@pytest.mark.parametrize("half_life", [None, 3.5])
def test_backends_bit_identical(half_life):
    rng = random.Random(5)
    actors = [f"a{i}" for i in range(40)]
    events = [(float(i // 3), tuple(rng.sample(actors, rng.randint(1, 7))), rng.gauss(0, 2))
              for i in range(400)]
    queries = [tuple(rng.sample(actors, rng.randint(1, 6))) for _ in range(200)]
    a = replay("python", events, half_life).evaluate(queries, CAT, 200.0)
    b = replay("cython", events, half_life).evaluate(queries, CAT, 200.0)
    assert np.array_equal(a, b)


def test_pure_python_switch():
    code = "import rhem.kernels as k; print(k.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env={"RHEM_PURE_PYTHON": "1", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises((KeyError, ValueError)):
        StatState(backend="fortran")
