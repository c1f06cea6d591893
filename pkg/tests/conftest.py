import numpy as np
import pytest

from otalign import _kernels_py, kernels
from otalign.kg import KgPair, KnowledgeGraph

BACKENDS = [pytest.param(_kernels_py, id="python")]
if kernels.compiled_backend is not None:
    BACKENDS.append(pytest.param(kernels.compiled_backend, id="compiled"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def random_graph(rng, n, n_rel, n_trip):
    rows = set()
    while len(rows) < n_trip:
        h, t = rng.integers(n, size=2)
        if h != t:
            rows.add((int(h), int(rng.integers(n_rel)), int(t)))
    return KnowledgeGraph(n, n_rel, np.array(sorted(rows)).reshape(-1, 3))


def random_pair(rng, n1=12, n2=10, r1=3, r2=4, t1=20, t2=16, dim=4) -> KgPair:
    g1 = random_graph(rng, n1, r1, t1)
    g2 = random_graph(rng, n2, r2, t2)
    return KgPair(g1, g2, rng.standard_normal((n1 + n2, dim)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
