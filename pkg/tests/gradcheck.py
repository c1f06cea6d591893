"""Central finite-difference check of the training gradients."""

import numpy as np

from otalign.embedding import GraphInputs, ModelParams, forward_cache
from otalign.training import loss_gradients

from conftest import random_pair

STEP = 1e-4
TOLERANCE = 1e-3


def random_instance(rng, n_max=15):
    n1, n2 = rng.integers(8, n_max + 1, size=2)
    dim = int(rng.integers(2, 9))
    kg = random_pair(rng, n1=n1, n2=n2, r1=3, r2=3, t1=2 * n1, t2=2 * n2, dim=dim)
    params = ModelParams.init(dim, rng)
    # nonzero biases so no coordinate sits on a symmetric point
    params.b1 = 0.1 * rng.standard_normal(dim)
    params.b_gate2 = params.b_gate2 + 0.1 * rng.standard_normal(dim)
    params.b_gate3 = params.b_gate3 + 0.1 * rng.standard_normal(dim)
    n_pairs = int(rng.integers(3, 7))
    pairs = np.stack([rng.choice(n1, n_pairs, replace=False),
                      rng.choice(n2, n_pairs, replace=False)], axis=1)
    k = 3
    negatives = np.array([rng.choice(np.setdiff1d(np.arange(n2), [j]), k, replace=False)
                          for j in pairs[:, 1]])
    rel = rng.uniform(0.1, 1.0, n_pairs)
    gamma = float(dim)  # roughly the typical L1 gap, so both hinge branches occur
    return GraphInputs.from_pair(kg), params, pairs, rel, negatives, gamma


def _pattern(inputs, params, pairs, negatives, gamma):
    """Every branch choice of the piecewise-linear parts of the loss."""
    cache = forward_cache(inputs, params)
    n1 = inputs.n1
    emb = cache.h3
    src = pairs[:, 0]
    pos = emb[src] - emb[n1 + pairs[:, 1]]
    neg = emb[src][:, None] - emb[n1 + negatives]
    margins = np.abs(pos).sum(1)[:, None] - np.abs(neg).sum(2) + gamma
    parts = [cache.pre1 > 0, np.sign(pos), np.sign(neg), margins > 0]
    parts += [layer[2] > 0 for layer in cache.layers]
    return [p.copy() for p in parts]


def _same(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def check_gradients(inputs, params, pairs, rel, negatives, gamma):
    """Return (worst relative error, checked coordinates, skipped coordinates).

    Coordinates whose +-STEP perturbation flips a ReLU, sign or hinge branch
    sit next to a kink and are skipped.
    """
    loss, grads = loss_gradients(inputs, params, pairs, rel, negatives, gamma)
    worst, checked, skipped = 0.0, 0, 0
    for name, value in params.items():
        analytic = getattr(grads, name)
        for idx in np.ndindex(value.shape):
            evals, patterns = [], []
            for delta in (STEP, -STEP):
                p = params.copy()
                getattr(p, name)[idx] += delta
                evals.append(loss_gradients(inputs, p, pairs, rel, negatives, gamma)[0])
                patterns.append(_pattern(inputs, p, pairs, negatives, gamma))
            if not _same(patterns[0], patterns[1]):
                skipped += 1
                continue
            fd = (evals[0] - evals[1]) / (2 * STEP)
            a = analytic[idx]
            err = abs(a - fd) / max(abs(a), abs(fd), 1e-6)
            worst = max(worst, err)
            checked += 1
    return worst, checked, skipped
