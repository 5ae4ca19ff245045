"""Pure-Python (numpy) versions of the hot loops.

Mirrors ``_kernels.pyx`` function for function. Used when the compiled
extension is not built or when ``MEML_BANDITS_PURE_PYTHON=1`` is set.
"""

import math

import numpy as np


def refresh_inverse(gram, lam, inv):
    d = gram.shape[0]
    inv[...] = np.linalg.inv(lam * np.eye(d) + gram)


def rank_one_update(gram, inv, resp, x, y):
    """Add (x, y) to the sufficient statistics; Sherman-Morrison on ``inv``."""
    gram += np.outer(x, x)
    resp += y * x
    u = inv @ x
    denom = 1.0 + x @ u
    inv -= np.outer(u, u) / denom


def ucb_argmax(actions, center, inv, radius):
    means = actions @ center
    widths = np.sqrt(np.maximum(np.einsum("ki,ij,kj->k", actions, inv, actions), 0.0))
    scores = means + radius * widths
    # np.argmax returns the first maximal index
    idx = int(np.argmax(scores))
    return idx, float(scores[idx])


def play_rounds(actions, noise, theta, bias, forced, gram, inv, resp,
                lam, R, L, delta, bias_distance, count, refresh_every,
                chosen, rewards, regret):
    """Run ``len(noise)`` rounds in place; return the updated sample count.

    ``forced[t] >= 0`` plays that arm; ``-1`` plays the optimistic arm of the
    biased ellipsoid.
    """
    n_rounds, _, d = actions.shape
    sqrt_lam = math.sqrt(lam)
    for t in range(n_rounds):
        arms = actions[t]
        if forced[t] >= 0:
            k = int(forced[t])
        else:
            center = inv @ (resp - gram @ bias) + bias
            radius = R * math.sqrt(d * math.log((1.0 + count * L * L / lam) / delta)) \
                + sqrt_lam * bias_distance
            k, _ = ucb_argmax(arms, center, inv, radius)
        expected = arms @ theta
        x = arms[k]
        y = float(expected[k]) + float(noise[t])
        rank_one_update(gram, inv, resp, x, y)
        count += 1
        if refresh_every > 0 and count % refresh_every == 0:
            refresh_inverse(gram, lam, inv)
        chosen[t] = k
        rewards[t] = y
        regret[t] = float(expected.max()) - float(expected[k])
    return count
