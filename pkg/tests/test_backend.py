import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meml_bandits import BACKEND, _kernels_py

compiled = pytest.importorskip("meml_bandits._kernels")


def _inputs(seed, T, K, d, forced_share):
    rng = np.random.default_rng(seed)
    actions = rng.normal(size=(T, K, d))
    actions /= np.linalg.norm(actions, axis=2, keepdims=True)
    forced = np.where(rng.uniform(size=T) < forced_share, rng.integers(0, K, size=T), -1)
    return (np.ascontiguousarray(actions), rng.normal(0, 0.1, size=T), rng.normal(size=d),
            rng.normal(size=d), forced.astype(np.int64))


def _run(mod, inputs, lam, refresh):
    actions, noise, theta, bias, forced = inputs
    T, _, d = actions.shape
    gram, inv, resp = np.zeros((d, d)), np.eye(d) / lam, np.zeros(d)
    chosen, rewards, regret = np.empty(T, np.int64), np.empty(T), np.empty(T)
    count = mod.play_rounds(actions, noise, theta, bias, forced, gram, inv, resp, lam, 0.1, 1.0,
                            0.05, 0.7, 0, refresh, chosen, rewards, regret)
    return count, chosen, rewards, regret, inv, resp


class TestBackendEquivalence:
    def test_compiled_selected(self):
        assert BACKEND == "cython"

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 80), st.integers(1, 12), st.integers(1, 6),
           st.floats(0.1, 50.0), st.sampled_from([0.0, 0.3, 1.0]), st.sampled_from([0, 7, 256]))
    def test_play_rounds_agree(self, seed, T, K, d, lam, share, refresh):
        inputs = _inputs(seed, T, K, d, share)
        a = _run(_kernels_py, inputs, lam, refresh)
        b = _run(compiled, inputs, lam, refresh)
        assert a[0] == b[0] == T
        np.testing.assert_array_equal(a[1], b[1])
        for x, y in zip(a[2:], b[2:]):
            np.testing.assert_allclose(x, y, rtol=1e-9, atol=1e-10)

    def test_ucb_argmax_ties(self):
        arms = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 0.5]])
        for mod in (_kernels_py, compiled):
            idx, score = mod.ucb_argmax(arms, np.zeros(2), np.eye(2), 1.0)
            assert idx == 0 and score == pytest.approx(1.0)

    def test_refresh_singular_raises(self):
        for mod in (_kernels_py, compiled):
            with pytest.raises(np.linalg.LinAlgError):
                mod.refresh_inverse(np.zeros((2, 2)), 0.0, np.empty((2, 2)))

    def test_rank_one_update_agrees(self, rng):
        outs = []
        for mod in (_kernels_py, compiled):
            gram, inv, resp = np.zeros((3, 3)), np.eye(3), np.zeros(3)
            r = np.random.default_rng(0)
            for _ in range(50):
                mod.rank_one_update(gram, inv, resp, r.normal(size=3), float(r.normal()))
            outs.append((gram, inv, resp))
        for x, y in zip(*outs):
            np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-14)


def test_pure_python_switch():
    import subprocess
    import sys
    code = "import meml_bandits; print(meml_bandits.BACKEND)"
    env = {"MEML_BANDITS_PURE_PYTHON": "1", "PATH": ""}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"
