import numpy as np
import pytest

from zipfagree import kernels
from zipfagree.kernels import _pykernels

BACKENDS = [kernels.get_backend(n) for n in kernels.available_backends()]
BACKEND_IDS = kernels.available_backends()


def _tol(dtype):
    return dict(rtol=2e-5, atol=1e-6) if dtype == np.float32 \
        else dict(rtol=1e-12, atol=1e-14)


@pytest.fixture(params=[np.float32, np.float64], ids=["f32", "f64"])
def dtype(request):
    return request.param


@pytest.mark.parametrize("backend", BACKENDS, ids=BACKEND_IDS)
class TestKernelSemantics:
    def test_layernorm_normalizes(self, backend, dtype, rng):
        x = rng.standard_normal((8, 32)).astype(dtype)
        g = rng.standard_normal(32).astype(dtype)
        b = rng.standard_normal(32).astype(dtype)
        y, mean, rstd = backend.layernorm_fwd(x, g, b)
        xhat = (y - b) / g
        assert np.allclose(xhat.mean(axis=1), 0, atol=1e-5)
        assert np.allclose(xhat.std(axis=1), 1, atol=1e-3)
        assert mean.dtype == dtype and y.dtype == dtype

    def test_gelu_known_values(self, backend, dtype):
        x = np.array([0.0, 1.0, -1.0, 3.0], dtype=dtype)
        y = backend.gelu_fwd(x)
        # tanh approximation reference points
        assert y[0] == 0.0
        assert y[1] == pytest.approx(0.841192, abs=1e-5)
        assert y[2] == pytest.approx(-0.158808, abs=1e-5)
        assert y[3] == pytest.approx(2.996363, abs=1e-5)

    def test_causal_softmax_rows(self, backend, dtype, rng):
        s = rng.standard_normal((6, 5, 5)).astype(dtype)
        p = backend.causal_softmax_fwd(s)
        for i in range(5):
            assert np.allclose(p[:, i, :i + 1].sum(axis=1), 1, atol=1e-5)
            assert np.all(p[:, i, i + 1:] == 0.0)

    def test_softmax_xent_matches_manual(self, backend, dtype, rng):
        logits = rng.standard_normal((7, 11)).astype(dtype)
        targets = rng.integers(0, 11, 7)
        valid = np.array([1, 1, 0, 1, 1, 1, 0], dtype=bool)
        nll, dlogits = backend.softmax_xent(logits, targets, valid)
        probs = np.exp(logits.astype(np.float64))
        probs /= probs.sum(axis=1, keepdims=True)
        expect = -np.log(probs[np.arange(7), targets])
        assert np.allclose(nll[valid], expect[valid], rtol=1e-5)
        assert np.all(nll[~valid] == 0)
        assert np.all(dlogits[~valid] == 0)
        expect_grad = probs.copy()
        expect_grad[np.arange(7), targets] -= 1
        assert np.allclose(dlogits[valid], expect_grad[valid], atol=1e-5)

    def test_softmax_xent_nograd(self, backend, dtype, rng):
        logits = rng.standard_normal((4, 9)).astype(dtype)
        targets = rng.integers(0, 9, 4)
        valid = np.ones(4, dtype=bool)
        nll1, d = backend.softmax_xent(logits, targets, valid,
                                       want_grad=False)
        assert d is None
        nll2, _ = backend.softmax_xent(logits, targets, valid)
        assert np.allclose(nll1, nll2, **_tol(dtype))

    def test_adamw_first_step_formula(self, backend, dtype):
        # hand-evaluated update: w=1, g=1, lr=0.1 -> w' = 1 - 0.1/(1+eps)
        p = np.array([1.0], dtype=dtype)
        g = np.array([1.0], dtype=dtype)
        m = np.zeros(1, dtype=dtype)
        v = np.zeros(1, dtype=dtype)
        backend.adamw_step(p, g, m, v, 1, 0.1, 0.9, 0.95, 1e-8, 0.0)
        assert p[0] == pytest.approx(1.0 - 0.1 / (1 + 1e-8), abs=1e-6)

    def test_adamw_zero_grad_cases(self, backend, dtype):
        p = np.array([2.0], dtype=dtype)
        zeros = np.zeros(1, dtype=dtype)
        backend.adamw_step(p, zeros.copy(), zeros.copy(), zeros.copy(),
                           1, 0.1, 0.9, 0.95, 1e-8, 0.0)
        assert p[0] == 2.0
        backend.adamw_step(p, zeros.copy(), zeros.copy(), zeros.copy(),
                           1, 0.0006, 0.9, 0.95, 1e-8, 0.1)
        assert p[0] == pytest.approx(2.0 * (1 - 0.0006 * 0.1), rel=1e-9)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend unavailable")
class TestBackendAgreement:
    def test_all_kernels_agree(self, dtype, rng):
        cy = kernels.get_backend("cython")
        x = rng.standard_normal((16, 48)).astype(dtype)
        g = rng.standard_normal(48).astype(dtype)
        b = rng.standard_normal(48).astype(dtype)
        dy = rng.standard_normal((16, 48)).astype(dtype)
        tol = _tol(dtype)

        y1, m1, r1 = _pykernels.layernorm_fwd(x, g, b)
        y2, m2, r2 = cy.layernorm_fwd(x, g, b)
        np.testing.assert_allclose(y1, y2, **tol)
        np.testing.assert_allclose(m1, m2, **tol)
        np.testing.assert_allclose(r1, r2, **tol)
        for a1, a2 in zip(_pykernels.layernorm_bwd(dy, x, g, m1, r1),
                          cy.layernorm_bwd(dy, x, g, m2, r2)):
            np.testing.assert_allclose(a1, a2, **tol)

        np.testing.assert_allclose(_pykernels.gelu_fwd(x), cy.gelu_fwd(x),
                                   **tol)
        np.testing.assert_allclose(_pykernels.gelu_bwd(x, dy),
                                   cy.gelu_bwd(x, dy), **tol)

        s = rng.standard_normal((8, 7, 7)).astype(dtype)
        ds = rng.standard_normal((8, 7, 7)).astype(dtype)
        p1 = _pykernels.causal_softmax_fwd(s)
        p2 = cy.causal_softmax_fwd(s)
        np.testing.assert_allclose(p1, p2, **tol)
        np.testing.assert_allclose(_pykernels.causal_softmax_bwd(p1, ds),
                                   cy.causal_softmax_bwd(p2, ds), **tol)

        logits = rng.standard_normal((10, 23)).astype(dtype)
        targets = rng.integers(0, 23, 10)
        valid = rng.random(10) > 0.2
        n1, d1 = _pykernels.softmax_xent(logits, targets, valid)
        n2, d2 = cy.softmax_xent(logits, targets, valid)
        np.testing.assert_allclose(n1, n2, **tol)
        np.testing.assert_allclose(d1, d2, **tol)

    def test_adamw_agrees_over_trajectory(self, dtype, rng):
        cy = kernels.get_backend("cython")
        shape = (37,)
        p1 = rng.standard_normal(shape).astype(dtype)
        p2 = p1.copy()
        m1 = np.zeros(shape, dtype=dtype); v1 = np.zeros(shape, dtype=dtype)
        m2 = np.zeros(shape, dtype=dtype); v2 = np.zeros(shape, dtype=dtype)
        for step in range(1, 6):
            g = rng.standard_normal(shape).astype(dtype)
            _pykernels.adamw_step(p1, g, m1, v1, step, 6e-4, 0.9, 0.999,
                                  1e-8, 0.1)
            cy.adamw_step(p2, g, m2, v2, step, 6e-4, 0.9, 0.999, 1e-8, 0.1)
        np.testing.assert_allclose(p1, p2, **_tol(dtype))
