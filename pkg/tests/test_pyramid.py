import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from inspyre.errors import InvalidArgument
from inspyre.pyramid import (
    GaussianKernel2D,
    LaplacianDecomposition,
    decompose,
    expand,
    make_gaussian_kernel,
    reconstruct,
    reduce,
)

from oracles import expand_oracle, gaussian_kernel_bruteforce, hybrid_pyramid, reduce_oracle

K = make_gaussian_kernel(7, 1.0)


def rand_map(rng, h, w):
    return torch.from_numpy(rng.random((h, w)).astype(np.float32))


class TestKernel:
    def test_default_normalized(self):
        assert K.weights.shape == (7, 7)
        assert abs(K.weights.sum() - 1.0) < 1e-7
        assert abs(K.tensor().sum().item() - 1.0) < 1e-6

    def test_symmetry_and_separability(self):
        w = K.weights
        np.testing.assert_allclose(w, w[::-1, :])
        np.testing.assert_allclose(w, w[:, ::-1])
        np.testing.assert_allclose(w, w.T)
        g = w.sum(axis=1)
        np.testing.assert_allclose(w, np.outer(g, g), atol=1e-15)

    def test_flat_limit(self):
        k = make_gaussian_kernel(3, 1e6)
        np.testing.assert_allclose(k.weights, np.full((3, 3), 1 / 9), atol=1e-9)

    def test_matches_direct_2d_evaluation(self):
        k = make_gaussian_kernel(5, 1.0)
        oracle = gaussian_kernel_bruteforce(5, 1.0)
        assert k.weights[2, 2] == pytest.approx(oracle[2, 2], abs=1e-12)
        np.testing.assert_allclose(k.weights, oracle, atol=1e-12)

    @pytest.mark.parametrize("size,sigma", [(4, 1.0), (1, 1.0), (-3, 1.0), (5, 0.0), (5, -1.0)])
    def test_invalid(self, size, sigma):
        with pytest.raises(InvalidArgument):
            make_gaussian_kernel(size, sigma)


class TestReduce:
    @pytest.mark.parametrize("shape", [(8, 8), (9, 13), (2, 2), (3, 5)])
    def test_constant(self, shape):
        out = reduce(torch.full(shape, 0.37), K)
        assert out.shape == ((shape[0] + 1) // 2, (shape[1] + 1) // 2)
        assert torch.allclose(out, torch.tensor(0.37), atol=1e-6)

    def test_matches_oracle(self):
        rng = np.random.default_rng(1)
        x = rand_map(rng, 8, 8)
        np.testing.assert_allclose(reduce(x, K).numpy(), reduce_oracle(x.numpy(), K.weights), atol=1e-6)

    def test_corner_impulse(self):
        x = torch.zeros(8, 8)
        x[0, 0] = 1.0
        out = reduce(x, K)
        # pixel (0,0) is reached from offsets m in {0} only (reflect excludes the edge)
        expected = reduce_oracle(x.numpy(), K.weights)[0, 0]
        assert out[0, 0].item() == pytest.approx(expected, abs=1e-7)
        assert expected == pytest.approx(K.weights[3, 3], abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(InvalidArgument):
            reduce(torch.zeros(1, 1), K)

    def test_batched_channels(self):
        rng = np.random.default_rng(2)
        x = torch.from_numpy(rng.random((2, 3, 10, 12)).astype(np.float32))
        out = reduce(x, K)
        assert out.shape == (2, 3, 5, 6)
        np.testing.assert_allclose(
            out[1, 2].numpy(), reduce_oracle(x[1, 2].numpy(), K.weights), atol=1e-6
        )


class TestExpand:
    @pytest.mark.parametrize("shape", [(4, 4), (5, 7)])
    def test_constant_polyphase_gain(self, shape):
        # the 7-tap sigma=1 kernel splits its mass 0.5071 / 0.4929 between even
        # and odd taps, so a constant comes back with a fixed 2x2 gain pattern
        g = K.weights.sum(axis=1)
        even, odd = g[1::2].sum(), g[::2].sum()
        out = expand(torch.full(shape, 0.61), K)
        assert out.shape == (2 * shape[0], 2 * shape[1])
        interior = out[4:-4, 4:-4] if min(shape) > 4 else out
        assert interior[0::2, 0::2].numpy() == pytest.approx(0.61 * 4 * even * even, abs=1e-6)
        assert interior[1::2, 1::2].numpy() == pytest.approx(0.61 * 4 * odd * odd, abs=1e-6)
        assert interior[0::2, 1::2].numpy() == pytest.approx(0.61 * 4 * even * odd, abs=1e-6)
        assert out.mean().item() == pytest.approx(0.61, abs=2e-3)

    def test_constant_with_balanced_kernel(self):
        # [1, 2, 1] / 4 splits its mass evenly between phases
        w = np.outer([0.25, 0.5, 0.25], [0.25, 0.5, 0.25])
        balanced = GaussianKernel2D(3, 1.0, w)
        out = expand(torch.full((5, 6), 0.3), balanced)
        assert torch.allclose(out, torch.tensor(0.3), atol=1e-6)

    def test_matches_oracle(self):
        rng = np.random.default_rng(3)
        x = rand_map(rng, 4, 4)
        np.testing.assert_allclose(expand(x, K).numpy(), expand_oracle(x.numpy(), K.weights), atol=1e-6)

    def test_impulse_mass(self):
        x = torch.zeros(5, 5)
        x[2, 2] = 1.0
        out = expand(x, K)
        assert out.shape == (10, 10)
        oracle = expand_oracle(x.numpy(), K.weights)
        # impulse lands at (4, 4); its 7x7 footprint fits inside 10x10 so no mass folds away
        assert out.sum().item() == pytest.approx(oracle.sum(), abs=1e-5)
        assert oracle.sum() == pytest.approx(4 * K.weights.sum(), abs=1e-9)


class TestDecompose:
    def test_single_level(self):
        rng = np.random.default_rng(4)
        x = rand_map(rng, 16, 16)
        d = decompose(x, 1, K)
        torch.testing.assert_close(d.base, reduce(x, K))
        torch.testing.assert_close(d.levels[0], x - expand(reduce(x, K), K))

    def test_round_trip(self):
        rng = np.random.default_rng(5)
        for _ in range(3):
            x = rand_map(rng, 64, 64)
            d = decompose(x, 3, K)
            assert [t.shape for t in d.levels] == [(64, 64), (32, 32), (16, 16)]
            assert d.base.shape == (8, 8)
            assert (reconstruct(d, K) - x).abs().max().item() <= 1e-5

    def test_round_trip_odd(self):
        rng = np.random.default_rng(6)
        x = rand_map(rng, 37, 23)
        d = decompose(x, 3, K)
        assert d.base.shape == (5, 3)
        assert (reconstruct(d, K) - x).abs().max().item() <= 1e-5

    def test_constant_base_and_ripple_details(self):
        x = torch.full((32, 32), 0.25)
        d = decompose(x, 3, K)
        assert torch.allclose(d.base, torch.tensor(0.25), atol=1e-6)
        # details hold only the EXPAND gain ripple, which reconstruction cancels
        for lvl in d.levels:
            assert lvl.abs().max().item() <= 0.25 * 0.03
        assert (reconstruct(d, K) - x).abs().max().item() <= 1e-6

    def test_too_many_levels(self):
        with pytest.raises(InvalidArgument):
            decompose(torch.zeros(8, 8), 4, K)
        with pytest.raises(InvalidArgument):
            decompose(torch.zeros(8, 8), 0, K)


class TestReconstruct:
    def test_zero_details(self):
        base = torch.rand(4, 4, generator=torch.Generator().manual_seed(0))
        d = LaplacianDecomposition([torch.zeros(16, 16), torch.zeros(8, 8)], base)
        torch.testing.assert_close(reconstruct(d, K), expand(expand(base, K), K))

    def test_dimension_mismatch(self):
        d = LaplacianDecomposition([torch.zeros(16, 16)], torch.zeros(4, 4))
        with pytest.raises(InvalidArgument):
            reconstruct(d, K)

    def test_hybrid_matches_independent_script(self):
        rng = np.random.default_rng(7)
        a, b = rand_map(rng, 16, 16), rand_map(rng, 16, 16)
        da, db = decompose(a, 2, K), decompose(b, 2, K)
        hybrid = reconstruct(LaplacianDecomposition(da.levels, db.base), K)
        oracle = hybrid_pyramid(a.numpy(), b.numpy(), 2, K.weights)
        np.testing.assert_allclose(hybrid.numpy(), oracle, atol=1e-5)


@settings(max_examples=30, deadline=None)
@given(
    h=st.integers(2, 20),
    w=st.integers(2, 20),
    a=st.floats(-3, 3),
    b=st.floats(-3, 3),
    seed=st.integers(0, 2**16),
)
def test_linearity(h, w, a, b, seed):
    g = torch.Generator().manual_seed(seed)
    x, y = torch.rand(h, w, generator=g), torch.rand(h, w, generator=g)
    torch.testing.assert_close(reduce(a * x + b * y, K), a * reduce(x, K) + b * reduce(y, K), atol=1e-5, rtol=1e-5)
    torch.testing.assert_close(expand(a * x + b * y, K), a * expand(x, K) + b * expand(y, K), atol=1e-5, rtol=1e-5)


@settings(max_examples=30, deadline=None)
@given(h=st.integers(2, 40), w=st.integers(2, 40))
def test_dimension_contract(h, w):
    x = torch.zeros(h, w)
    assert reduce(x, K).shape == ((h + 1) // 2, (w + 1) // 2)
    assert expand(x, K).shape == (2 * h, 2 * w)


def test_gradients_flow():
    x = torch.rand(1, 1, 8, 8, dtype=torch.float64, requires_grad=True)
    k = make_gaussian_kernel(7, 1.0)
    assert torch.autograd.gradcheck(lambda t: expand(reduce(t, k), k), (x,))
