import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from srepcc.entropy import gaussian, octree
from srepcc.entropy.rangecoder import AdaptiveModel, StaticModel, range_decode, range_encode
from srepcc.errors import DecodeError, EncodeError

MANY = settings(max_examples=1000)


def _cross_entropy_bits(symbols, model):
    f = np.asarray(model.freqs, dtype=np.float64)
    return float(-np.log2(f[symbols] / model.total).sum())


# -- range coder ---------------------------------------------------------------


@MANY
@given(st.lists(st.integers(1, 500), min_size=1, max_size=40), st.data())
def test_range_coder_round_trip_static(freqs, data):
    model = StaticModel(freqs)
    syms = data.draw(st.lists(st.integers(0, len(freqs) - 1), max_size=200))
    enc = range_encode(syms, model)
    assert range_decode(enc, model, len(syms)) == syms


@MANY
@given(st.lists(st.integers(0, 255), max_size=300))
def test_range_coder_round_trip_adaptive(syms):
    enc = range_encode(syms, AdaptiveModel())
    assert range_decode(enc, AdaptiveModel(), len(syms)) == syms


def test_uniform_bytes_length():
    syms = np.random.default_rng(0).integers(0, 256, 1000).tolist()
    model = StaticModel([1] * 256)
    enc = range_encode(syms, model)
    assert abs(len(enc) - 1000) <= 4
    assert range_decode(enc, model, 1000) == syms


def test_empty_stream():
    enc = range_encode([], StaticModel([1, 1]))
    assert len(enc) <= 8
    assert range_decode(enc, StaticModel([1, 1]), 0) == []


def test_skewed_binary_source():
    rng = np.random.default_rng(1)
    syms = (rng.random(10_000) > 0.95).astype(int).tolist()
    model = StaticModel([950, 50])
    enc = range_encode(syms, model)
    h = -(0.95 * np.log2(0.95) + 0.05 * np.log2(0.05))
    assert abs(len(enc) - 10_000 * h / 8) <= 0.05 * 10_000 * h / 8
    assert range_decode(enc, model, 10_000) == syms


def test_adaptive_model_halving():
    m = AdaptiveModel()
    for _ in range(2000):
        m._update(3)
        assert m.total < m.limit
        assert m.total == sum(m.freqs) and min(m.freqs) >= 1


@pytest.mark.parametrize("n", [10_000, 20_000])
def test_coded_length_near_cross_entropy(n):
    rng = np.random.default_rng(n)
    freqs = rng.integers(1, 2000, 64)
    model = StaticModel(freqs)
    syms = rng.choice(64, n, p=freqs / freqs.sum())
    enc = range_encode(syms.tolist(), model)
    ce = _cross_entropy_bits(syms, model)
    assert abs(8 * len(enc) - ce) <= 0.07 * ce


def test_truncated_stream_raises():
    syms = np.random.default_rng(2).integers(0, 256, 2000).tolist()
    model = StaticModel([1] * 256)
    enc = range_encode(syms, model)
    with pytest.raises(DecodeError):
        range_decode(enc[: len(enc) // 2], model, len(syms))


def test_bad_model_tables():
    with pytest.raises(ValueError):
        StaticModel([1, 0])
    with pytest.raises(ValueError):
        StaticModel([1 << 16, 1])


# -- Gaussian conditional ------------------------------------------------------


def test_gaussian_tables():
    for sigma in (0.04, 0.5, 3.0, 256.0):
        f = gaussian.quantized_pmf(sigma)
        assert f.sum() == 1 << 16 and f.min() >= 1 and len(f) == 2 * gaussian.WINDOW + 2
    lv = gaussian.scale_levels()
    assert np.isclose(lv[0], 0.04) and np.isclose(lv[-1], 256.0)
    assert gaussian.scale_index(1e-9) == 0 and gaussian.scale_index(1e9) == gaussian.NUM_LEVELS - 1


@MANY
@given(
    st.integers(0, 12).flatmap(
        lambda n: st.tuples(
            hnp.arrays(np.int64, (n, 3), elements=st.integers(-300, 300)),
            hnp.arrays(np.float64, (n, 3), elements=st.floats(0.01, 300.0)),
        )
    )
)
def test_latent_round_trip(rs):
    r, sigma = rs
    enc = gaussian.encode_residuals(r, sigma)
    assert np.array_equal(gaussian.decode_residuals(enc, sigma, r.shape), r)


@MANY
@given(st.integers(1, 6).flatmap(
    lambda c: st.tuples(
        hnp.arrays(np.int64, st.tuples(st.integers(0, 15), st.just(c)), elements=st.integers(-40, 40)),
        hnp.arrays(np.float32, (c,), elements=st.floats(0.0625, 256.0, width=32)),
    )
))
def test_hyper_round_trip(zs):
    z, scales = zs
    enc = gaussian.encode_hyper(z, scales)
    assert np.array_equal(gaussian.decode_hyper(enc, scales, len(z)), z)


def test_latent_mean_and_step():
    rng = np.random.default_rng(3)
    y = rng.normal(scale=4, size=(50, 4))
    mu = rng.normal(size=(50, 4))
    for qs in (1.0, 0.5, 2.0):
        data, r = gaussian.encode_latents(y, mu, 1.5, qs)
        assert np.array_equal(r, np.floor(y / qs - mu + 0.5))
        y_hat, r2 = gaussian.decode_latents(data, mu, 1.5, qs)
        assert np.array_equal(r, r2) and np.allclose(y_hat, (r + mu) * qs)
        assert np.max(np.abs(y_hat - y)) <= qs / 2 + 1e-9


def test_zero_stream_small():
    r = np.zeros((2000, 4), dtype=np.int64)
    enc = gaussian.encode_residuals(r, 0.04)
    assert 8 * len(enc) <= r.size / 8
    assert len(gaussian.encode_hyper(np.zeros((2000, 4), dtype=np.int64), np.full(4, 0.04))) * 8 <= 1000


def test_escape_path():
    w = gaussian.WINDOW
    r = np.array([[w], [w + 1], [-w - 1], [-w], [10 ** 6], [-(10 ** 6)], [0]])
    for sigma in (0.04, 2.0):
        enc = gaussian.encode_residuals(r, sigma)
        assert np.array_equal(gaussian.decode_residuals(enc, sigma, r.shape), r)
    z = np.array([[w + 1, -w - 5]])
    assert np.array_equal(gaussian.decode_hyper(gaussian.encode_hyper(z, [1.0, 1.0]), [1.0, 1.0], 1), z)


@pytest.mark.parametrize("sigma", [2.0, 0.7, 8.0])
def test_latent_length_near_cross_entropy(sigma):
    rng = np.random.default_rng(int(sigma * 10))
    r = np.rint(rng.normal(scale=sigma, size=(5000, 4))).astype(np.int64)
    enc = gaussian.encode_residuals(r, sigma)
    ce = gaussian.model_bits(r, sigma)
    assert abs(8 * len(enc) - ce) <= 0.07 * ce


def test_hyper_length_near_cross_entropy():
    rng = np.random.default_rng(4)
    scales = np.array([0.5, 1.0, 2.0, 4.0])
    z = np.rint(rng.normal(size=(3000, 4)) * scales).astype(np.int64)
    enc = gaussian.encode_hyper(z, scales)
    ce = gaussian.model_bits(z, scales[None, :])
    assert abs(8 * len(enc) - ce) <= 0.07 * ce


# -- octree ----------------------------------------------------------------------


def test_octree_examples():
    assert octree.occupancy_bytes([[0, 0, 0]], 8) == [1, 1, 1]
    full = np.array(np.meshgrid(*[range(4)] * 3, indexing="ij")).reshape(3, -1).T
    assert set(octree.occupancy_bytes(full, 4)) == {0xFF}
    pts = np.unique(np.random.default_rng(5).integers(0, 64, (500, 3)), axis=0)
    enc = octree.octree_encode(pts, 64)
    back = octree.octree_decode(enc, 64)
    assert {tuple(p) for p in back} == {tuple(p) for p in pts}
    assert 8 * len(enc) <= 500 * 18


def test_octree_errors():
    with pytest.raises(EncodeError):
        octree.octree_encode([[8, 0, 0]], 8)
    with pytest.raises(EncodeError):
        octree.octree_encode([[0, 0, 0]], 6)


@MANY
@given(st.sampled_from([1, 2, 4, 8, 16, 32]).flatmap(
    lambda e: st.tuples(st.just(e), hnp.arrays(np.int64, st.tuples(st.integers(1, 60), st.just(3)),
                                               elements=st.integers(0, e - 1)))
))
def test_octree_round_trip_morton_order(case):
    from srepcc import morton

    extent, pts = case
    uniq = morton.sort_unique(pts)[0]
    back = octree.octree_decode(octree.octree_encode(pts, extent), extent)
    assert np.array_equal(back, uniq)
