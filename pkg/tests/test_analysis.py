import numpy as np

from srepcc import codec
from srepcc.analysis import (
    channel_mask, channel_variance_analysis, channel_variances, encode_dataset, masked_reconstruction,
    saturation_point,
)
from srepcc.training.data import generate_training_blocks


def test_mask_selection_and_clamping():
    var = np.array([0.1, 3.0, 2.0, 0.5])
    assert channel_mask(var, 2).tolist() == [0, 1, 1, 0]
    assert channel_mask(var, 99).tolist() == [1, 1, 1, 1]
    assert channel_mask(var, -1).sum() == 0


def test_full_mask_is_bit_identical_to_plain_decode(toy_model):
    blocks = generate_training_blocks("mixed", 4, 32, seed=9)
    enc = encode_dataset(toy_model, blocks)
    var = channel_variances(toy_model, blocks, encoded=enc)
    scales = codec.hyper_scales_f32(toy_model)
    mask = channel_mask(var, toy_model.cfg.latent_channels)
    for item in enc:
        b, rec = item[0], item[1]
        plain = codec.decode_block(rec, toy_model, 32, 1.0, scales)
        masked = codec.decode_block(rec, toy_model, 32, 1.0, scales, channel_mask=mask)
        assert plain == masked
        assert masked_reconstruction(toy_model, item, mask) == plain


def test_curve_endpoints(toy_model):
    blocks = generate_training_blocks("mixed", 3, 32, seed=10)
    curve = channel_variance_analysis(toy_model, blocks, [0, 16, 40])
    assert [n for n, _, _ in curve] == [0, 16, 40]
    assert curve[1][1:] == curve[2][1:]
    assert curve[0][1] < curve[1][1]
    assert saturation_point(curve) <= 16
