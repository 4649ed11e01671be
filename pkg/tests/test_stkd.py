import numpy as np
import pytest

from tcgl import numcore as nc
from tcgl.stkd import dct_spectrum, stkd_residual


def frames(*values):
    return np.array(values, dtype=np.float64).reshape(1, len(values), 1, 1)


def test_two_frame_spectrum():
    spec = dct_spectrum(frames(1.0, 3.0))
    assert spec[0, :, 0, 0].tolist() == pytest.approx([4.0, -2.0], abs=1e-12)


def test_three_frame_bands():
    a, b, c = 0.7, -1.3, 2.1
    spec = dct_spectrum(frames(a, b, c))[0, :, 0, 0]
    assert abs(spec[1] - (a - b / 2 - c / 2)) < 1e-12
    assert abs(spec[2] - (a - b / 2 - c / 2)) < 1e-12
    assert abs(spec[0] - (a + b + c)) < 1e-12


def test_constant_video():
    v = np.full((2, 5, 3, 3), 0.4)
    assert np.abs(dct_spectrum(v)[:, 1:]).max() < 1e-12
    assert np.array_equal(stkd_residual(v).data, np.zeros_like(v))


def test_residual_examples():
    assert stkd_residual(frames(1.0, 3.0)).data.ravel().tolist() == [-1.0, 1.0]
    a, b, c = 0.2, 0.9, -0.5
    assert abs(stkd_residual(frames(a, b, c)).data.ravel()[0] - (a - (a + b + c) / 3)) < 1e-15


@pytest.mark.parametrize("length", range(2, 9))
def test_spectral_identity(length):
    rng = np.random.default_rng(length)
    for _ in range(10):
        v = rng.uniform(0, 1, (2, length, 4, 3))
        lhs = dct_spectrum(v)[:, 1:].sum(axis=1)
        rhs = length * stkd_residual(v).data[:, 0]
        assert np.abs(lhs - rhs).max() < 1e-9


def test_zero_mean_linearity_idempotence():
    rng = np.random.default_rng(0)
    v1, v2 = rng.standard_normal((2, 3, 6, 4, 4))
    r1, r2 = stkd_residual(v1).data, stkd_residual(v2).data
    assert np.abs(r1.mean(axis=1)).max() < 1e-12
    assert np.abs(stkd_residual(2.5 * v1 - 0.3 * v2).data - (2.5 * r1 - 0.3 * r2)).max() < 1e-9
    assert np.abs(stkd_residual(r1).data - r1).max() < 1e-12


def test_batched_input_uses_the_frame_axis():
    v = np.random.default_rng(1).standard_normal((4, 2, 5, 3, 3))
    out = stkd_residual(v).data
    assert np.allclose(out, v - v.mean(axis=2, keepdims=True))


def test_gradient():
    v = np.random.default_rng(2).standard_normal((1, 4, 2, 2))
    assert nc.grad_check(lambda x: nc.sum(nc.exp(stkd_residual(x))), v) < 1e-4
