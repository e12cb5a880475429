"""Tests for regularized delta kernels."""

import pytest
import numpy as np

from ibfsi.kernels import KernelKind, evaluate_1d, evaluate_2d, stencil, stencil_weights


@pytest.mark.parametrize("kind", list(KernelKind))
def test_partition_of_unity_and_first_moment(kind, rng):
    """Test that weights sum to one and have zero first moment at any offset."""
    s = rng.uniform(0.0, 1.0, 1000) + 8.0
    indices, weights = stencil_weights(kind, s, 1.0, 0.0, 0.0, 64, True)

    assert np.max(np.abs(weights.sum(axis=1) - 1.0)) <= 1e-13
    assert np.max(np.abs(np.sum(weights * (indices - s[:, None]), axis=1))) <= 1e-13


@pytest.mark.parametrize("kind, expected", [(KernelKind.SMOOTH_3PT, 0.5), (KernelKind.PESKIN_4PT, 0.375)])
def test_sum_of_squares(kind, expected, rng):
    """Test the translation-invariance condition on the squared weights."""
    s = rng.uniform(0.0, 1.0, 200) + 8.0
    _, weights = stencil_weights(kind, s, 1.0, 0.0, 0.0, 64, True)

    assert np.allclose(np.sum(weights**2, axis=1), expected, atol=1e-13)


def test_peskin_point_on_node():
    """Test the four-point weights of a point sitting on a grid node."""
    result = stencil(KernelKind.PESKIN_4PT, 0.0)

    assert [i for i, _ in result] == [-1, 0, 1, 2]
    assert np.allclose([w for _, w in result], [0.25, 0.5, 0.25, 0.0])


def test_linear_kernel_midway():
    """Test the two-point weights of a point midway between nodes."""
    result = stencil(KernelKind.PIECEWISE_LINEAR_2PT, 0.5)

    assert [i for i, _ in result] == [0, 1]
    assert np.allclose([w for _, w in result], [0.5, 0.5])


def test_three_point_symmetric_weights():
    """Test the three-point weights of a point on a node."""
    result = stencil(KernelKind.SMOOTH_3PT, 0.0)

    assert [i for i, _ in result] == [-1, 0, 1]
    assert np.allclose([w for _, w in result], [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0])


@pytest.mark.parametrize("kind", list(KernelKind))
def test_zero_outside_support(kind):
    """Test that the kernel vanishes beyond its support radius."""
    assert evaluate_1d(kind, kind.support_radius + 0.1) == 0.0
    assert evaluate_1d(kind, -(kind.support_radius + 0.1)) == 0.0
    assert evaluate_1d(kind, 0.0) > 0.0


def test_kernel_accepts_config_names():
    """Test that kernels are addressable by their config names."""
    assert KernelKind("ib4") is KernelKind.PESKIN_4PT
    assert evaluate_1d("ib2", 0.25) == pytest.approx(0.75)


def test_evaluate_2d_scaling():
    """Test the tensor-product kernel and its 1/h² scaling."""
    h = 0.1
    value = evaluate_2d(KernelKind.PESKIN_4PT, 0.0, 0.0, h)

    assert value == pytest.approx(0.25 / h**2)


def test_evaluate_2d_invalid_spacing():
    """Test that a non-positive grid spacing is rejected."""
    with pytest.raises(ValueError):
        evaluate_2d(KernelKind.PESKIN_4PT, 0.0, 0.0, 0.0)


def test_wall_clipping_renormalizes():
    """Test that off-domain weights are dropped and the rest renormalised."""
    indices, weights = stencil_weights(KernelKind.PESKIN_4PT, np.array([0.0]), 1.0, 0.0, 0.0, 8, False)

    assert weights.sum() == pytest.approx(1.0)
    assert np.all(indices >= 0)
    assert np.allclose(weights[0], [0.0, 2.0 / 3.0, 1.0 / 3.0, 0.0])


def test_periodic_indices_wrap():
    """Test that periodic stencils wrap indices into range."""
    indices, weights = stencil_weights(KernelKind.PESKIN_4PT, np.array([0.2]), 1.0, 0.0, 0.0, 8, True)

    assert set(indices[0]) == {7, 0, 1, 2}
    assert weights.sum() == pytest.approx(1.0)
