import numpy as np
import pytest

from vistok.losses import (
    amplitude_loss,
    combined_loss,
    direction_loss,
    grad_check,
    relation_loss,
)

LOSSES = {"amplitude": amplitude_loss, "direction": direction_loss, "relation": relation_loss}


def test_amplitude_examples():
    assert amplitude_loss(np.array([[2.0, 2.0]]), np.array([[2.0, 2.0]])).value == 0.0
    assert amplitude_loss(np.array([[2.0, 0.0]]), np.array([[0.0, 0.0]])).value == 1.0
    # mean(|1-0|, |3-1|) = 1.5
    assert amplitude_loss(np.array([[1.0, 3.0]]), np.array([[0.0, 1.0]])).value == 1.5


def test_direction_examples():
    f = np.array([[3.0, 4.0]])
    assert direction_loss(f, f).value == 0.0
    assert direction_loss(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])).value == pytest.approx(1.0)
    assert direction_loss(np.array([[1.0, 0.0]]), np.array([[-1.0, 0.0]])).value == pytest.approx(2.0)


def test_relation_examples():
    f = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert relation_loss(f, f).value == 0.0
    # G_s = diag(0.5, 0.5); G_t = all-0.5; mean |diff| = (0 + .5 + .5 + 0)/4
    f_s = np.array([[1.0, 0.0], [0.0, 1.0]])
    f_t = np.array([[1.0, 0.0], [1.0, 0.0]])
    assert relation_loss(f_s, f_t).value == pytest.approx(0.25)


def test_zero_at_identity_tolerances():
    rng = np.random.default_rng(40)
    for _ in range(50):
        f = rng.standard_normal((6, 10)) * rng.uniform(0.01, 100)
        assert amplitude_loss(f, f).value == 0.0
        assert relation_loss(f, f).value == 0.0
        assert abs(direction_loss(f, f).value) <= 1e-12


def test_direction_per_token_scale_invariance():
    rng = np.random.default_rng(41)
    f_s = rng.standard_normal((8, 16))
    f_t = rng.standard_normal((8, 16))
    base = direction_loss(f_s, f_t).value
    for _ in range(100):
        c = rng.uniform(0.05, 20.0, size=(8, 1))
        assert abs(direction_loss(f_s * c, f_t).value - base) <= 1e-10


def test_relation_orthogonal_invariance_both_sides():
    rng = np.random.default_rng(42)
    f_s = rng.standard_normal((8, 16))
    f_t = rng.standard_normal((8, 16))
    base = relation_loss(f_s, f_t).value
    for _ in range(100):
        q, r = np.linalg.qr(rng.standard_normal((16, 16)))
        q = q * np.sign(np.diag(r))
        assert abs(relation_loss(f_s @ q, f_t).value - base) <= 1e-10
        assert abs(relation_loss(f_s, f_t @ q).value - base) <= 1e-10
    assert relation_loss(f_s, f_s @ np.linalg.qr(rng.standard_normal((16, 16)))[0]).value <= 1e-10


def test_relation_global_scale_invariance():
    rng = np.random.default_rng(43)
    f_s = rng.standard_normal((5, 7))
    f_t = rng.standard_normal((5, 7))
    base = relation_loss(f_s, f_t).value
    for s in (0.01, 0.5, 3.0, 250.0):
        assert abs(relation_loss(f_s * s, f_t).value - base) <= 1e-10
        assert abs(relation_loss(f_s, f_t * s).value - base) <= 1e-10


def test_ranges():
    rng = np.random.default_rng(44)
    for _ in range(200):
        f_s = rng.standard_normal((4, 6))
        f_t = rng.standard_normal((4, 6))
        assert amplitude_loss(f_s, f_t).value >= 0.0
        assert 0.0 <= direction_loss(f_s, f_t).value <= 2.0
        assert relation_loss(f_s, f_t).value >= 0.0


def test_shape_mismatch_and_nonfinite():
    with pytest.raises(ValueError):
        amplitude_loss(np.zeros((2, 3)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        amplitude_loss(np.array([[np.nan, 1.0]]), np.zeros((1, 2)))


def test_amplitude_subgradient_zero_at_kinks():
    f = np.array([[1.0, -2.0]])
    grad = amplitude_loss(f, f).gradient
    assert np.array_equal(grad, np.zeros((1, 2)))


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(45)
    step = 1e-5
    for _ in range(20):
        f_s = rng.standard_normal((8, 16))
        f_t = rng.standard_normal((8, 16))
        for name, fn in LOSSES.items():
            exclude = np.abs(f_s - f_t) <= 10 * step if name == "amplitude" else None
            assert grad_check(fn, f_s, f_t, step, exclude=exclude) <= 1e-4, name


def test_grad_check_catches_wrong_gradient():
    def broken(f_s, f_t):
        val = amplitude_loss(f_s, f_t)
        return type(val)(val.value, val.gradient * 2.0)

    rng = np.random.default_rng(46)
    f_s, f_t = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
    assert grad_check(broken, f_s, f_t, 1e-5) > 0.1


def test_combined_loss_weights():
    rng = np.random.default_rng(47)
    f_s, f_t = rng.standard_normal((5, 8)), rng.standard_normal((5, 8))
    a = amplitude_loss(f_s, f_t)
    d = direction_loss(f_s, f_t)
    r = relation_loss(f_s, f_t)
    c = combined_loss(f_s, f_t, w_amplitude=2.0, w_direction=0.5, w_relation=3.0)
    assert c.value == pytest.approx(2 * a.value + 0.5 * d.value + 3 * r.value)
    assert np.allclose(c.gradient, 2 * a.gradient + 0.5 * d.gradient + 3 * r.gradient)
    default = combined_loss(f_s, f_t)
    assert default.value == pytest.approx(a.value + d.value + r.value)
