import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from topobetti.activations import (STACKED_SINE_WIDTH, ActivationKind, activation_eval, activation_grad,
                                   parse_activation)

C = STACKED_SINE_WIDTH
S = math.sin(C)


def closed_form(x: float) -> float:
    if x < 0:
        return 0.0
    k = math.floor(x / C)
    return k * S + math.sin(x - k * C)


class TestStackedSine:

    @pytest.mark.parametrize("x, expected", [
        (0.0, 0.0),
        (math.pi / 2, 1.0),
        (3 * math.pi / 4, math.sqrt(2) / 2),
        (-5.0, 0.0),
    ])
    def test_values(self, x, expected):
        assert activation_eval("stacked_sine", x) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("x, expected", [(math.pi / 2, 0.0), (0.0, 1.0), (-1.0, 0.0)])
    def test_gradient(self, x, expected):
        assert activation_grad("stacked_sine", x) == pytest.approx(expected, abs=1e-12)

    def test_matches_closed_form_on_grid(self):
        grid = np.linspace(-10.0, 20.0, 10_000)
        values = activation_eval("stacked_sine", grid)
        expected = np.array([closed_form(x) for x in grid])
        assert np.max(np.abs(values - expected)) <= 1e-12

    @pytest.mark.parametrize("k", range(1, 11))
    def test_continuous_at_knots(self, k):
        knot = k * C
        assert abs(activation_eval("stacked_sine", knot - 1e-9) - activation_eval("stacked_sine", knot)) < 1e-7

    def test_envelope_strictly_increasing(self):
        envelope = [activation_eval("stacked_sine", k * C) for k in range(12)]
        assert all(b > a for a, b in zip(envelope, envelope[1:]))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 20), st.floats(0.0, 1.0, exclude_min=True, exclude_max=True))
    def test_many_to_one_within_segment(self, k, fraction):
        t = S + fraction * (1.0 - S)
        if not S < t < 1.0:
            return
        rising, falling = math.asin(t), math.pi - math.asin(t)
        assert 0.0 < rising < math.pi / 2 < falling < C
        y1 = activation_eval("stacked_sine", k * C + rising)
        y2 = activation_eval("stacked_sine", k * C + falling)
        assert y1 == pytest.approx(k * S + t, abs=1e-9)
        assert y2 == pytest.approx(k * S + t, abs=1e-9)

    def test_hyphenated_name(self):
        assert parse_activation("stacked-sine") == ActivationKind("stacked_sine")


class TestLegacy:

    def test_relu(self):
        assert activation_eval("relu", -2.0) == 0.0
        assert activation_eval("relu", 2.0) == 2.0
        assert activation_grad("relu", 0.0) == 0.0

    def test_leaky_relu(self):
        kind = parse_activation("leaky_relu(0.2)")
        assert kind.alpha == 0.2
        assert activation_eval(kind, -1.0) == pytest.approx(-0.2)
        assert activation_grad(kind, -1.0) == pytest.approx(0.2)

    def test_sigmoid_is_stable(self):
        values = activation_eval("sigmoid", np.array([-800.0, 0.0, 800.0]))
        assert values.tolist() == [0.0, 0.5, 1.0]

    @pytest.mark.parametrize("text", ["swish", "leaky_relu(1.5)", "relu(2)", "stacked_sine(-1)"])
    def test_rejects_bad_kinds(self, text):
        with pytest.raises(ValueError):
            parse_activation(text)

    def test_array_shape_is_preserved(self):
        x = np.linspace(-3, 3, 12).reshape(3, 4)
        assert activation_eval("tanh", x).shape == (3, 4)


@pytest.mark.parametrize("name", ["relu", "leaky_relu", "sigmoid", "tanh", "stacked_sine"])
def test_gradient_matches_central_difference(name):
    rng = np.random.default_rng(0)
    x = rng.uniform(-5.0, 12.0, size=500)
    # stay away from kinks at 0 and at the stacked-sine knots
    knots = np.concatenate([[0.0], np.arange(1, 20) * C])
    x = x[np.min(np.abs(x[:, None] - knots[None, :]), axis=1) > 1e-3]
    h = 1e-5
    numeric = (activation_eval(name, x + h) - activation_eval(name, x - h)) / (2 * h)
    np.testing.assert_allclose(activation_grad(name, x), numeric, rtol=1e-4, atol=1e-6)
