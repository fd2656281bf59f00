import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ffhr import ball, scoring
from ffhr.decoders import RelationTransform
from ffhr.scoring import ScoreKind
from conftest import ball_points


def mp_hin(x, y, c):
    x = [mp.mpf(float(a)) for a in x]
    y = [mp.mpf(float(a)) for a in y]
    c = mp.mpf(c)
    xy = sum(a * b for a, b in zip(x, y))
    x2 = sum(a * a for a in x)
    y2 = sum(a * a for a in y)
    return xy / ((1 + c**2 * x2) * (1 + c**2 * y2) - 2 * c**2 * xy)


class TestHin:
    def test_orthogonal_is_zero(self):
        assert scoring.hin(np.array([0.3, 0.0]), np.array([0.0, 0.7])) == 0.0

    def test_equal_points(self):
        x = np.array([0.5, 0.0])
        assert scoring.hin(x, x) == pytest.approx(0.25 / (1.25**2 - 0.5), rel=1e-14)
        assert scoring.hin(x, x) == pytest.approx(0.235294, abs=1e-6)

    def test_origin_gives_zero(self):
        assert scoring.hin(np.zeros(3), np.array([0.1, 0.2, 0.3])) == 0.0

    def test_against_mpmath(self, rng):
        for c in (0.1, 0.5, 1.0, 2.0):
            x, y = ball_points(rng, 2, 6, c)
            assert scoring.hin(x, y, c) == pytest.approx(float(mp_hin(x, y, c)), rel=1e-13)

    def test_symmetry_and_sign(self, rng):
        x = ball_points(rng, 1000, 5)
        y = ball_points(rng, 1000, 5)
        np.testing.assert_array_equal(scoring.hin(x, y), scoring.hin(y, x))
        dots = np.sum(x * y, axis=-1)
        assert np.all(np.sign(scoring.hin(x, y)) == np.sign(dots))

    def test_denominator_positive(self, rng):
        for c in (0.25, 0.5, 1.0):
            x = ball_points(rng, 100_000, 4, c, max_norm=0.999)
            y = ball_points(rng, 100_000, 4, c, max_norm=0.999)
            xy = np.sum(x * y, -1)
            x2 = np.sum(x * x, -1)
            y2 = np.sum(y * y, -1)
            den = (1 + c * c * x2) * (1 + c * c * y2) - 2 * c * c * xy
            bound = (1 - c * c * np.sqrt(x2 * y2)) ** 2
            assert np.all(den >= bound - 1e-12)
            assert np.all(den > 0)

    def test_small_curvature_limit(self, rng):
        x = ball_points(rng, 200, 5)
        y = ball_points(rng, 200, 5)
        dot = np.sum(x * y, axis=-1)
        errs = [np.max(np.abs(scoring.hin(x, y, c) - dot)) for c in (1e-1, 1e-2, 1e-3, 1e-4)]
        assert all(a > b for a, b in zip(errs, errs[1:]))
        for a, b in zip(errs[1:], errs[2:]):
            assert a / b >= 10.0
        # quadratic convergence: the error scales like K c^2
        k = errs[-1] / 1e-8
        assert k < 10

    def test_bounded_at_unit_curvature(self, rng):
        x = ball_points(rng, 50_000, 3, max_norm=0.9999)
        y = ball_points(rng, 50_000, 3, max_norm=0.9999)
        h = scoring.hin(x, y)
        assert h.max() <= 0.5 and h.min() >= -0.5


class TestTangentInner:
    def test_origin(self):
        assert scoring.tangent_inner(np.zeros(2), np.array([0.3, 0.4])) == 0.0

    def test_equal_points(self):
        x = np.array([0.5, 0.0])
        assert scoring.tangent_inner(x, x) == pytest.approx(float(mp.atanh(0.5) ** 2), rel=1e-14)
        assert scoring.tangent_inner(x, x) == pytest.approx(0.301737, abs=1e-6)

    def test_opposite_is_negative(self):
        x = np.array([0.3, 0.4])
        y = -0.5 * x
        want = -math.atanh(0.5) * math.atanh(0.25)
        assert scoring.tangent_inner(x, y) == pytest.approx(want, rel=1e-13)


KINDS = list(ScoreKind)


class TestScoreTriple:
    def test_identity_hin(self, rng):
        eh, et = ball_points(rng, 2, 4)
        t = RelationTransform("full", np.eye(4).ravel())
        assert scoring.score_triple(eh, t, et, "hin") == pytest.approx(scoring.hin(eh, et), rel=1e-12)

    def test_distance_maximal_at_image(self, rng):
        eh, other = ball_points(rng, 2, 4)
        t = RelationTransform("full", rng.normal(size=16) * 0.5)
        image = t.apply(eh)
        s_self = scoring.score_triple(eh, t, image, "hyperbolic_distance")
        assert s_self == pytest.approx(0.0, abs=1e-12)
        assert scoring.score_triple(eh, t, other, "hyperbolic_distance") < s_self

    def test_distmult_ones_small_curvature(self, rng):
        eh, et = ball_points(rng, 2, 4)
        t = RelationTransform("diagonal", np.ones(4))
        s = scoring.score_triple(eh, t, et, "hin", c=1e-4)
        assert s == pytest.approx(float(eh @ et), abs=1e-6)

    def test_euclidean_identity_is_dot(self, rng):
        eh, et = rng.normal(size=(2, 6))
        t = RelationTransform("diagonal", np.ones(6))
        assert scoring.score_triple(eh, t, et, "euclidean_inner") == pytest.approx(float(eh @ et), rel=1e-14)

    @pytest.mark.parametrize("kind", KINDS)
    def test_score_all_matches_pairwise(self, rng, kind):
        q = ball_points(rng, 5, 4)
        ents = ball_points(rng, 7, 4)
        full = scoring.score_all(q, ents, kind)
        want = scoring.score_pair(q[:, None, :], ents[None, :, :], kind)
        np.testing.assert_allclose(full, want, rtol=1e-9, atol=1e-9)

    def test_default_kind(self):
        assert scoring.default_kind("hyperbolic") is ScoreKind.HIN
        assert scoring.default_kind("euclidean") is ScoreKind.EUCLIDEAN_INNER

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            scoring.score_pair(np.zeros(2), np.zeros(2), "cosine")


small = st.floats(-0.5, 0.5, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(
    x=arrays(np.float64, 3, elements=small),
    y=arrays(np.float64, 3, elements=small),
    c=st.floats(0.05, 1.0),
)
def test_hin_properties(x, y, c):
    h = scoring.hin(x, y, c)
    assert h == scoring.hin(y, x, c)
    if abs(x @ y) > 1e-12:
        assert np.sign(h) == np.sign(x @ y)
    assert abs(h) <= abs(x @ y) / (1 - c * c * np.linalg.norm(x) * np.linalg.norm(y)) ** 2 + 1e-15
