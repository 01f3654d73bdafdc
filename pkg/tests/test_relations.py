import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctxprop.errors import TooFewObjects
from ctxprop.geometry import Box3D, Object3D
from ctxprop.relations import (
    Frame,
    PoseMode,
    RelationConfig,
    apply_relations,
    compute_pairwise,
    elongation_fold,
    scene_relations,
)

CC = RelationConfig(Frame.CC, PoseMode.FULL)
OC = RelationConfig(Frame.OC, PoseMode.FULL)
coords = st.floats(-40, 40)
angles = st.floats(-math.pi, math.pi)


def obj(x, z, theta=0.0):
    return Object3D(Box3D(x, z, 3.9, 1.6, 1.5, theta))


def rigid(o, psi, tx, tz):
    """Turn the scene by psi (headings grow by psi) and shift it."""
    b = o.box
    c, s = math.cos(psi), math.sin(psi)
    # a heading theta points along (cos theta, -sin theta); rotate locations the same way
    x = b.x * c + b.z * s + tx
    z = -b.x * s + b.z * c + tz
    return obj(x, z, b.theta + psi)


class TestElongationFold:
    @pytest.mark.parametrize("t,expected", [(0.0, 0.0), (math.pi, 0.0), (5 * math.pi / 4, math.pi / 4)])
    def test_examples(self, t, expected):
        assert elongation_fold(t) == pytest.approx(expected, abs=1e-12)

    @given(st.floats(-20, 20))
    def test_idempotent_and_periodic(self, t):
        f = elongation_fold(t)
        assert 0.0 <= f < math.pi
        assert elongation_fold(f) == f
        assert math.isclose(elongation_fold(t + math.pi), f, abs_tol=1e-9) or math.isclose(
            abs(elongation_fold(t + math.pi) - f), math.pi, abs_tol=1e-9
        )


class TestComputePairwise:
    def test_cc_example(self):
        r = compute_pairwise(obj(0, 5, 0), obj(2, 9, math.pi / 2), CC)
        assert r.as_tuple() == pytest.approx((2, 4, math.pi / 2))

    def test_oc_identity_at_zero_heading(self):
        a, b = obj(1, 5, 0.0), obj(-2, 11, 1.0)
        assert compute_pairwise(a, b, OC).as_tuple() == pytest.approx(compute_pairwise(a, b, CC).as_tuple())

    def test_oc_half_turn_negates(self):
        a, b = obj(1, 5, math.pi), obj(-2, 11, 1.0)
        cc = compute_pairwise(a, b, CC)
        oc = compute_pairwise(a, b, OC)
        assert (oc.r_x, oc.r_z) == pytest.approx((-cc.r_x, -cc.r_z))
        assert oc.r_theta == pytest.approx(cc.r_theta)

    def test_oc_offset_along_heading(self):
        # a car one length ahead along its own heading sits at +r_x
        t = 0.7
        a = obj(0.0, 10.0, t)
        b = obj(4.0 * math.cos(t), 10.0 - 4.0 * math.sin(t), t)
        assert compute_pairwise(a, b, OC).as_tuple() == pytest.approx((4.0, 0.0, 0.0), abs=1e-12)

    def test_elongation_relative_pose(self):
        cfg = RelationConfig(Frame.CC, PoseMode.ELONGATION)
        r = compute_pairwise(obj(0, 5, math.pi / 2), obj(0, 9, -math.pi / 2), cfg)
        assert r.r_theta == pytest.approx(0.0, abs=1e-12)

    def test_same_object(self):
        a = obj(0, 5)
        with pytest.raises(ValueError):
            compute_pairwise(a, a, CC)

    @given(coords, coords, coords, coords, coords, coords)
    def test_cc_translation_covariant(self, x1, z1, x2, z2, tx, tz):
        r = compute_pairwise(obj(x1, z1), obj(x2, z2), CC)
        s = compute_pairwise(obj(x1 + tx, z1 + tz), obj(x2 + tx, z2 + tz), CC)
        assert (s.r_x, s.r_z) == pytest.approx((r.r_x, r.r_z), abs=1e-9)

    @given(coords, coords, coords, coords)
    def test_cc_antisymmetric(self, x1, z1, x2, z2):
        a, b = obj(x1, z1), obj(x2, z2)
        ab, ba = compute_pairwise(a, b, CC), compute_pairwise(b, a, CC)
        assert (ba.r_x, ba.r_z) == (-ab.r_x, -ab.r_z)

    @given(coords, coords, angles, coords, coords, angles, angles, coords, coords)
    def test_oc_rigid_invariant(self, x1, z1, t1, x2, z2, t2, psi, tx, tz):
        a, b = obj(x1, z1, t1), obj(x2, z2, t2)
        r = compute_pairwise(a, b, OC)
        s = compute_pairwise(rigid(a, psi, tx, tz), rigid(b, psi, tx, tz), OC)
        assert (s.r_x, s.r_z) == pytest.approx((r.r_x, r.r_z), abs=1e-7)
        d = math.remainder(s.r_theta - r.r_theta, 2 * math.pi)
        assert abs(d) < 1e-9


class TestSceneRelations:
    @pytest.mark.parametrize("n", [2, 5])
    def test_counts(self, n):
        objs = [obj(i, 5 + i) for i in range(n)]
        rels = scene_relations(objs, CC)
        assert len(rels) == n * (n - 1)
        assert [i for i, _ in rels].count(0) == n - 1

    def test_too_few(self):
        with pytest.raises(TooFewObjects):
            scene_relations([obj(0, 5)], CC)


class TestApplyRelations:
    @pytest.mark.parametrize("frame", list(Frame))
    @pytest.mark.parametrize("mode", list(PoseMode))
    @given(coords, coords, angles, coords, coords, angles)
    def test_inverse_of_compute(self, frame, mode, x1, z1, t1, x2, z2, t2):
        cfg = RelationConfig(frame, mode)
        a, b = obj(x1, z1, t1), obj(x2, z2, t2)
        r = compute_pairwise(a, b, cfg)
        x, z, t = apply_relations(a.box.x, a.box.z, a.box.theta, [r.as_tuple()], cfg)
        assert (x[0], z[0]) == pytest.approx((x2, z2), abs=1e-7)
        if mode is PoseMode.FULL:
            assert abs(math.remainder(t[0] - b.box.theta, 2 * math.pi)) < 1e-9
        else:
            d = abs(t[0] - elongation_fold(b.box.theta))
            assert min(d, math.pi - d) < 1e-9

    def test_vectorised(self):
        x, z, t = apply_relations(0.0, 10.0, 0.0, np.array([[3.0, 0.0, 0.0], [0.0, 8.0, math.pi]]), CC)
        assert x.tolist() == [3.0, 0.0]
        assert z.tolist() == [10.0, 18.0]
        assert t[1] == pytest.approx(math.pi)
