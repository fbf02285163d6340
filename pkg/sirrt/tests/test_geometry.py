"""
Test kinematics and distance primitives.
"""

import math
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from sirrt.geometry import (Aabb, Capsule, Joint, RobotModel, Sphere, aabb_of, aabb_overlap, bundled_robot,
                            capsule_capsule_collides, capsule_sphere_collides, forward_kinematics,
                            forward_kinematics_batch, interpolate_configurations, link_segments,
                            point_segment_distance, segment_segment_distance, self_collides)


coords = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)
points = st.tuples(coords, coords, coords)


def _matrix_chain_fk(model, q):
    """independent 4x4 homogeneous product of the same chain"""
    def homog(rot=None, trans=None):
        m = np.eye(4)
        if rot is not None:
            m[:3, :3] = rot
        if trans is not None:
            m[:3, 3] = trans
        return m

    frame = homog(Rotation.from_rotvec(model.base_axis / np.linalg.norm(model.base_axis) * model.base_angle).as_matrix(),
                  model.base_translation)
    out = []
    for i in range(model.joint_count):
        frame = frame @ homog(rot=Rotation.from_rotvec(model.axes[i] * q[i]).as_matrix())
        a = frame @ np.append(model.link_a[i], 1.0)
        b = frame @ np.append(model.link_b[i], 1.0)
        out.append((a[:3], b[:3]))
        frame = frame @ homog(trans=model.translations[i])
    return out


def _ternary_segment_distance(a0, a1, b0, b1, steps=120):
    """convex 1-D search over the first segment's parameter"""
    (a0, a1) = (np.asarray(a0, dtype=float), np.asarray(a1, dtype=float))

    def f(s):
        return point_segment_distance(a0 + (a1 - a0) * s, b0, b1)

    (lo, hi) = (0.0, 1.0)
    for _ in range(steps):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if f(m1) <= f(m2):
            hi = m2
        else:
            lo = m1
    return min(f(lo), f(hi), f(0.0), f(1.0))


class ForwardKinematicsChecks(unittest.TestCase):

    def test_rest_pose_stacks_links(self):
        model = RobotModel([Joint((0, 0, 1), (0, 0, 0.5), (-math.pi, math.pi))] * 2,
                           [Capsule((0, 0, 0), (0, 0, 0.5), 0.05)] * 2)
        caps = forward_kinematics(model, [0.0, 0.0])
        expected = [((0, 0, 0), (0, 0, 0.5)), ((0, 0, 0.5), (0, 0, 1.0))]
        for (cap, (a, b)) in zip(caps, expected):
            self.assertTrue(np.array_equal(cap.a, a), msg="link start %s != %s" % (cap.a, a))
            self.assertTrue(np.array_equal(cap.b, b), msg="link end %s != %s" % (cap.b, b))


    def test_quarter_turn(self):
        model = RobotModel([Joint((0, 0, 1), (1, 0, 0), (-math.pi, math.pi))], [Capsule((0, 0, 0), (1, 0, 0), 0.1)])
        cap = forward_kinematics(model, [math.pi / 2])[0]
        np.testing.assert_allclose(cap.a, (0, 0, 0), atol=1e-12)
        np.testing.assert_allclose(cap.b, (0, 1, 0), atol=1e-12)
        self.assertEqual(cap.radius, 0.1)


    def test_matches_matrix_chain(self):
        model = bundled_robot()
        rng = np.random.default_rng(7)
        for _ in range(50):
            q = rng.uniform(model.lower, model.upper)
            caps = forward_kinematics(model, q)
            for (cap, (a, b)) in zip(caps, _matrix_chain_fk(model, q)):
                self.assertLess(np.linalg.norm(cap.a - a), 1e-9, msg="start mismatch at q=%s" % (q))
                self.assertLess(np.linalg.norm(cap.b - b), 1e-9, msg="end mismatch at q=%s" % (q))


    def test_rotated_base(self):
        joints = [Joint((0, 0, 1), (1, 0, 0), (-math.pi, math.pi)), Joint((0, 1, 0), (0.5, 0, 0), (-1, 1))]
        links = [Capsule((0, 0, 0), (1, 0, 0), 0.1), Capsule((0, 0, 0), (0.5, 0, 0), 0.1)]
        model = RobotModel(joints, links, base_translation=(1, 2, 3), base_axis=(1, 1, 0), base_angle=0.7)
        q = np.array([0.3, -0.4])
        for (cap, (a, b)) in zip(forward_kinematics(model, q), _matrix_chain_fk(model, q)):
            np.testing.assert_allclose(cap.a, a, atol=1e-12)
            np.testing.assert_allclose(cap.b, b, atol=1e-12)


    def test_batch_is_bitwise_single(self):
        model = bundled_robot()
        qs = np.random.default_rng(3).uniform(model.lower, model.upper, size=(25, model.joint_count))
        (a, b) = forward_kinematics_batch(model, qs)
        for i in range(qs.shape[0]):
            (a1, b1) = link_segments(model, qs[i])
            self.assertTrue(np.array_equal(a[i], a1) and np.array_equal(b[i], b1), msg="sample %d differs" % (i))


    def test_invalid_configurations(self):
        model = bundled_robot()
        bad = [np.zeros(5), np.zeros(7), np.full(6, 4.0), np.array([0, 0, 0, 0, 0, np.nan])]
        for q in bad:
            with self.assertRaises(ValueError, msg="accepted %s" % (q,)):
                forward_kinematics(model, q)


    def test_invalid_models(self):
        joint = Joint((0, 0, 1), (0, 0, 1), (-1, 1))
        link = Capsule((0, 0, 0), (0, 0, 1), 0.1)
        cases = [
            ([], []),
            ([joint], []),
            ([Joint((0, 0, 0), (0, 0, 1), (-1, 1))], [link]),
            ([Joint((0, 0, 1), (0, 0, 1), (1, 1))], [link]),
            ([joint], [Capsule((0, 0, 0), (0, 0, 1), 0.0)]),
        ]
        for (joints, links) in cases:
            with self.assertRaises(ValueError):
                RobotModel(joints, links)


    def test_bundled_robot(self):
        model = bundled_robot()
        self.assertEqual(model.joint_count, 6)
        self.assertEqual(model.name, 'xarm6')
        self.assertFalse(model.self_collision)
        self.assertTrue(0.5 < model.reach() < 1.0, msg="reach %.3f" % (model.reach()))
        again = RobotModel.from_dict(model.to_dict())
        self.assertEqual(again.to_dict(), model.to_dict())


class DistanceChecks(unittest.TestCase):

    def test_segment_examples(self):
        sample_data = [
            # (a0, a1, b0, b1, distance)
            ((0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0), 1.0),
            ((-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), 0.0),
            ((0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0), 1.0),
            ((0, 0, 0), (0, 0, 0), (0, 0, 2), (0, 0, 2), 2.0),
            ((0, 0, 0), (0, 0, 0), (-1, 3, 0), (1, 3, 0), 3.0),
            ((0, 0, 0), (1, 0, 0), (0.5, 0.5, 1), (0.5, -0.5, 1), 1.0),
        ]
        for (a0, a1, b0, b1, expected) in sample_data:
            computed = segment_segment_distance(a0, a1, b0, b1)
            self.assertAlmostEqual(computed, expected, places=12,
                                   msg="segments %s-%s / %s-%s: %r" % (a0, a1, b0, b1, computed))


    def test_segment_against_search_oracle(self):
        rng = np.random.default_rng(11)
        for i in range(1000):
            (a0, a1, b0, b1) = rng.uniform(-1, 1, size=(4, 3))
            if i % 10 == 0:
                b1 = b0 + (a1 - a0) * 0.5  # parallel pairs
            computed = segment_segment_distance(a0, a1, b0, b1)
            oracle = _ternary_segment_distance(a0, a1, b0, b1)
            self.assertAlmostEqual(computed, oracle, delta=1e-9, msg="pair %d: %r vs %r" % (i, computed, oracle))


    @settings(max_examples=200, deadline=None)
    @given(points, points, points, points)
    def test_segment_symmetry(self, a0, a1, b0, b1):
        d1 = segment_segment_distance(a0, a1, b0, b1)
        self.assertEqual(d1, segment_segment_distance(b0, b1, a0, a1))
        self.assertAlmostEqual(d1, segment_segment_distance(a1, a0, b1, b0), delta=1e-6)
        self.assertGreaterEqual(d1, 0.0)


    def test_capsule_sphere(self):
        cap = Capsule(np.array([0.0, 0, 0]), np.array([0.0, 0, 1]), 0.1)
        sample_data = [
            ((0, 0, 0.5), 0.05, True),
            ((1, 0, 0.5), 0.05, False),
            ((0.15, 0, 0.5), 0.05, True),   # touching counts
            ((0, 0, 1.2), 0.05, False),
            ((0, 0, 1.1), 0.05, True),
        ]
        for (center, radius, expected) in sample_data:
            computed = capsule_sphere_collides(cap, Sphere(np.array(center, dtype=float), radius))
            self.assertEqual(computed, expected, msg="sphere at %s r=%s" % (center, radius))


    def test_capsule_capsule(self):
        c1 = Capsule(np.array([0.0, 0, 0]), np.array([0.0, 0, 1]), 0.1)
        c2 = Capsule(np.array([1.0, 0, 0]), np.array([1.0, 0, 1]), 0.1)
        self.assertTrue(capsule_capsule_collides(c1, c1))
        self.assertFalse(capsule_capsule_collides(c1, c2))
        rng = np.random.default_rng(5)
        for _ in range(200):
            (a0, a1, b0, b1) = rng.uniform(-1, 1, size=(4, 3))
            (r1, r2) = rng.uniform(0.01, 0.5, size=2)
            expected = segment_segment_distance(a0, a1, b0, b1) <= r1 + r2
            self.assertEqual(capsule_capsule_collides(Capsule(a0, a1, r1), Capsule(b0, b1, r2)), expected)


    def test_self_collision(self):
        folded = [np.array([[0, 0, 0], [0, 0, 1], [0, 0, 1.0]]), np.array([[0, 0, 1], [0, 0, 1.0], [0, 0, 0.5]])]
        self.assertTrue(self_collides(folded[0], folded[1], np.array([0.1, 0.1, 0.1])))
        straight = [np.array([[0, 0, 0], [0, 0, 1], [0, 0, 2.0]]), np.array([[0, 0, 1], [0, 0, 2], [0, 0, 3.0]])]
        self.assertFalse(self_collides(straight[0], straight[1], np.array([0.1, 0.1, 0.1])))


class BoxChecks(unittest.TestCase):

    def test_aabb_examples(self):
        box = aabb_of(Sphere(np.zeros(3), 0.1))
        np.testing.assert_allclose(box.min, (-0.1, -0.1, -0.1))
        np.testing.assert_allclose(box.max, (0.1, 0.1, 0.1))
        box = aabb_of(Capsule(np.zeros(3), np.array([1.0, 0, 0]), 0.1))
        np.testing.assert_allclose(box.min, (-0.1, -0.1, -0.1))
        np.testing.assert_allclose(box.max, (1.1, 0.1, 0.1))
        box = aabb_of(Sphere(np.zeros(3), 0.1), inflation=0.2)
        np.testing.assert_allclose(box.max, (0.3, 0.3, 0.3))
        with self.assertRaises(ValueError):
            aabb_of(Sphere(np.zeros(3), 0.1), inflation=-0.1)


    def test_aabb_batched(self):
        a = np.array([[0.0, 0, 0], [1.0, 2, 3], [0.5, -1, 0]])
        b = np.array([[1.0, 0, 0], [0.0, 2, 4], [0.5, -1, 0]])
        radii = np.array([0.1, 0.2, 0.3])
        boxes = aabb_of(Capsule(a, b, radii))
        self.assertEqual(boxes.min.shape, (3, 3))
        for i in range(3):
            box = aabb_of(Capsule(a[i], b[i], radii[i]))
            np.testing.assert_array_equal(boxes.min[i], box.min, err_msg="capsule %d" % (i))
            np.testing.assert_array_equal(boxes.max[i], box.max, err_msg="capsule %d" % (i))
        spheres = aabb_of(Sphere(a, radii), inflation=0.5)
        np.testing.assert_allclose(spheres.max[2], (1.3, -0.2, 0.8))


    def test_aabb_overlap(self):
        a = Aabb(np.zeros(3), np.ones(3))
        self.assertTrue(aabb_overlap(a, Aabb(np.full(3, 0.5), np.full(3, 2.0))))
        self.assertTrue(aabb_overlap(a, Aabb(np.ones(3), np.full(3, 2.0))))
        self.assertFalse(aabb_overlap(a, Aabb(np.array([1.1, 0, 0]), np.array([2.0, 1, 1]))))


    @settings(max_examples=200, deadline=None)
    @given(points, points, st.floats(min_value=0.01, max_value=2.0),
           st.floats(min_value=0.0, max_value=1.0), points)
    def test_capsule_points_inside_box(self, a, b, radius, t, direction):
        cap = Capsule(np.array(a), np.array(b), radius)
        box = aabb_of(cap)
        d = np.array(direction)
        norm = np.linalg.norm(d)
        offset = d / norm * radius if norm > 1e-9 else np.zeros(3)
        p = cap.a + (cap.b - cap.a) * t + offset
        self.assertTrue(np.all(p >= box.min - 1e-9) and np.all(p <= box.max + 1e-9), msg="%s outside %s" % (p, box))


class InterpolationChecks(unittest.TestCase):

    def test_exact_endpoints(self):
        q0 = np.array([0.1, -0.3, 2.9])
        q1 = np.array([-1.7, 0.2, 0.3])
        qs = interpolate_configurations(q0, q1, [0.0, 0.25, 1.0])
        self.assertTrue(np.array_equal(qs[0], q0))
        self.assertTrue(np.array_equal(qs[2], q1))
        np.testing.assert_allclose(qs[1], q0 + 0.25 * (q1 - q0))
        self.assertTrue(np.array_equal(interpolate_configurations(q0, q1, 1.0), q1))


if __name__ == '__main__':
    unittest.main()
