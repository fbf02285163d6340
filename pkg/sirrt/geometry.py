#
# geometry.py
#

"""Serial-chain kinematics and capsule/sphere distance primitives.

Configurations are numpy vectors of joint angles (radians). The batched
kernels use element-wise arithmetic only, so evaluating one configuration or a
stack of them yields bitwise-identical numbers for the same inputs.
"""

import json
import math
import os
from collections import namedtuple

import numpy as np


Capsule = namedtuple('Capsule', 'a b radius')
Sphere = namedtuple('Sphere', 'center radius')
Aabb = namedtuple('Aabb', 'min max')
Joint = namedtuple('Joint', 'axis translation limits')

DEF_JOINT_LIMITS = (-math.pi, math.pi)
DEF_ROBOT_NAME = 'xarm6'
DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data')

# below this squared length a segment is treated as a point
DEGENERATE_EPS = 1e-18


def vec3(values) -> np.ndarray:
    """finite 3-vector as a float array"""
    v = np.array(values, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector components must be finite")
    return v


def make_capsule(a, b, radius:float) -> Capsule:
    if not radius > 0:
        raise ValueError("capsule radius must be positive")
    return Capsule(vec3(a), vec3(b), float(radius))


def make_sphere(center, radius:float) -> Sphere:
    if not radius > 0:
        raise ValueError("sphere radius must be positive")
    return Sphere(vec3(center), float(radius))


def _dot3(u, v):
    return u[..., 0] * v[..., 0] + u[..., 1] * v[..., 1] + u[..., 2] * v[..., 2]


def _matmul3(m, n):
    """3x3 matrix product over any leading batch dimensions"""
    return (m[..., :, 0, None] * n[..., None, 0, :]
            + m[..., :, 1, None] * n[..., None, 1, :]
            + m[..., :, 2, None] * n[..., None, 2, :])


def _matvec3(m, v):
    return m[..., :, 0] * v[..., 0:1] + m[..., :, 1] * v[..., 1:2] + m[..., :, 2] * v[..., 2:3]


def axis_angle_matrix(axis, angles) -> np.ndarray:
    """rotation matrices about a unit axis for an array of angles (Rodrigues)"""
    angles = np.asarray(angles, dtype=float)
    u = np.asarray(axis, dtype=float)
    skew = np.array([[0.0, -u[2], u[1]],
                     [u[2], 0.0, -u[0]],
                     [-u[1], u[0], 0.0]])
    outer = u[:, None] * u[None, :]
    c = np.cos(angles)[..., None, None]
    s = np.sin(angles)[..., None, None]
    return c * np.eye(3) + s * skew + (1.0 - c) * outer


class RobotModel(object):
    """Serial chain of revolute joints with one capsule per link.

    Joint i rotates about `axis` at the current frame origin; link i's capsule
    is expressed in the rotated frame, then `translation` moves the frame to
    joint i+1.
    """

    def __init__(self, joints, links, base_translation=(0.0, 0.0, 0.0),
                 base_axis=(0.0, 0.0, 1.0), base_angle=0.0,
                 self_collision=False, name='robot'):
        if len(joints) < 1:
            raise ValueError("robot needs at least one joint")
        if len(links) != len(joints):
            raise ValueError("robot needs exactly one link capsule per joint")

        self.name = name
        self.joints = []
        self._given_axes = []
        for joint in joints:
            axis = vec3(joint.axis)
            norm = float(np.linalg.norm(axis))
            if norm == 0.0:
                raise ValueError("joint axis must be non-zero")
            (lo, hi) = (float(joint.limits[0]), float(joint.limits[1]))
            if not lo < hi:
                raise ValueError("joint limits must satisfy lo < hi")
            self._given_axes.append(axis)
            self.joints.append(Joint(axis / norm, vec3(joint.translation), (lo, hi)))

        self.links = [make_capsule(link.a, link.b, link.radius) for link in links]

        self.axes = np.array([j.axis for j in self.joints])
        self.translations = np.array([j.translation for j in self.joints])
        self.lower = np.array([j.limits[0] for j in self.joints])
        self.upper = np.array([j.limits[1] for j in self.joints])
        self.link_a = np.array([c.a for c in self.links])
        self.link_b = np.array([c.b for c in self.links])
        self.link_radii = np.array([c.radius for c in self.links])

        self.base_translation = vec3(base_translation)
        self.base_axis = vec3(base_axis)
        self.base_angle = float(base_angle)
        base_norm = float(np.linalg.norm(self.base_axis))
        if base_norm == 0.0:
            raise ValueError("base rotation axis must be non-zero")
        self.base_rotation = axis_angle_matrix(self.base_axis / base_norm, self.base_angle)
        self.self_collision = bool(self_collision)

        if not math.isfinite(self.reach()):
            raise ValueError("robot reach must be finite")

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    @property
    def max_link_radius(self) -> float:
        return float(self.link_radii.max())

    def reach(self) -> float:
        """upper bound on the distance of any link point from the chain root"""
        total = 0.0
        for i in range(self.joint_count):
            total += max(np.linalg.norm(self.link_a[i]), np.linalg.norm(self.link_b[i]),
                         np.linalg.norm(self.translations[i]))
        return float(total)

    def check_configuration(self, q) -> np.ndarray:
        """returns q as a float vector; raises on dimension or limit violations"""
        q = np.asarray(q, dtype=float)
        if q.shape != (self.joint_count,):
            raise ValueError("configuration has %d angles, robot has %d joints" % (q.size, self.joint_count))
        if not np.all(np.isfinite(q)):
            raise ValueError("configuration angles must be finite")
        if np.any(q < self.lower) or np.any(q > self.upper):
            raise ValueError("configuration outside joint limits")
        return q

    def within_limits(self, q) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(q.shape == (self.joint_count,) and np.all(q >= self.lower) and np.all(q <= self.upper))

    def clamp(self, q) -> np.ndarray:
        return np.minimum(np.maximum(np.asarray(q, dtype=float), self.lower), self.upper)

    @classmethod
    def from_dict(cls, data:dict, name='robot') -> 'RobotModel':
        """build a model from the robot file layout (joints, links, base)"""
        try:
            joints = [Joint(j['axis'], j['translation'], j.get('limits', DEF_JOINT_LIMITS)) for j in data['joints']]
            links = [Capsule(l['a'], l['b'], l['radius']) for l in data['links']]
            base = data.get('base', {})
            return cls(joints, links,
                       base_translation=base.get('translation', (0.0, 0.0, 0.0)),
                       base_axis=base.get('axis', (0.0, 0.0, 1.0)),
                       base_angle=base.get('angle', 0.0),
                       self_collision=data.get('self_collision', False),
                       name=data.get('name', name))
        except (KeyError, TypeError) as e:
            raise ValueError("malformed robot model: %s" % (e))

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'joints': [{'axis': axis.tolist(), 'translation': j.translation.tolist(), 'limits': list(j.limits)}
                       for (axis, j) in zip(self._given_axes, self.joints)],
            'links': [{'a': c.a.tolist(), 'b': c.b.tolist(), 'radius': c.radius} for c in self.links],
            'base': {'translation': self.base_translation.tolist(), 'axis': self.base_axis.tolist(),
                     'angle': self.base_angle},
            'self_collision': self.self_collision,
        }


def load_robot_model(filename:str) -> RobotModel:
    with open(filename, 'r') as f:
        data = json.load(f)
    name = os.path.splitext(os.path.basename(filename))[0]
    return RobotModel.from_dict(data, name=name)


def bundled_robot(name:str=DEF_ROBOT_NAME) -> RobotModel:
    """load one of the models shipped in sirrt/data"""
    return load_robot_model(os.path.join(DATA_DIR, name + '.json'))


def forward_kinematics_batch(model:RobotModel, qs) -> tuple:
    """world-frame link endpoints for a stack of configurations
    @qs: array (S, n) of joint angles
    Return: (a, b) arrays of shape (S, n, 3)"""
    qs = np.asarray(qs, dtype=float)
    count = qs.shape[0]
    rot = np.broadcast_to(model.base_rotation, (count, 3, 3))
    pos = np.broadcast_to(model.base_translation, (count, 3))
    a = np.empty((count, model.joint_count, 3))
    b = np.empty((count, model.joint_count, 3))
    for i in range(model.joint_count):
        rot = _matmul3(rot, axis_angle_matrix(model.axes[i], qs[:, i]))
        a[:, i] = pos + _matvec3(rot, model.link_a[i])
        b[:, i] = pos + _matvec3(rot, model.link_b[i])
        pos = pos + _matvec3(rot, model.translations[i])
    return (a, b)


def link_segments(model:RobotModel, q) -> tuple:
    """world-frame link endpoints (a, b), each (n, 3), without limit checks"""
    (a, b) = forward_kinematics_batch(model, np.asarray(q, dtype=float)[None, :])
    return (a[0], b[0])


def forward_kinematics(model:RobotModel, q) -> list:
    """one world-frame capsule per link"""
    q = model.check_configuration(q)
    (a, b) = link_segments(model, q)
    return [Capsule(a[i], b[i], float(model.link_radii[i])) for i in range(model.joint_count)]


def point_segment_distances(points, a, b) -> np.ndarray:
    """distances from points (..., 3) to segments a-b (broadcastable)"""
    points = np.asarray(points, dtype=float)
    ab = b - a
    ap = points - a
    denom = _dot3(ab, ab)
    num = _dot3(ap, ab)
    shape = np.broadcast(num, denom).shape
    t = np.divide(num, denom, out=np.zeros(shape), where=np.broadcast_to(denom > DEGENERATE_EPS, shape))
    t = np.clip(t, 0.0, 1.0)
    d = ap - ab * t[..., None]
    return np.sqrt(_dot3(d, d))


def point_segment_distance(p, a, b) -> float:
    return float(point_segment_distances(np.asarray(p, dtype=float), np.asarray(a, dtype=float),
                                         np.asarray(b, dtype=float)))


def spheres_hit_capsule(centers, radii, a, b, radius) -> np.ndarray:
    """boolean mask of spheres touching the capsule a-b; tangency counts"""
    return point_segment_distances(centers, a, b) <= radii + radius


def _segment_distance_ordered(p1, q1, p2, q2) -> float:
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(np.dot(d1, d1))
    e = float(np.dot(d2, d2))
    f = float(np.dot(d2, r))

    if a <= DEGENERATE_EPS and e <= DEGENERATE_EPS:
        return float(np.linalg.norm(r))
    if a <= DEGENERATE_EPS:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = float(np.dot(d1, r))
        if e <= DEGENERATE_EPS:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = float(np.dot(d1, d2))
            denom = a * e - b * b
            if denom > 1e-12 * a * e:
                s = min(max((b * f - c * e) / denom, 0.0), 1.0)
            else:
                s = 0.0  # parallel
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    return float(np.linalg.norm((p1 + d1 * s) - (p2 + d2 * t)))


def segment_segment_distance(a0, a1, b0, b1) -> float:
    """exact minimum distance between segments a0-a1 and b0-b1"""
    (a0, a1, b0, b1) = (np.asarray(v, dtype=float) for v in (a0, a1, b0, b1))
    # min over both argument orders keeps the result exactly symmetric
    return min(_segment_distance_ordered(a0, a1, b0, b1), _segment_distance_ordered(b0, b1, a0, a1))


def capsule_sphere_collides(c:Capsule, s:Sphere) -> bool:
    return point_segment_distance(s.center, c.a, c.b) <= c.radius + s.radius


def capsule_capsule_collides(c1:Capsule, c2:Capsule) -> bool:
    return segment_segment_distance(c1.a, c1.b, c2.a, c2.b) <= c1.radius + c2.radius


def aabb_of(shape, inflation:float=0.0) -> Aabb:
    """axis-aligned box around a sphere or capsule grown by `inflation` per face;
    array fields with a leading batch axis give one box per row"""
    if inflation < 0:
        raise ValueError("inflation must be non-negative")
    if isinstance(shape, Sphere):
        grow = np.asarray(shape.radius, dtype=float)[..., None] + inflation
        center = np.asarray(shape.center, dtype=float)
        return Aabb(center - grow, center + grow)
    if isinstance(shape, Capsule):
        grow = np.asarray(shape.radius, dtype=float)[..., None] + inflation
        (a, b) = (np.asarray(shape.a, dtype=float), np.asarray(shape.b, dtype=float))
        return Aabb(np.minimum(a, b) - grow, np.maximum(a, b) + grow)
    raise ValueError("unsupported shape type %s" % (type(shape).__name__))


def aabb_overlap(box1:Aabb, box2:Aabb) -> bool:
    return bool(np.all(box1.min <= box2.max) and np.all(box2.min <= box1.max))


def capsules_hit_shapes(a, b, radii, shapes) -> bool:
    """true if any capsule a[i]-b[i] (radius radii[i]) touches any static shape"""
    for shape in shapes:
        if isinstance(shape, Sphere):
            dist = point_segment_distances(shape.center, a, b)
            if np.any(dist <= radii + shape.radius):
                return True
        elif isinstance(shape, Capsule):
            flat_a = np.reshape(a, (-1, 3))
            flat_b = np.reshape(b, (-1, 3))
            flat_r = np.broadcast_to(radii, np.shape(a)[:-1]).reshape(-1)
            for i in range(flat_a.shape[0]):
                if segment_segment_distance(flat_a[i], flat_b[i], shape.a, shape.b) <= flat_r[i] + shape.radius:
                    return True
        else:
            raise ValueError("unsupported shape type %s" % (type(shape).__name__))
    return False


def self_collides(a, b, radii) -> bool:
    """collision between non-adjacent links of one posed chain"""
    count = len(radii)
    for i in range(count):
        for j in range(i + 2, count):
            if segment_segment_distance(a[i], b[i], a[j], b[j]) <= radii[i] + radii[j]:
                return True
    return False


def interpolate_configurations(q_from, q_to, fracs) -> np.ndarray:
    """constant-velocity joint interpolation, exact at both ends
    @fracs: scalar or array of path fractions in [0, 1]
    Return: array (..., n)"""
    q_from = np.asarray(q_from, dtype=float)
    q_to = np.asarray(q_to, dtype=float)
    f = np.asarray(fracs, dtype=float)[..., None]
    qs = q_from + f * (q_to - q_from)
    qs = np.where(f >= 1.0, q_to, qs)
    return np.where(f <= 0.0, q_from, qs)
