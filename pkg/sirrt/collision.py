#
# collision.py
#

"""Time-indexed collision queries against moving spheres.

Every obstacle at every grid tick becomes one "timed body". A uniform hash
grid over all timed bodies answers, for a posed robot, which (obstacle, tick)
pairs are close enough to need an exact capsule-sphere test; the exact tests
then turn into safe intervals: maximal runs of collision-free ticks.
"""

import itertools
import logging
from collections import namedtuple

import numpy as np

from sirrt.geometry import (Aabb, Capsule, Sphere, aabb_of, capsules_hit_shapes, forward_kinematics_batch,
                            interpolate_configurations, link_segments, self_collides, spheres_hit_capsule)


log = logging.getLogger(__name__)

Interval = namedtuple('Interval', 't_l t_u')
TimedBody = namedtuple('TimedBody', 'obstacle_id tick shape')

# cell coordinates are packed into one int64 key, 21 bits per axis
_KEY_BITS = 21
_KEY_OFFSET = 1 << (_KEY_BITS - 1)


class SafeIntervalSet(object):
    """sorted, disjoint closed time intervals during which a configuration is safe"""

    def __init__(self, intervals=()):
        self.intervals = tuple(Interval(float(lo), float(hi)) for (lo, hi) in intervals)
        for (i, iv) in enumerate(self.intervals):
            if iv.t_l > iv.t_u:
                raise ValueError("interval lower bound exceeds upper bound")
            if i > 0 and not self.intervals[i - 1].t_u < iv.t_l:
                raise ValueError("intervals must be sorted and disjoint")

    @classmethod
    def from_mask(cls, safe, grid) -> 'SafeIntervalSet':
        """intervals spanning each run of True ticks in `safe`"""
        safe = np.asarray(safe, dtype=bool)
        edges = np.diff(np.concatenate(([0], safe.astype(np.int8), [0])))
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1) - 1
        return cls((grid.time_of(int(s)), grid.time_of(int(e))) for (s, e) in zip(starts, ends))

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def __getitem__(self, i):
        return self.intervals[i]

    def __eq__(self, other):
        return isinstance(other, SafeIntervalSet) and self.intervals == other.intervals

    def __repr__(self):
        return "SafeIntervalSet(%r)" % (list(self.intervals),)

    @property
    def first(self):
        return self.intervals[0] if self.intervals else None

    @property
    def last(self):
        return self.intervals[-1] if self.intervals else None

    def containing(self, t:float):
        """the interval holding time t, or None"""
        for iv in self.intervals:
            if iv.t_l <= t <= iv.t_u:
                return iv
            if iv.t_l > t:
                break
        return None

    def total_time(self) -> float:
        return sum(iv.t_u - iv.t_l for iv in self.intervals)


def _cell_keys(cells) -> np.ndarray:
    c = np.asarray(cells, dtype=np.int64) + _KEY_OFFSET
    return (c[..., 0] << (2 * _KEY_BITS)) | (c[..., 1] << _KEY_BITS) | c[..., 2]


class TimedIndex(object):
    """hash grid over every obstacle sphere at every tick of the scene grid"""

    def __init__(self, scene):
        self.grid = scene.grid
        count = len(scene.dynamics)
        ticks = scene.grid.tick_count
        self.obstacle_ids = np.repeat(np.arange(count), ticks)
        self.ticks = np.tile(np.arange(ticks), count)
        self.centers = scene.tick_centers().reshape(-1, 3)
        self.radii = np.repeat(scene.obstacle_radii, ticks)
        (self.box_min, self.box_max) = aabb_of(Sphere(self.centers, self.radii))
        max_radius = float(scene.obstacle_radii.max()) if count else 0.0
        # no timed body spans more than two cells per axis
        self.cell_size = 2.0 * (max_radius + scene.robot.max_link_radius)
        self._keys = np.zeros(0, dtype=np.int64)
        self._starts = np.zeros(0, dtype=np.int64)
        self._counts = np.zeros(0, dtype=np.int64)
        self._ids = np.zeros(0, dtype=np.int64)
        if len(self):
            self._build_cells()

    def __len__(self):
        return self.centers.shape[0]

    def _build_cells(self):
        lo = np.floor(self.box_min / self.cell_size).astype(np.int64)
        hi = np.floor(self.box_max / self.cell_size).astype(np.int64)
        if np.any(np.abs(lo) >= _KEY_OFFSET) or np.any(np.abs(hi) >= _KEY_OFFSET):
            raise ValueError("obstacle coordinates too far from the origin for the cell grid")
        bodies = np.arange(len(self))
        keys = []
        ids = []
        for offset in itertools.product((0, 1), repeat=3):
            cells = lo + np.array(offset, dtype=np.int64)
            inside = np.all(cells <= hi, axis=1)
            keys.append(_cell_keys(cells[inside]))
            ids.append(bodies[inside])
        keys = np.concatenate(keys)
        ids = np.concatenate(ids)
        order = np.argsort(keys, kind='stable')
        (self._keys, self._starts, self._counts) = np.unique(keys[order], return_index=True, return_counts=True)
        self._ids = ids[order]

    def body(self, i:int) -> TimedBody:
        return TimedBody(int(self.obstacle_ids[i]), int(self.ticks[i]), Sphere(self.centers[i], float(self.radii[i])))

    def query(self, box_min, box_max) -> tuple:
        """timed bodies whose boxes overlap any of the query boxes
        @box_min, box_max: arrays (L, 3)
        Return: (ids, overlap) with overlap[c, l] true when body ids[c] meets box l"""
        box_min = np.atleast_2d(np.asarray(box_min, dtype=float))
        box_max = np.atleast_2d(np.asarray(box_max, dtype=float))
        if not len(self):
            return (np.zeros(0, dtype=np.int64), np.zeros((0, box_min.shape[0]), dtype=bool))
        found = []
        for l in range(box_min.shape[0]):
            lo = np.floor(box_min[l] / self.cell_size).astype(np.int64)
            hi = np.floor(box_max[l] / self.cell_size).astype(np.int64)
            axes = [np.arange(lo[d], hi[d] + 1) for d in range(3)]
            cells = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, 3)
            keys = _cell_keys(cells)
            pos = np.searchsorted(self._keys, keys)
            hit = pos < self._keys.size
            hit[hit] = self._keys[pos[hit]] == keys[hit]
            for p in pos[hit]:
                start = self._starts[p]
                found.append(self._ids[start:start + self._counts[p]])
        if not found:
            return (np.zeros(0, dtype=np.int64), np.zeros((0, box_min.shape[0]), dtype=bool))
        ids = np.unique(np.concatenate(found))
        overlap = (np.all(self.box_min[ids][:, None, :] <= box_max[None, :, :], axis=2)
                   & np.all(box_min[None, :, :] <= self.box_max[ids][:, None, :], axis=2))
        keep = overlap.any(axis=1)
        return (ids[keep], overlap[keep])


def build_timed_index(scene) -> TimedIndex:
    index = TimedIndex(scene)
    log.debug("timed index: %d bodies, cell size %.3f", len(index), index.cell_size)
    return index


def _link_boxes(model, a, b) -> Aabb:
    return aabb_of(Capsule(a, b, model.link_radii))


def robot_boxes(model, q) -> tuple:
    """per-link axis-aligned boxes (box_min, box_max), each (n, 3)"""
    (a, b) = link_segments(model, q)
    return tuple(_link_boxes(model, a, b))


def broad_candidates(index:TimedIndex, box_min, box_max) -> set:
    """(obstacle_id, tick) pairs whose boxes overlap any robot link box"""
    (ids, _) = index.query(box_min, box_max)
    return set(zip(index.obstacle_ids[ids].tolist(), index.ticks[ids].tolist()))


def statics_collide(scene, q) -> bool:
    """static obstacle or self collision, independent of time"""
    (a, b) = link_segments(scene.robot, q)
    return _pose_blocked(scene, a, b)


def _pose_blocked(scene, a, b) -> bool:
    robot = scene.robot
    if capsules_hit_shapes(a, b, robot.link_radii, scene.statics):
        return True
    return robot.self_collision and self_collides(a, b, robot.link_radii)


def _unsafe_ticks(index:TimedIndex, robot, a, b) -> np.ndarray:
    unsafe = np.zeros(index.grid.tick_count, dtype=bool)
    (ids, overlap) = index.query(*_link_boxes(robot, a, b))
    for l in range(robot.joint_count):
        sel = ids[overlap[:, l]]
        if sel.size == 0:
            continue
        hit = spheres_hit_capsule(index.centers[sel], index.radii[sel], a[l], b[l], robot.link_radii[l])
        unsafe[index.ticks[sel[hit]]] = True
    return unsafe


def compute_safe_intervals(index:TimedIndex, scene, q) -> SafeIntervalSet:
    """safe intervals of configuration q over the whole time grid"""
    (a, b) = link_segments(scene.robot, q)
    if _pose_blocked(scene, a, b):
        return SafeIntervalSet()
    unsafe = _unsafe_ticks(index, scene.robot, a, b)
    return SafeIntervalSet.from_mask(~unsafe, scene.grid)


def _dynamic_hits(scene, a, b, centers) -> bool:
    """a, b: (S, n, 3) posed links; centers: (S, K, 3) obstacle centers"""
    radii = scene.obstacle_radii
    robot = scene.robot
    for l in range(robot.joint_count):
        if np.any(spheres_hit_capsule(centers, radii, a[:, l, None, :], b[:, l, None, :], robot.link_radii[l])):
            return True
    return False


def config_collides(scene, q, t:float) -> bool:
    """exact collision test of configuration q at time t"""
    (a, b) = link_segments(scene.robot, q)
    if _pose_blocked(scene, a, b):
        return True
    if not scene.dynamics:
        return False
    return _dynamic_hits(scene, a[None], b[None], scene.centers_at(t)[None])


def motion_samples(grid, t_depart:float, t_arrive:float) -> np.ndarray:
    """departure, every tick strictly inside the motion, and arrival"""
    k0 = grid.first_tick_at_or_after(t_depart)
    k1 = grid.last_tick_at_or_before(t_arrive)
    ticks = np.arange(k0, k1 + 1)
    return np.concatenate(([t_depart], ticks / grid.frequency, [t_arrive]))


def motion_collides(scene, q_from, q_to, t_depart:float, t_arrive:float) -> bool:
    """exact test of the constant-velocity motion q_from -> q_to over [t_depart, t_arrive]"""
    if t_arrive < t_depart:
        raise ValueError("arrival precedes departure")
    times = motion_samples(scene.grid, t_depart, t_arrive)
    span = t_arrive - t_depart
    fracs = (times - t_depart) / span if span > 0 else np.zeros(times.size)
    qs = interpolate_configurations(q_from, q_to, fracs)
    (a, b) = forward_kinematics_batch(scene.robot, qs)
    for i in range(qs.shape[0]):
        if _pose_blocked(scene, a[i], b[i]):
            return True
    if not scene.dynamics:
        return False
    return _dynamic_hits(scene, a, b, scene.centers_at_times(times))


def edge_clearance(index:TimedIndex, scene, q_from, q_to, duration:float) -> np.ndarray:
    """departure ticks at which every in-motion tick sample is collision-free
    Return: bool array over departure ticks; a necessary condition only, the
    departure and arrival endpoints still need an exact motion check"""
    grid = scene.grid
    count = grid.tick_count
    steps = grid.last_tick_at_or_before(duration) if duration > 0 else 0
    offsets = np.arange(max(steps, 0) + 1)
    fracs = (offsets / grid.frequency) / duration if duration > 0 else np.zeros(1)
    qs = interpolate_configurations(q_from, q_to, fracs)
    (a, b) = forward_kinematics_batch(scene.robot, qs)
    clear = np.ones(count, dtype=bool)
    for j in range(offsets.size):
        if _pose_blocked(scene, a[j], b[j]):
            return np.zeros(count, dtype=bool)
        if j >= count:
            clear[:] = False
            break
        unsafe = _unsafe_ticks(index, scene.robot, a[j], b[j])
        # departing at tick d puts the robot at sample j during tick d + j
        clear[:count - j] &= ~unsafe[j:]
        clear[count - j:] = False
    return clear
