#
# validate.py
#

"""Independent checks of a timed path against its problem instance.

The validator samples the whole schedule on a time grid at least as fine as
the scene's and runs exact per-sample collision tests, so it shares the
collision kernels with the planner but none of the interval bookkeeping.
"""

import logging
from collections import namedtuple

import numpy as np

from sirrt.collision import SafeIntervalSet, config_collides, statics_collide
from sirrt.geometry import interpolate_configurations


log = logging.getLogger(__name__)

TIME_TOLERANCE = 1e-9
SPEED_TOLERANCE = 1e-9
DEF_TUNNELING_FACTOR = 4

COLLISION = 'collision'
CONTINUITY = 'continuity'
SPEED = 'speed'
LIMITS = 'limits'
INTERVAL = 'interval'

Violation = namedtuple('Violation', 'time kind detail')
ValidationReport = namedtuple('ValidationReport', 'valid violations checked_samples')


def _check_structure(path, robot):
    if not len(path):
        raise ValueError("path has no segments")
    for seg in path.segments:
        q = np.asarray(seg.q)
        if q.shape != (robot.joint_count,):
            raise ValueError("path waypoint has %d angles, robot has %d joints" % (q.size, robot.joint_count))
        if not (np.all(np.isfinite(q)) and np.isfinite([seg.wait_until, seg.depart, seg.arrive]).all()):
            raise ValueError("path waypoint values must be finite")


def configuration_at(path, t:float) -> np.ndarray:
    """robot configuration along the schedule at time t (held at the ends)"""
    segments = path.segments
    for (i, seg) in enumerate(segments):
        if t <= seg.wait_until or i == len(segments) - 1:
            if i > 0 and t < seg.arrive:
                span = seg.arrive - seg.depart
                frac = (t - seg.depart) / span if span > 0 else 1.0
                return interpolate_configurations(segments[i - 1].q, seg.q, frac)
            return np.array(seg.q, dtype=float)
    return np.array(segments[-1].q, dtype=float)


def validate_path(path, instance, frequency:float=None, v_max:float=None) -> ValidationReport:
    """all violations of the path; ValueError when the path is malformed
    @frequency: sampling rate, at least the scene grid's
    @v_max: speed bound, the path's own by default"""
    scene = instance.scene
    robot = scene.robot
    grid = scene.grid
    frequency = grid.frequency if frequency is None else float(frequency)
    if frequency < grid.frequency:
        raise ValueError("validation frequency below the scene grid frequency")
    v_max = path.v_max if v_max is None else float(v_max)
    _check_structure(path, robot)

    violations = []
    segments = path.segments
    if not np.array_equal(segments[0].q, instance.q_start):
        violations.append(Violation(0.0, CONTINUITY, "path does not start at q_start"))
    if not np.array_equal(segments[-1].q, instance.q_goal):
        violations.append(Violation(path.t_arrival, CONTINUITY, "path does not end at q_goal"))
    if segments[0].arrive != 0.0:
        violations.append(Violation(segments[0].arrive, CONTINUITY, "path does not start at t=0"))
    if path.t_arrival > grid.t_max + TIME_TOLERANCE:
        violations.append(Violation(path.t_arrival, INTERVAL, "arrival after t_max"))

    for (i, seg) in enumerate(segments):
        if not robot.within_limits(seg.q):
            violations.append(Violation(seg.arrive, LIMITS, "waypoint %d outside joint limits" % (i)))
        if seg.wait_until < seg.arrive - TIME_TOLERANCE:
            violations.append(Violation(seg.arrive, CONTINUITY, "waypoint %d left before arrival" % (i)))
        if i == 0:
            continue
        prev = segments[i - 1]
        if abs(seg.depart - prev.wait_until) > TIME_TOLERANCE:
            violations.append(Violation(seg.depart, CONTINUITY, "waypoint %d departure differs from wait end" % (i)))
        span = seg.arrive - seg.depart
        dist = float(np.linalg.norm(np.asarray(seg.q) - np.asarray(prev.q)))
        if span < -TIME_TOLERANCE:
            violations.append(Violation(seg.depart, CONTINUITY, "segment %d arrives before it departs" % (i)))
        elif dist > 0 and (span <= 0 or dist / span > v_max + SPEED_TOLERANCE):
            violations.append(Violation(seg.depart, SPEED, "segment %d exceeds v_max" % (i)))

    t_end = min(path.t_arrival, grid.t_max)
    count = int(np.floor(t_end * frequency + 1e-9)) + 1
    times = [k / frequency for k in range(count) if k / frequency <= t_end]
    if not times or times[-1] != t_end:
        times.append(t_end)
    for t in times:
        q = configuration_at(path, t)
        if config_collides(scene, q, t):
            violations.append(Violation(t, COLLISION, "robot in collision"))

    report = ValidationReport(not violations, violations, len(times))
    log.debug("validated path: %d samples, %d violations", report.checked_samples, len(violations))
    return report


def count_tunneling(path, instance, factor:int=DEF_TUNNELING_FACTOR) -> int:
    """collisions seen only when sampling `factor` times finer than the grid"""
    report = validate_path(path, instance, instance.scene.grid.frequency * factor)
    return sum(1 for v in report.violations if v.kind == COLLISION)


def naive_safe_intervals(scene, q) -> SafeIntervalSet:
    """safe intervals by testing every grid tick exactly, without the index"""
    grid = scene.grid
    if statics_collide(scene, q):
        return SafeIntervalSet()
    safe = np.array([not config_collides(scene, q, grid.time_of(k)) for k in range(grid.tick_count)])
    return SafeIntervalSet.from_mask(safe, grid)
