#
# scene.py
#

"""World model: time grid, static and moving obstacles, random instances.

Moving obstacles are spheres following piecewise-linear trajectories that
are sampled on a uniform time grid. Random instances reproduce the benchmark
setup: bouncing spheres inside a cube around the robot base, re-aiming their
heading every half second to two seconds.
"""

import logging
import math
from collections import namedtuple

import numpy as np

from sirrt.geometry import (Aabb, bundled_robot, capsules_hit_shapes, link_segments,
                            self_collides, spheres_hit_capsule)


log = logging.getLogger(__name__)

DEF_T_MAX = 20.0
DEF_FREQUENCY = 30.0

GeneratorParams = namedtuple('GeneratorParams',
                             't_max frequency radius_min radius_max speed_min speed_max '
                             'turn_min turn_max half_width retries min_separation',
                             defaults=(DEF_T_MAX, DEF_FREQUENCY, 0.05, 0.10, 0.0, 1.0,
                                       0.5, 2.0, 1.0, 1000, 1.0))

ProblemInstance = namedtuple('ProblemInstance', 'scene q_start q_goal seed generator',
                             defaults=(None, None))


class InstanceGenerationError(RuntimeError):
    """no collision-free placement found within the retry limit"""


class TimeGrid(object):
    """uniform sampling of [0, t_max] at `frequency` Hz; tick k sits at k / frequency"""

    __slots__ = ('t_max', 'frequency', 'tick_count')

    def __init__(self, t_max:float=DEF_T_MAX, frequency:float=DEF_FREQUENCY):
        if not (t_max > 0 and math.isfinite(t_max)):
            raise ValueError("t_max must be positive and finite")
        if not (frequency > 0 and math.isfinite(frequency)):
            raise ValueError("frequency must be positive and finite")
        self.t_max = float(t_max)
        self.frequency = float(frequency)
        self.tick_count = int(math.floor(self.t_max * self.frequency + 1e-9)) + 1

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and (self.t_max, self.frequency) == (other.t_max, other.frequency)

    def __repr__(self):
        return "TimeGrid(t_max=%r, frequency=%r)" % (self.t_max, self.frequency)

    @property
    def last_time(self) -> float:
        return self.time_of(self.tick_count - 1)

    def time_of(self, tick:int) -> float:
        return tick / self.frequency

    def times(self) -> np.ndarray:
        return np.arange(self.tick_count) / self.frequency

    def first_tick_at_or_after(self, t:float) -> int:
        """smallest k >= 0 with k / frequency >= t"""
        k = max(0, int(math.ceil(t * self.frequency)))
        while k > 0 and (k - 1) / self.frequency >= t:
            k -= 1
        while k / self.frequency < t:
            k += 1
        return k

    def last_tick_at_or_before(self, t:float) -> int:
        """largest k with k / frequency <= t, capped at the last tick; -1 if none"""
        if t < 0:
            return -1
        k = min(self.tick_count - 1, int(math.floor(t * self.frequency)))
        while k + 1 < self.tick_count and (k + 1) / self.frequency <= t:
            k += 1
        while k >= 0 and k / self.frequency > t:
            k -= 1
        return k

    def tick_of(self, t:float):
        """grid index whose time equals t exactly, otherwise None"""
        k = int(round(t * self.frequency))
        if 0 <= k < self.tick_count and k / self.frequency == t:
            return k
        return None


def _lerp_waypoints(t0, t1, c0, c1, t):
    frac = ((t - t0) / (t1 - t0))[..., None]
    return c0 * (1.0 - frac) + c1 * frac


class DynamicObstacle(object):
    """sphere moving along a piecewise-linear path through timed waypoints"""

    def __init__(self, radius:float, times, centers):
        if not radius > 0:
            raise ValueError("obstacle radius must be positive")
        self.radius = float(radius)
        self.times = np.array(times, dtype=float)
        self.centers = np.array(centers, dtype=float).reshape(-1, 3)
        if self.times.ndim != 1 or self.times.size < 2:
            raise ValueError("obstacle trajectory needs at least two waypoints")
        if self.centers.shape[0] != self.times.size:
            raise ValueError("waypoint times and centers differ in length")
        if self.times[0] != 0.0:
            raise ValueError("obstacle trajectory must start at t=0")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("waypoint times must be strictly increasing")
        if not np.all(np.isfinite(self.centers)):
            raise ValueError("waypoint centers must be finite")

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def positions_at(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if np.any(ts < 0.0) or np.any(ts > self.times[-1] + 1e-9):
            raise ValueError("time outside obstacle trajectory")
        idx = np.clip(np.searchsorted(self.times, ts, side='right') - 1, 0, self.times.size - 2)
        return _lerp_waypoints(self.times[idx], self.times[idx + 1], self.centers[idx], self.centers[idx + 1], ts)

    def position_at(self, t:float) -> np.ndarray:
        return self.positions_at(np.array([t], dtype=float))[0]

    def max_speed(self) -> float:
        steps = np.linalg.norm(np.diff(self.centers, axis=0), axis=1)
        return float(np.max(steps / np.diff(self.times)))


class Scene(object):
    """robot, static shapes, moving spheres and the shared time grid"""

    def __init__(self, robot, statics=(), dynamics=(), grid=None, bounds=None):
        self.robot = robot
        self.statics = tuple(statics)
        self.dynamics = tuple(dynamics)
        self.grid = grid or TimeGrid()
        if bounds is None:
            center = robot.base_translation
            bounds = Aabb(center - 1.0, center + 1.0)
        self.bounds = Aabb(np.asarray(bounds[0], dtype=float), np.asarray(bounds[1], dtype=float))

        for obstacle in self.dynamics:
            if abs(obstacle.t_end - self.grid.t_max) > 1e-9:
                raise ValueError("obstacle trajectory must end at t_max")

        count = len(self.dynamics)
        self.obstacle_radii = np.array([o.radius for o in self.dynamics], dtype=float)
        width = max([o.times.size for o in self.dynamics] or [2])
        self._wp_times = np.full((count, width), np.inf)
        self._wp_centers = np.zeros((count, width, 3))
        self._wp_last = np.zeros(count, dtype=int)
        for (i, o) in enumerate(self.dynamics):
            self._wp_times[i, :o.times.size] = o.times
            self._wp_centers[i, :o.times.size] = o.centers
            self._wp_last[i] = o.times.size - 2
        self._tick_centers = None

    def with_dynamics(self, dynamics) -> 'Scene':
        return Scene(self.robot, self.statics, dynamics, self.grid, self.bounds)

    def tick_centers(self) -> np.ndarray:
        """obstacle centers at every grid tick, array (K, T, 3), computed once"""
        if self._tick_centers is None:
            times = self.grid.times()
            table = np.empty((len(self.dynamics), times.size, 3))
            for (i, o) in enumerate(self.dynamics):
                table[i] = o.positions_at(times)
            self._tick_centers = table
        return self._tick_centers

    def centers_at_times(self, ts) -> np.ndarray:
        """obstacle centers at arbitrary times, array (S, K, 3)"""
        ts = np.asarray(ts, dtype=float).reshape(-1)
        if np.any(ts < 0.0) or np.any(ts > self.grid.t_max + 1e-9):
            raise ValueError("time outside [0, t_max]")
        count = len(self.dynamics)
        if count == 0:
            return np.zeros((ts.size, 0, 3))
        tt = ts[:, None]
        idx = (self._wp_times[None, :, :] <= tt[:, :, None]).sum(axis=2) - 1
        idx = np.clip(idx, 0, self._wp_last[None, :])
        rows = np.arange(count)[None, :]
        return _lerp_waypoints(self._wp_times[rows, idx], self._wp_times[rows, idx + 1],
                               self._wp_centers[rows, idx], self._wp_centers[rows, idx + 1], tt)

    def centers_at(self, t:float) -> np.ndarray:
        """obstacle centers at time t, array (K, 3)"""
        tick = self.grid.tick_of(t)
        if tick is not None:
            return self.tick_centers()[:, tick]
        return self.centers_at_times([t])[0]


def _statics_hit(scene, a, b) -> bool:
    return capsules_hit_shapes(a, b, scene.robot.link_radii, scene.statics)


def _sample_endpoints(rng, scene, params):
    robot = scene.robot

    def sample_free():
        for _ in range(params.retries):
            q = rng.uniform(robot.lower, robot.upper)
            (a, b) = link_segments(robot, q)
            if _statics_hit(scene, a, b):
                continue
            if robot.self_collision and self_collides(a, b, robot.link_radii):
                continue
            return q
        raise InstanceGenerationError("no collision-free configuration after %d retries" % (params.retries))

    for _ in range(params.retries):
        q_start = sample_free()
        q_goal = sample_free()
        if np.linalg.norm(q_goal - q_start) >= params.min_separation:
            return (q_start, q_goal)
    raise InstanceGenerationError("start and goal closer than %g after %d retries" %
                                  (params.min_separation, params.retries))


def random_trajectory(rng, bounds:Aabb, t_max:float, params:GeneratorParams) -> tuple:
    """bouncing constant-speed walk inside `bounds`
    Return: (times, centers) waypoint arrays, last time exactly t_max"""
    (lo, hi) = (bounds.min, bounds.max)
    speed = rng.uniform(params.speed_min, params.speed_max)
    position = rng.uniform(lo, hi)
    times = [0.0]
    centers = [position.copy()]
    t = 0.0
    while t < t_max:
        heading = rng.normal(size=3)
        norm = np.linalg.norm(heading)
        heading = heading / norm if norm > 0 else np.array([1.0, 0.0, 0.0])
        velocity = heading * speed
        t_turn = min(t_max, t + rng.uniform(params.turn_min, params.turn_max))
        while t < t_turn:
            with np.errstate(divide='ignore', invalid='ignore'):
                to_wall = np.where(velocity > 0, (hi - position) / velocity,
                                   np.where(velocity < 0, (lo - position) / velocity, np.inf))
            wall_time = max(float(np.min(to_wall)), 0.0)
            if wall_time < t_turn - t:
                hit = to_wall <= wall_time
                position = np.clip(position + velocity * wall_time, lo, hi)
                position = np.where(hit & (velocity > 0), hi, np.where(hit & (velocity < 0), lo, position))
                # elastic reflection off every wall touched
                velocity = np.where(hit, -velocity, velocity)
                t = t + wall_time
            else:
                position = np.clip(position + velocity * (t_turn - t), lo, hi)
                t = t_turn
            if t > times[-1]:
                times.append(t)
                centers.append(position.copy())
            else:
                centers[-1] = position.copy()
    return (np.array(times), np.array(centers))


def _obstacle_blocks(scene, poses, obstacle) -> bool:
    """true if the obstacle touches the start or goal pose at any tick"""
    centers = obstacle.positions_at(scene.grid.times())
    radii = np.full(centers.shape[0], obstacle.radius)
    robot = scene.robot
    for (a, b) in poses:
        for l in range(robot.joint_count):
            if np.any(spheres_hit_capsule(centers, radii, a[l], b[l], robot.link_radii[l])):
                return True
    return False


def _sample_obstacle(seed:int, index:int, scene, poses, params) -> DynamicObstacle:
    rng = np.random.default_rng([seed, 1, index])
    for _ in range(params.retries):
        radius = rng.uniform(params.radius_min, params.radius_max)
        (times, centers) = random_trajectory(rng, scene.bounds, scene.grid.t_max, params)
        obstacle = DynamicObstacle(radius, times, centers)
        if not _obstacle_blocks(scene, poses, obstacle):
            return obstacle
    raise InstanceGenerationError("obstacle %d overlaps start or goal after %d retries" % (index, params.retries))


def incremental_extend(instance:ProblemInstance, extra:int) -> ProblemInstance:
    """add `extra` obstacles; earlier obstacles and endpoints stay unchanged"""
    if extra < 0:
        raise ValueError("extra obstacle count must be non-negative")
    if extra == 0:
        return instance
    if instance.seed is None:
        raise ValueError("only seeded instances can be extended")
    params = instance.generator or GeneratorParams()
    scene = instance.scene
    poses = [link_segments(scene.robot, instance.q_start), link_segments(scene.robot, instance.q_goal)]
    dynamics = list(scene.dynamics)
    for index in range(len(dynamics), len(dynamics) + extra):
        dynamics.append(_sample_obstacle(instance.seed, index, scene, poses, params))
    log.debug("instance seed %d extended to %d obstacles", instance.seed, len(dynamics))
    return instance._replace(scene=scene.with_dynamics(dynamics))


def generate_instance(seed:int, obstacle_count:int, params:GeneratorParams=None, robot=None) -> ProblemInstance:
    """seeded random instance with `obstacle_count` moving spheres
    @seed: non-negative integer; equal seeds give identical instances
    @robot: model to plan for, the bundled arm by default"""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    if obstacle_count < 0:
        raise ValueError("obstacle count must be non-negative")
    params = params or GeneratorParams()
    robot = robot or bundled_robot()
    grid = TimeGrid(params.t_max, params.frequency)
    center = robot.base_translation
    bounds = Aabb(center - params.half_width, center + params.half_width)
    scene = Scene(robot, (), (), grid, bounds)

    rng = np.random.default_rng([seed, 0])
    (q_start, q_goal) = _sample_endpoints(rng, scene, params)
    base = ProblemInstance(scene, q_start, q_goal, int(seed), params)
    return incremental_extend(base, obstacle_count)
