#
# planner.py
#

"""Safe-interval bidirectional RRT for a manipulator among moving spheres.

Two trees grow in configuration space; every tree node is a (configuration,
safe interval) pair. The start tree stores the earliest arrival time into a
node's interval, the goal tree the latest departure time from which the goal
can still be reached. Trees alternate roles each iteration and the search
stops as soon as a node added to one tree is joined by the other tree inside
the same safe interval with compatible times.
"""

import logging
import time
from collections import namedtuple

import numpy as np
from scipy.spatial import cKDTree

from sirrt.collision import (build_timed_index, compute_safe_intervals, edge_clearance, motion_collides,
                             statics_collide)


log = logging.getLogger(__name__)

DEF_DELTA_PLANNER = 1.0
DEF_DELTA_PARENT = 3.0
DEF_V_MAX = 1.0
DEF_TIME_BUDGET = 20.0

# trees larger than this answer nearest-neighbour queries from a k-d tree
KDTREE_THRESHOLD = 2000

# arrival times this close to an interval bound are snapped onto it
ARRIVAL_SLACK = 1e-12

START = 'start'
GOAL = 'goal'

PlannerParams = namedtuple('PlannerParams', 'delta_planner delta_parent v_max time_budget rng_seed max_iterations',
                           defaults=(DEF_DELTA_PLANNER, DEF_DELTA_PARENT, DEF_V_MAX, DEF_TIME_BUDGET, 0, None))

Segment = namedtuple('Segment', 'q wait_until depart arrive')
PlanResult = namedtuple('PlanResult', 'success path stats reason')


def check_params(params:PlannerParams) -> PlannerParams:
    if not params.delta_planner > 0:
        raise ValueError("delta_planner must be positive")
    if not params.delta_parent >= params.delta_planner:
        raise ValueError("delta_parent must be at least delta_planner")
    if not params.v_max > 0:
        raise ValueError("v_max must be positive")
    if not params.time_budget > 0:
        raise ValueError("time_budget must be positive")
    if params.max_iterations is not None and params.max_iterations < 0:
        raise ValueError("max_iterations must be non-negative")
    return params


def new_stats() -> dict:
    return {
        'iterations': 0,
        'nodes_start': 0,
        'nodes_goal': 0,
        'interval_queries': 0,
        'motion_checks': 0,
        'index_build_time': 0.0,
        'wall_time': 0.0,
        't_arrival_untrimmed': None,
        'trimmed_wait': 0.0,
    }


def _count(stats, key, n=1):
    if stats is not None:
        stats[key] += n


class TimedPath(object):
    """Waypoint schedule: the robot arrives at segment i's configuration at
    `arrive`, waits there until `wait_until`, then departs towards the next
    waypoint at `depart` of segment i + 1.
    """

    def __init__(self, segments, meet_index=None, v_max=DEF_V_MAX):
        self.segments = [Segment(np.array(s[0], dtype=float), float(s[1]), float(s[2]), float(s[3]))
                         for s in segments]
        if not self.segments:
            raise ValueError("path needs at least one segment")
        self.meet_index = meet_index
        self.v_max = float(v_max)

    def __len__(self):
        return len(self.segments)

    def __getitem__(self, i):
        return self.segments[i]

    @property
    def t_arrival(self) -> float:
        return self.segments[-1].arrive

    def configurations(self) -> np.ndarray:
        return np.array([s.q for s in self.segments])

    def total_wait(self) -> float:
        return sum(s.wait_until - s.arrive for s in self.segments[:-1])


class Node(object):
    """(configuration, safe interval) tree vertex; `depart`/`arrive` time the
    edge to the parent in forward time"""

    __slots__ = ('q', 'interval', 'time', 'parent', 'depart', 'arrive', 'index')

    def __init__(self, q, interval, t, parent=None, depart=None, arrive=None):
        self.q = q
        self.interval = interval
        self.time = t
        self.parent = parent
        self.depart = depart
        self.arrive = arrive
        self.index = -1

    def __repr__(self):
        return "Node(%d, %s, t=%.4f)" % (self.index, tuple(self.interval), self.time)


class Tree(object):
    """nodes of one search direction with nearest-neighbour lookup"""

    def __init__(self, direction:str, root:Node):
        if direction not in (START, GOAL):
            raise ValueError("tree direction must be '%s' or '%s'" % (START, GOAL))
        self.direction = direction
        self.nodes = []
        self._configs = np.empty((16, np.asarray(root.q).size))
        self._kdtree = None
        self._kd_size = 0
        self.add(root)

    def __len__(self):
        return len(self.nodes)

    @property
    def root(self) -> Node:
        return self.nodes[0]

    def add(self, node:Node) -> Node:
        count = len(self.nodes)
        if count == self._configs.shape[0]:
            grown = np.empty((2 * count, self._configs.shape[1]))
            grown[:count] = self._configs
            self._configs = grown
        self._configs[count] = node.q
        node.index = count
        self.nodes.append(node)
        return node

    def configs(self) -> np.ndarray:
        return self._configs[:len(self.nodes)]

    def _distances(self, q, start=0) -> np.ndarray:
        return np.linalg.norm(self._configs[start:len(self.nodes)] - q, axis=1)

    def _refresh_kdtree(self):
        count = len(self.nodes)
        if self._kdtree is None or count >= 2 * self._kd_size:
            self._kdtree = cKDTree(self._configs[:count].copy())
            self._kd_size = count

    def nearest(self, q) -> Node:
        """closest node in joint-space L2; ties go to the oldest node"""
        if len(self.nodes) < KDTREE_THRESHOLD:
            return self.nodes[int(np.argmin(self._distances(q)))]
        self._refresh_kdtree()
        (best_dist, best) = self._kdtree.query(q)
        best = int(best)
        best_dist = float(np.linalg.norm(self._configs[best] - q))
        if len(self.nodes) > self._kd_size:
            tail = self._distances(q, self._kd_size)
            i = int(np.argmin(tail))
            if tail[i] < best_dist:
                best = self._kd_size + i
        return self.nodes[best]

    def near(self, q, radius:float) -> list:
        """nodes within `radius` of q ordered by (distance, insertion order)"""
        if len(self.nodes) < KDTREE_THRESHOLD:
            dist = self._distances(q)
            idx = np.flatnonzero(dist <= radius)
        else:
            self._refresh_kdtree()
            idx = np.array(self._kdtree.query_ball_point(q, radius * (1.0 + 1e-12) + 1e-12), dtype=np.int64)
            tail = np.arange(self._kd_size, len(self.nodes))
            idx = np.concatenate((idx, tail))
            dist = np.full(len(self.nodes), np.inf)
            dist[idx] = np.linalg.norm(self._configs[idx] - q, axis=1)
            idx = idx[dist[idx] <= radius]
        order = np.lexsort((idx, dist[idx]))
        return [self.nodes[i] for i in idx[order]]

    def branch(self, node:Node) -> list:
        """nodes from the root down to `node`"""
        out = []
        while node is not None:
            out.append(node)
            node = node.parent
        out.reverse()
        return out


def sample_configuration(rng, model) -> np.ndarray:
    """uniform sample inside the joint limits"""
    return rng.uniform(model.lower, model.upper)


def steer(q_from, q_to, step:float) -> np.ndarray:
    """q_to if within `step` of q_from, else the point `step` along the way"""
    delta = q_to - q_from
    dist = float(np.linalg.norm(delta))
    if dist <= step:
        return np.array(q_to, dtype=float)
    return q_from + delta * (step / dist)


def extend(scene, tree:Tree, q_sampled, params:PlannerParams):
    """configuration one step from the tree towards q_sampled, or None when it
    collides with static geometry"""
    near = tree.nearest(q_sampled)
    q_new = scene.robot.clamp(steer(near.q, q_sampled, params.delta_planner))
    if statics_collide(scene, q_new):
        return None
    return q_new


def motion_duration(q_from, q_to, v_max:float) -> float:
    return float(np.linalg.norm(q_to - q_from)) / v_max


def _forward_departures(grid, lo:float, hi:float):
    """lo itself, then every grid tick after it up to hi"""
    yield (lo, grid.tick_of(lo))
    k = grid.first_tick_at_or_after(lo)
    if grid.time_of(k) == lo:
        k += 1
    for k in range(k, grid.last_tick_at_or_before(hi) + 1):
        yield (grid.time_of(k), k)


def _backward_departures(grid, lo:float, hi:float):
    """hi itself, then every grid tick before it down to lo"""
    yield (hi, grid.tick_of(hi))
    k = grid.last_tick_at_or_before(hi)
    if k >= 0 and grid.time_of(k) == hi:
        k -= 1
    for k in range(k, grid.first_tick_at_or_after(lo) - 1, -1):
        yield (grid.time_of(k), k)


def _scan_departures(scene, q_from, q_to, duration, departures, arrive_lo, arrive_hi, index, stats, cache):
    """first (depart, tick) in `departures` giving a collision-free motion whose
    arrival lies in [arrive_lo, arrive_hi]; tick is None off the grid"""
    clearance = None
    key = (q_from.tobytes(), q_to.tobytes())
    if cache is not None:
        clearance = cache.get(key)
    tried = False
    for (depart, k) in departures:
        arrive = depart + duration
        # rounding in depart + duration must not push a boundary departure out
        if arrive_lo - ARRIVAL_SLACK <= arrive < arrive_lo:
            arrive = arrive_lo
        elif arrive_hi < arrive <= arrive_hi + ARRIVAL_SLACK:
            arrive = arrive_hi
        if arrive < arrive_lo or arrive > arrive_hi:
            continue
        if k is not None:
            if clearance is None and tried and index is not None:
                clearance = edge_clearance(index, scene, q_from, q_to, duration)
                if cache is not None:
                    cache[key] = clearance
            if clearance is not None and not clearance[k]:
                continue
        _count(stats, 'motion_checks')
        if not motion_collides(scene, q_from, q_to, depart, arrive):
            return (depart, arrive)
        tried = True
    return None


def earliest_arrival(scene, q_from, from_interval, from_time:float, q_to, to_interval, v_max:float=DEF_V_MAX,
                     index=None, stats=None, cache=None):
    """earliest (depart, arrive) moving from q_from, ready at from_time inside
    from_interval, to q_to inside to_interval; None if infeasible
    Leaving at once is tried first, then each grid tick after it."""
    duration = motion_duration(q_from, q_to, v_max)
    lo = max(from_time, to_interval.t_l - duration)
    hi = min(from_interval.t_u, to_interval.t_u - duration)
    if hi < lo:
        return None
    return _scan_departures(scene, q_from, q_to, duration, _forward_departures(scene.grid, lo, hi),
                            to_interval.t_l, to_interval.t_u, index, stats, cache)


def latest_arrival(scene, q_from, from_interval, q_to, to_interval, to_time:float, v_max:float=DEF_V_MAX,
                   index=None, stats=None, cache=None):
    """latest (depart, arrive) leaving q_from inside from_interval and reaching
    q_to inside to_interval no later than to_time; None if infeasible
    The latest admissible departure is tried first, then each earlier grid tick."""
    duration = motion_duration(q_from, q_to, v_max)
    arrive_hi = min(to_time, to_interval.t_u)
    lo = max(from_interval.t_l, to_interval.t_l - duration)
    hi = min(from_interval.t_u, arrive_hi - duration)
    if hi < lo:
        return None
    return _scan_departures(scene, q_from, q_to, duration, _backward_departures(scene.grid, lo, hi),
                            to_interval.t_l, arrive_hi, index, stats, cache)


def set_parent(scene, tree:Tree, q_new, intervals, params:PlannerParams, index=None, stats=None) -> list:
    """one new node per safe interval of q_new that some nearby node reaches;
    the parent is the nearest such node"""
    candidates = tree.near(q_new, params.delta_parent)
    cache = {}
    nodes = []
    for interval in intervals:
        for cand in candidates:
            if tree.direction == START:
                if cand.time > interval.t_u:
                    continue
                found = earliest_arrival(scene, cand.q, cand.interval, cand.time, q_new, interval,
                                         params.v_max, index, stats, cache)
                if found is not None:
                    nodes.append(Node(q_new, interval, found[1], cand, found[0], found[1]))
                    break
            else:
                if cand.time < interval.t_l:
                    continue
                found = latest_arrival(scene, q_new, interval, cand.q, cand.interval, cand.time,
                                       params.v_max, index, stats, cache)
                if found is not None:
                    nodes.append(Node(q_new, interval, found[0], cand, found[0], found[1]))
                    break
    return nodes


def _match(direction:str, current_nodes, other_nodes):
    """first (current, other) pair sharing a safe interval with the start-side
    time no later than the goal-side time"""
    for node in current_nodes:
        for peer in other_nodes:
            if node.interval != peer.interval:
                continue
            (start_side, goal_side) = (peer, node) if direction == START else (node, peer)
            if start_side.time <= goal_side.time:
                return (node, peer)
    return None


def connect(scene, other:Tree, q_target, target_nodes, params:PlannerParams, index=None, stats=None):
    """grow `other` towards q_target in delta_planner steps
    Return: (node in the current tree, node in `other`) on a join, else None"""
    while True:
        near = other.nearest(q_target)
        if float(np.linalg.norm(q_target - near.q)) == 0.0:
            return _match(other.direction, target_nodes, other.near(q_target, 0.0))
        q_step = steer(near.q, q_target, params.delta_planner)
        reached = np.array_equal(q_step, q_target)
        if statics_collide(scene, q_step):
            return None
        intervals = compute_safe_intervals(index, scene, q_step)
        _count(stats, 'interval_queries')
        nodes = set_parent(scene, other, q_step, intervals, params, index, stats)
        if not nodes:
            return None
        for node in nodes:
            other.add(node)
        if reached:
            return _match(other.direction, target_nodes, nodes)


def unite_trees(start_branch, goal_branch) -> TimedPath:
    """join a start-tree branch and a goal-tree branch meeting at the same
    configuration and safe interval into one timed path
    @start_branch: start-tree nodes, root first, ending at the meeting node
    @goal_branch: goal-tree nodes, root first, ending at the meeting node"""
    meet_start = start_branch[-1]
    meet_goal = goal_branch[-1]
    if not np.array_equal(meet_start.q, meet_goal.q):
        raise ValueError("branches do not meet at the same configuration")
    if meet_start.interval != meet_goal.interval:
        raise ValueError("branches do not meet in the same safe interval")
    if meet_start.time > meet_goal.time:
        raise ValueError("start branch reaches the meeting node after the goal branch leaves it")

    root = start_branch[0]
    rows = [[root.q, root.time, root.time, root.time]]
    for node in start_branch[1:]:
        rows[-1][1] = node.depart
        rows.append([node.q, node.arrive, node.depart, node.arrive])
    meet_index = len(rows) - 1

    for node in reversed(goal_branch[1:]):
        rows[-1][1] = node.depart
        rows.append([node.parent.q, node.arrive, node.depart, node.arrive])
    rows[-1][1] = rows[-1][3]
    return TimedPath(rows, meet_index)


def trim_wait(path:TimedPath, scene, index=None, stats=None) -> TimedPath:
    """re-time the part after the meeting point to leave as early as possible;
    the arrival time never increases and a failed re-timing keeps the input"""
    m = path.meet_index
    if m is None or m >= len(path) - 1:
        return path
    if path[m].wait_until <= path[m].arrive:
        return path
    if index is None:
        index = build_timed_index(scene)

    segments = list(path.segments)
    from_interval = compute_safe_intervals(index, scene, segments[m].q).containing(segments[m].arrive)
    if from_interval is None:
        return path
    out = segments[:m + 1]
    t = segments[m].arrive
    for i in range(m, len(segments) - 1):
        nxt = segments[i + 1]
        to_interval = compute_safe_intervals(index, scene, nxt.q).containing(nxt.arrive)
        _count(stats, 'interval_queries')
        if to_interval is None:
            return path
        found = earliest_arrival(scene, out[-1].q, from_interval, t, nxt.q, to_interval, path.v_max, index, stats)
        if found is None or found[0] > nxt.depart:
            found = (nxt.depart, nxt.arrive)
        out[-1] = out[-1]._replace(wait_until=found[0])
        out.append(Segment(nxt.q, found[1], found[0], found[1]))
        t = found[1]
        from_interval = to_interval
    trimmed = TimedPath(out, m, path.v_max)
    log.debug("trimmed arrival %.4f -> %.4f", path.t_arrival, trimmed.t_arrival)
    return trimmed


class Planner(object):
    """SI-RRT search over one problem instance"""

    name = 'si-rrt'

    def __init__(self, instance, params:PlannerParams=None, index=None):
        self.instance = instance
        self.scene = instance.scene
        self.params = check_params(params or PlannerParams())
        self.rng = np.random.default_rng(self.params.rng_seed)
        self.index = index
        self.stats = new_stats()

    def _result(self, started, path=None, reason=None, trees=()) -> PlanResult:
        for tree in trees:
            self.stats['nodes_' + tree.direction] = len(tree)
        self.stats['wall_time'] = time.perf_counter() - started
        if path is None:
            log.info("%s failed: %s", self.name, reason)
        else:
            log.info("%s found path, arrival %.3f s, %d iterations", self.name, path.t_arrival,
                     self.stats['iterations'])
        return PlanResult(path is not None, path, self.stats, reason)

    def plan(self) -> PlanResult:
        started = time.perf_counter()
        scene = self.scene
        params = self.params
        grid = scene.grid
        q_start = scene.robot.check_configuration(self.instance.q_start)
        q_goal = scene.robot.check_configuration(self.instance.q_goal)

        if self.index is None:
            t0 = time.perf_counter()
            self.index = build_timed_index(scene)
            self.stats['index_build_time'] = time.perf_counter() - t0
        index = self.index

        if statics_collide(scene, q_start) or statics_collide(scene, q_goal):
            return self._result(started, reason="start or goal collides with static geometry")

        start_si = compute_safe_intervals(index, scene, q_start)
        self.stats['interval_queries'] += 1
        if not start_si or start_si.first.t_l != 0.0:
            return self._result(started, reason="start configuration is unsafe at t=0")
        if np.array_equal(q_start, q_goal):
            path = TimedPath([(q_start, 0.0, 0.0, 0.0)], 0, params.v_max)
            self.stats['t_arrival_untrimmed'] = 0.0
            return self._result(started, path)

        goal_si = compute_safe_intervals(index, scene, q_goal)
        self.stats['interval_queries'] += 1
        if not goal_si or goal_si.last.t_u != grid.last_time:
            return self._result(started, reason="goal configuration is not safe through t_max")

        start_tree = Tree(START, Node(q_start, start_si.first, 0.0))
        goal_tree = Tree(GOAL, Node(q_goal, goal_si.last, goal_si.last.t_u))
        (current, other) = (start_tree, goal_tree)
        deadline = started + params.time_budget

        while time.perf_counter() < deadline:
            if params.max_iterations is not None and self.stats['iterations'] >= params.max_iterations:
                break
            self.stats['iterations'] += 1
            meet = self._iterate(current, other)
            if meet is not None:
                (node_current, node_other) = meet
                if current is start_tree:
                    (node_s, node_g) = (node_current, node_other)
                else:
                    (node_s, node_g) = (node_other, node_current)
                path = unite_trees(start_tree.branch(node_s), goal_tree.branch(node_g))
                path.v_max = params.v_max
                self.stats['t_arrival_untrimmed'] = path.t_arrival
                path = trim_wait(path, scene, index, self.stats)
                self.stats['trimmed_wait'] = self.stats['t_arrival_untrimmed'] - path.t_arrival
                return self._result(started, path, trees=(start_tree, goal_tree))
            (current, other) = (other, current)

        return self._result(started, reason="no path within the search budget", trees=(start_tree, goal_tree))

    def _iterate(self, current:Tree, other:Tree):
        scene = self.scene
        q_rand = sample_configuration(self.rng, scene.robot)
        q_new = extend(scene, current, q_rand, self.params)
        if q_new is None:
            return None
        intervals = compute_safe_intervals(self.index, scene, q_new)
        self.stats['interval_queries'] += 1
        nodes = set_parent(scene, current, q_new, intervals, self.params, self.index, self.stats)
        if not nodes:
            return None
        for node in nodes:
            current.add(node)
        return connect(scene, other, q_new, nodes, self.params, self.index, self.stats)


def plan(instance, params:PlannerParams=None, index=None) -> PlanResult:
    return Planner(instance, params, index).plan()
