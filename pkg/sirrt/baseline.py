#
# baseline.py
#

"""Space-time RRT-Connect: the comparison planner.

States are (configuration, time) pairs sampled directly in space-time. An
edge moves at constant velocity and then waits at the child configuration;
both phases are checked by sampling the time grid, with no safe-interval
reasoning. The goal tree is rooted at (q_goal, t_max).
"""

import logging
import time

import numpy as np

from sirrt.collision import config_collides, motion_collides, statics_collide
from sirrt.planner import (GOAL, START, Node, PlannerParams, PlanResult, TimedPath, Tree, check_params,
                           motion_duration, new_stats, sample_configuration, steer)


log = logging.getLogger(__name__)


class SpaceTimeTree(Tree):
    """tree over (configuration, time) states"""

    def __init__(self, direction, root):
        self._times = [root.time]
        super(SpaceTimeTree, self).__init__(direction, root)

    def add(self, node):
        if self.nodes:
            self._times.append(node.time)
        return super(SpaceTimeTree, self).add(node)

    def nearest_reachable(self, q, t:float, v_max:float):
        """closest node (joint-space L2) connectable to state (q, t) at speed v_max"""
        dist = self._distances(q)
        times = np.asarray(self._times)
        if self.direction == START:
            ok = (t - times) * v_max >= dist
        else:
            ok = (times - t) * v_max >= dist
        if not np.any(ok):
            return None
        dist = np.where(ok, dist, np.inf)
        return self.nodes[int(np.argmin(dist))]


class SpaceTimeRRT(object):
    """bidirectional RRT-Connect in (configuration, time) space"""

    name = 'st-baseline'

    def __init__(self, instance, params:PlannerParams=None):
        self.instance = instance
        self.scene = instance.scene
        self.params = check_params(params or PlannerParams())
        self.rng = np.random.default_rng(self.params.rng_seed)
        self.stats = new_stats()
        self.stats['state_checks'] = 0

    def _wait_free(self, q, t_from:float, t_to:float) -> bool:
        """q stays collision-free at every tick in [t_from, t_to] and at t_to"""
        grid = self.scene.grid
        k0 = grid.first_tick_at_or_after(t_from)
        k1 = grid.last_tick_at_or_before(t_to)
        times = [grid.time_of(k) for k in range(k0, k1 + 1)] + [t_to]
        for t in times:
            self.stats['state_checks'] += 1
            if config_collides(self.scene, q, t):
                return False
        return True

    def edge_free(self, q_a, t_a:float, q_b, t_b:float):
        """go from (q_a, t_a) to q_b at full speed, then wait until t_b
        Return: (depart, arrive) if the edge is collision-free, else None"""
        arrive = t_a + motion_duration(q_a, q_b, self.params.v_max)
        if arrive > t_b:
            return None
        self.stats['motion_checks'] += 1
        if motion_collides(self.scene, q_a, q_b, t_a, arrive):
            return None
        if not self._wait_free(q_b, arrive, t_b):
            return None
        return (t_a, arrive)

    def _step(self, tree:SpaceTimeTree, q_target, t_target:float):
        """new node one step from the tree towards (q_target, t_target), or None"""
        params = self.params
        near = tree.nearest_reachable(q_target, t_target, params.v_max)
        if near is None:
            return None
        dist = float(np.linalg.norm(q_target - near.q))
        q_new = steer(near.q, q_target, params.delta_planner)
        if dist > params.delta_planner:
            t_new = near.time + (t_target - near.time) * (params.delta_planner / dist)
        else:
            t_new = t_target
        if statics_collide(self.scene, q_new):
            return None
        if tree.direction == START:
            edge = self.edge_free(near.q, near.time, q_new, t_new)
        else:
            edge = self.edge_free(q_new, t_new, near.q, near.time)
        if edge is None:
            return None
        return Node(q_new, None, t_new, near, edge[0], edge[1])

    def _join(self, tree:SpaceTimeTree, node:Node):
        """grow `tree` towards `node` until a direct edge reaches it
        Return: the node of `tree` joined to `node`, or None"""
        params = self.params
        while True:
            near = tree.nearest_reachable(node.q, node.time, params.v_max)
            if near is None:
                return None
            if float(np.linalg.norm(node.q - near.q)) <= params.delta_planner:
                if tree.direction == START:
                    edge = self.edge_free(near.q, near.time, node.q, node.time)
                else:
                    edge = self.edge_free(node.q, node.time, near.q, near.time)
                return near if edge is not None else None
            new = self._step(tree, node.q, node.time)
            if new is None:
                return None
            tree.add(new)

    def _path(self, start_node:Node, goal_node:Node) -> TimedPath:
        """forward schedule through the start branch, the joining edge and the goal branch"""
        states = []
        node = start_node
        while node is not None:
            states.append(node)
            node = node.parent
        states.reverse()

        rows = [[states[0].q, 0.0, 0.0, 0.0]]
        for node in states[1:]:
            rows[-1][1] = node.depart
            rows.append([node.q, node.time, node.depart, node.arrive])

        v_max = self.params.v_max
        depart = start_node.time
        arrive = depart + motion_duration(start_node.q, goal_node.q, v_max)
        rows[-1][1] = depart
        rows.append([goal_node.q, goal_node.time, depart, arrive])

        node = goal_node
        while node.parent is not None:
            rows[-1][1] = node.depart
            rows.append([node.parent.q, node.parent.time, node.depart, node.arrive])
            node = node.parent
        rows[-1][1] = rows[-1][3]
        return TimedPath(rows, None, v_max)

    def _result(self, started, path=None, reason=None, trees=()) -> PlanResult:
        for tree in trees:
            self.stats['nodes_' + tree.direction] = len(tree)
        self.stats['wall_time'] = time.perf_counter() - started
        if path is None:
            log.info("%s failed: %s", self.name, reason)
        return PlanResult(path is not None, path, self.stats, reason)

    def plan(self) -> PlanResult:
        started = time.perf_counter()
        scene = self.scene
        params = self.params
        t_max = scene.grid.last_time
        q_start = scene.robot.check_configuration(self.instance.q_start)
        q_goal = scene.robot.check_configuration(self.instance.q_goal)

        if config_collides(scene, q_start, 0.0):
            return self._result(started, reason="start configuration is unsafe at t=0")
        if np.array_equal(q_start, q_goal):
            return self._result(started, TimedPath([(q_start, 0.0, 0.0, 0.0)], 0, params.v_max))
        if config_collides(scene, q_goal, t_max):
            return self._result(started, reason="goal configuration is unsafe at t_max")

        start_tree = SpaceTimeTree(START, Node(q_start, None, 0.0))
        goal_tree = SpaceTimeTree(GOAL, Node(q_goal, None, t_max))
        (current, other) = (start_tree, goal_tree)
        deadline = started + params.time_budget

        while time.perf_counter() < deadline:
            if params.max_iterations is not None and self.stats['iterations'] >= params.max_iterations:
                break
            self.stats['iterations'] += 1
            q_rand = sample_configuration(self.rng, scene.robot)
            t_rand = self.rng.uniform(0.0, t_max)
            new = self._step(current, q_rand, t_rand)
            if new is not None:
                current.add(new)
                peer = self._join(other, new)
                if peer is not None:
                    if current is start_tree:
                        path = self._path(new, peer)
                    else:
                        path = self._path(peer, new)
                    self.stats['t_arrival_untrimmed'] = path.t_arrival
                    return self._result(started, path, trees=(start_tree, goal_tree))
            (current, other) = (other, current)

        return self._result(started, reason="no path within the search budget", trees=(start_tree, goal_tree))


def plan_baseline_st(instance, params:PlannerParams=None) -> PlanResult:
    return SpaceTimeRRT(instance, params).plan()
