#
# decoder.py
#

import json
import logging
import os

import numpy as np

from sirrt.geometry import DATA_DIR, RobotModel, bundled_robot, load_robot_model, make_capsule, make_sphere
from sirrt.planner import PlannerParams, TimedPath
from sirrt.scene import DynamicObstacle, GeneratorParams, ProblemInstance, Scene, TimeGrid


log = logging.getLogger(__name__)


class Decoder(object):
    """JSON decoder building scenes, instances and paths"""

    def __init__(self, base_dir:str=None):
        self.base_dir = base_dir
        self.stats = {
            'instances': 0,
            'paths': 0,
            'obstacles': 0,
        }


    def _field(self, data:dict, name:str):
        if not isinstance(data, dict):
            raise ValueError("expected an object holding '%s'" % (name))
        if name not in data:
            raise ValueError("missing field '%s'" % (name))
        return(data[name])


    def robot(self, data) -> RobotModel:
        """inline model object, bundled model name, or model file path"""
        if isinstance(data, dict):
            return(RobotModel.from_dict(data))
        if not isinstance(data, str):
            raise ValueError("robot must be an object or a name")
        if os.path.exists(os.path.join(DATA_DIR, data + '.json')):
            return(bundled_robot(data))
        filename = data if self.base_dir is None else os.path.join(self.base_dir, data)
        if not os.path.exists(filename):
            raise ValueError("unknown robot model '%s'" % (data))
        return(load_robot_model(filename))


    def shape(self, data:dict):
        kind = self._field(data, 'type')
        if kind == 'sphere':
            return(make_sphere(self._field(data, 'center'), self._field(data, 'radius')))
        if kind == 'capsule':
            return(make_capsule(self._field(data, 'a'), self._field(data, 'b'), self._field(data, 'radius')))
        raise ValueError("unknown static shape type '%s'" % (kind))


    def obstacle(self, data:dict) -> DynamicObstacle:
        waypoints = np.array(self._field(data, 'waypoints'), dtype=float)
        if waypoints.ndim != 2 or waypoints.shape[1] != 4:
            raise ValueError("obstacle waypoints must be [t, x, y, z] rows")
        self.stats['obstacles'] += 1
        return(DynamicObstacle(self._field(data, 'radius'), waypoints[:, 0], waypoints[:, 1:]))


    def scene(self, data:dict) -> Scene:
        grid_data = self._field(data, 'grid')
        grid = TimeGrid(self._field(grid_data, 't_max'), self._field(grid_data, 'frequency'))
        bounds = data.get('bounds')
        if bounds is not None:
            bounds = (np.array(self._field(bounds, 'min'), dtype=float), np.array(self._field(bounds, 'max'), dtype=float))
        return(Scene(self.robot(self._field(data, 'robot')),
                     [self.shape(s) for s in data.get('statics', [])],
                     [self.obstacle(o) for o in data.get('dynamics', [])],
                     grid, bounds))


    def instance(self, data:dict) -> ProblemInstance:
        scene = self.scene(data)
        q_start = scene.robot.check_configuration(self._field(data, 'q_start'))
        q_goal = scene.robot.check_configuration(self._field(data, 'q_goal'))
        generator = data.get('generator')
        if generator is not None:
            generator = GeneratorParams(**generator)
        self.stats['instances'] += 1
        return(ProblemInstance(scene, q_start, q_goal, data.get('seed'), generator))


    def params(self, data:dict) -> PlannerParams:
        try:
            return(PlannerParams(**data))
        except TypeError as e:
            raise ValueError("bad planner parameters: %s" % (e))


    def path(self, data:dict) -> TimedPath:
        rows = []
        for seg in self._field(data, 'segments'):
            rows.append((self._field(seg, 'q'), self._field(seg, 'wait_until'), self._field(seg, 'depart'),
                         self._field(seg, 'arrive')))
        self.stats['paths'] += 1
        return(TimedPath(rows, data.get('meet_index'), data.get('v_max', 1.0)))


def read_json(filename:str) -> dict:
    """parsed file contents; ValueError on bad JSON"""
    with open(filename, 'r') as f:
        try:
            return(json.load(f))
        except json.JSONDecodeError as e:
            raise ValueError("%s: %s" % (filename, e))


def read_instance(filename:str) -> ProblemInstance:
    return(Decoder(os.path.dirname(os.path.abspath(filename))).instance(read_json(filename)))


def read_path(filename:str) -> TimedPath:
    return(Decoder().path(read_json(filename)))
