#
# encoder.py
#

import json

from sirrt.geometry import Capsule, Sphere


class Encoder(object):
    """JSON encoder for instances, paths and validation reports"""

    def __init__(self, indent:int=1):
        self.indent = indent


    def dumps(self, data:dict) -> str:
        """canonical text form; equal inputs give byte-identical output"""
        return(json.dumps(data, indent=self.indent, sort_keys=True) + '\n')


    def write(self, filename:str, data:dict) -> None:
        with open(filename, 'w') as f:
            f.write(self.dumps(data))


    def shape(self, shape) -> dict:
        if isinstance(shape, Sphere):
            return({'type': 'sphere', 'center': list(map(float, shape.center)), 'radius': float(shape.radius)})
        if isinstance(shape, Capsule):
            return({'type': 'capsule', 'a': list(map(float, shape.a)), 'b': list(map(float, shape.b)),
                    'radius': float(shape.radius)})
        raise ValueError("unsupported shape type %s" % (type(shape).__name__))


    def obstacle(self, obstacle) -> dict:
        waypoints = [[float(t)] + list(map(float, c)) for (t, c) in zip(obstacle.times, obstacle.centers)]
        return({'radius': obstacle.radius, 'waypoints': waypoints})


    def scene(self, scene) -> dict:
        return({
            'robot': scene.robot.to_dict(),
            'grid': {'t_max': scene.grid.t_max, 'frequency': scene.grid.frequency},
            'bounds': {'min': scene.bounds.min.tolist(), 'max': scene.bounds.max.tolist()},
            'statics': [self.shape(s) for s in scene.statics],
            'dynamics': [self.obstacle(o) for o in scene.dynamics],
        })


    def instance(self, instance) -> dict:
        data = self.scene(instance.scene)
        data['q_start'] = list(map(float, instance.q_start))
        data['q_goal'] = list(map(float, instance.q_goal))
        data['seed'] = instance.seed
        data['generator'] = dict(instance.generator._asdict()) if instance.generator is not None else None
        return(data)


    def path(self, path, planner:str=None, params=None, seed:int=None, stats=None) -> dict:
        """path file body; `stats` is kept out of it when None so reruns stay byte-identical"""
        data = {
            'segments': [{'q': list(map(float, s.q)), 'wait_until': s.wait_until, 'depart': s.depart,
                          'arrive': s.arrive} for s in path.segments],
            't_arrival': path.t_arrival,
            'meet_index': path.meet_index,
            'v_max': path.v_max,
        }
        if planner is not None:
            data['planner'] = planner
        if params is not None:
            data['params'] = dict(params._asdict())
        if seed is not None:
            data['seed'] = seed
        if stats is not None:
            data['stats'] = dict(stats)
        return(data)


    def report(self, report) -> dict:
        return({
            'valid': report.valid,
            'checked_samples': report.checked_samples,
            'violations': [{'time': v.time, 'kind': v.kind, 'detail': v.detail} for v in report.violations],
        })
