"""Mission runner wiring perception, estimation, planning, control and the
simulated world into the fixed tick order

    sense -> estimate -> plan -> control -> actuate -> log
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import anchor_estimator as ae
from .config import ScenarioConfig
from .controller import PidGains, PidState, pid_step
from .geometry import Pose, wrap_angle
from .perception import PerceptionParams, recognize_anchor, recognize_target
from .planner import FollowState, TyingTrajectory, advance, plan_tying
from .runlog import Event, RunLog
from .simulator import (ANCHOR_RADIUS, CameraModel, Cylinder, DetectorParams, PlantNoise,
                        RobotBody, SimAnchor, Winch, WorldModel, look_at_pose, sense_camera,
                        sense_odometry, step_anchor, step_robot, update_windings, update_wire,
                        verify_tie, yaw_pitch_pose)
from .target_manager import TargetNoise, TargetSet, observe_target, predict_targets

log = logging.getLogger(__name__)

DOCKED, LAUNCHING, TYING, TIED, FAILED = "docked", "launching", "tying", "tied", "failed"


class PhaseTimeout(RuntimeError):
    def __init__(self, phase: str, budget: float, log: RunLog):
        super().__init__(f"phase {phase!r} exceeded its {budget:.1f} s budget")
        self.phase = phase
        self.budget = budget
        self.log = log


def _r(v, nd: int = 6):
    if v is None:
        return None
    if np.ndim(v) == 0:
        return round(float(v), nd)
    return [round(float(x), nd) for x in np.asarray(v).ravel()]


def build_world(cfg: ScenarioConfig) -> WorldModel:
    n = cfg.noise
    bars = [Cylinder(b.p0, b.p1, b.radius, b.label, b.name) for b in cfg.bars]
    robot_pos = np.asarray(cfg.robot.position, dtype=float)
    winches = [Winch(0.0, 0.0, a.pad, k) for k, a in enumerate(cfg.anchors)]
    robot = RobotBody(Pose(robot_pos), cfg.robot.mass, winches=winches, damping=cfg.robot.damping,
                      ground_z=float(robot_pos[2]))
    anchors = [SimAnchor(k, robot_pos + a.pad, a.yaw, odom_u=a.odom_u, odom_phi=a.odom_phi,
                         wire_attach_point=robot_pos + a.pad)
               for k, a in enumerate(cfg.anchors)]
    noise = PlantNoise(n.sigma_velocity, n.sigma_odom_position, n.sigma_odom_velocity,
                       n.sigma_odom_yaw, n.odom_drift_u, n.odom_drift_phi, n.sigma_depth)
    detector = DetectorParams(n.detector_center_px, n.detector_scale, n.detector_false_negative,
                              n.detector_dropout)
    return WorldModel(bars, robot, anchors, rng_seed=cfg.seed, noise=noise, detector=detector)


def estimator_noise(cfg: ScenarioConfig) -> ae.NoiseConfig:
    n = cfg.noise
    return ae.NoiseConfig.default(cfg.dt, sigma_accel=n.sigma_accel, sigma_cam=n.sigma_cam,
                                  sigma_odom_pos=n.sigma_odom_position,
                                  sigma_odom_vel=n.sigma_odom_velocity,
                                  sigma_odom_yaw=n.sigma_odom_yaw)


@dataclass
class AnchorTask:
    index: int
    bar_index: int
    mirrored: bool
    state: str = DOCKED
    belief: Optional[ae.AnchorBelief] = None
    pid: PidState = field(default_factory=PidState)
    follow: Optional[FollowState] = None
    traj: Optional[TyingTrajectory] = None
    target_id: Optional[int] = None
    hover: Optional[np.ndarray] = None
    wire_root: Optional[np.ndarray] = None
    path: list = field(default_factory=list)
    cmd: np.ndarray = field(default_factory=lambda: np.zeros(3))
    phase_start: float = 0.0
    winding: Optional[float] = None

    def estimated_yaw(self) -> float:
        x = self.belief.x
        return wrap_angle(-x[ae.THETA] - x[ae.PHI])

    def setpoint(self) -> Optional[np.ndarray]:
        if self.state == LAUNCHING:
            return self.hover
        if self.state == TYING and not self.follow.done:
            return self.traj.world_waypoint(self.follow.active_index)
        return None


class Mission:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg.validate()
        self.dt = cfg.dt
        self.world = build_world(cfg)
        seeds = np.random.SeedSequence(cfg.seed).spawn(3)
        self.rng_plant, self.rng_odom, self.rng_cam = (np.random.default_rng(s) for s in seeds)
        self.ekf_noise = estimator_noise(cfg)
        self.gains = PidGains()
        self.perception = PerceptionParams()
        self.target_noise = TargetNoise(association_threshold=cfg.mission.target_threshold)
        cam = cfg.camera
        self.camera = CameraModel(cam.width, cam.height, cam.focal, cam.focal,
                                  (cam.width - 1) / 2.0, (cam.height - 1) / 2.0)
        self.frame_every = max(1, int(round(cfg.tick_rate / cam.rate)))
        names = [b.name for b in cfg.bars]
        self.tasks = [AnchorTask(k, names.index(a.target), a.mirrored)
                      for k, a in enumerate(cfg.anchors)]
        self.targets = TargetSet()
        self.stage = "recognize"
        self.stage_start = 0.0
        self.drive_index = 0
        self.drive_start_pos: Optional[np.ndarray] = None
        self.drive_start_time = 0.0
        self.tensions = np.zeros(len(self.tasks))
        self.robot_start = self.world.robot.position.copy()
        self.proximity: set = set()
        self.log = RunLog(header={
            "scenario": cfg.name, "seed": cfg.seed, "dt": self.dt, "tick_rate": cfg.tick_rate,
            "anchors": len(self.tasks), "bars": names, "config": cfg.to_dict()})
        self.events: list[Event] = []
        self.tick = 0
        self.time = 0.0
        self.done = False
        self.failed = False

    # ------------------------------------------------------------ helpers
    def emit(self, kind: str, **data) -> None:
        self.events.append(Event(self.tick, round(self.time, 9), kind, data))

    def set_stage(self, stage: str, **data) -> None:
        self.stage = stage
        self.stage_start = self.time
        self.emit("phase_change", phase=stage, **data)

    def camera_position(self) -> np.ndarray:
        return self.world.robot.position + np.asarray(self.cfg.robot.camera_offset, dtype=float)

    def camera_pose(self) -> Pose:
        pos = self.camera_position()
        if self.stage == "recognize":
            k = int(self.time / self.cfg.camera.dwell) % len(self.cfg.camera.sweep)
            yaw, pitch = self.cfg.camera.sweep[k]
            return yaw_pitch_pose(pos, yaw, pitch)
        launching = [t for t in self.tasks if t.state == LAUNCHING]
        tying = [t for t in self.tasks if t.state == TYING]
        if launching:
            t = launching[0]
            aim = t.belief.position if t.belief.fix_count else t.hover
        elif tying:
            aim = np.mean([t.belief.position for t in tying], axis=0)
        else:
            return yaw_pitch_pose(pos, 0.0, 0.0)
        if np.linalg.norm(aim - pos) < 1e-6:
            return yaw_pitch_pose(pos, 0.0, 0.0)
        return look_at_pose(pos, aim)

    def bar_track(self, bar: Cylinder):
        """Track chosen for a bar: the one nearest the bar's axis segment
        (stands in for the operator picking the attachment target)."""
        best, best_d = None, math.inf
        for tr in self.targets.tracks:
            rel = tr.position - bar.p0
            s = np.clip(rel @ bar.axis, 0.0, bar.length)
            d = float(np.linalg.norm(rel - s * bar.axis))
            if d < best_d:
                best, best_d = tr, d
        return best if best_d <= 0.5 else None

    def targets_ready(self) -> bool:
        m = self.cfg.mission
        for t in self.tasks:
            tr = self.bar_track(self.world.bars[t.bar_index])
            if tr is None or tr.trace >= m.target_ready_trace or tr.hit_count < m.target_min_hits:
                return False
        return True

    # ------------------------------------------------------------ phases
    def check_budget(self) -> None:
        budgets = self.cfg.mission.budgets
        for name, start in self.active_phases():
            budget = budgets.get(name)
            if budget is not None and self.time - start > budget:
                self.emit("phase_timeout", phase=name, budget=budget)
                self.flush_tick()
                self.log.summary = self.summary(False)
                raise PhaseTimeout(name, budget, self.log)

    def active_phases(self):
        if self.stage in ("recognize", "tension", "reel"):
            return [(self.stage, self.stage_start)]
        out = []
        for t in self.tasks:
            if t.state == LAUNCHING:
                out.append(("launch", t.phase_start))
            elif t.state == TYING:
                out.append(("tie", t.phase_start))
        return out

    def start_launch(self, task: AnchorTask) -> None:
        sim = self.world.anchors[task.index]
        sim.flying = True
        task.state = LAUNCHING
        task.phase_start = self.time
        init = Pose(sim.position.copy())
        task.belief = ae.AnchorBelief.initial(task.index, init)
        task.hover = sim.position + np.array([0.0, 0.0, self.cfg.mission.takeoff_height])
        task.wire_root = sim.wire_attach_point.copy()
        task.path = [sim.position.copy()]
        task.pid = PidState()
        self.world.anchors[task.index] = update_windings(sim, self.world)
        self.emit("phase_change", phase="launch", anchor=task.index)
        self.emit("takeoff", anchor=task.index)

    def start_tie(self, task: AnchorTask) -> None:
        track = self.bar_track(self.world.bars[task.bar_index])
        task.state = TYING
        task.phase_start = self.time
        task.target_id = track.id
        task.traj = plan_tying(track.pose, task.mirrored, target_id=track.id)
        task.follow = FollowState(0, self.cfg.mission.reach_tolerance)
        task.pid = PidState()
        self.emit("phase_change", phase="tie", anchor=task.index, target=track.id)

    def finish_tie(self, task: AnchorTask) -> None:
        bar = self.world.bars[task.bar_index]
        ok, winding = verify_tie(task.path, bar, wire_root=task.wire_root)
        task.winding = winding
        if not ok:
            task.state = FAILED
            self.emit("tie_failed", anchor=task.index, winding=round(winding, 6))
            self.failed = True
            return
        task.state = TIED
        sim = self.world.anchors[task.index]
        sim.locked = True
        sim.flying = False
        sim.velocity = np.zeros(3)
        winch = self.world.robot.winches[task.index]
        winch.tethered = True
        winch.deployed_length = min(update_wire(sim, self.world).total_length, sim.wire_deployed_length)
        self.emit("tie_verified", anchor=task.index, bar=bar.name, winding=round(winding, 6))

    def advance_mission(self) -> None:
        """Stage transitions evaluated at the start of each tick."""
        if self.stage == "recognize":
            if self.targets_ready():
                self.stage = "anchors"
                self.stage_start = self.time
            else:
                return
        if self.stage == "anchors":
            concurrent = self.cfg.mission.concurrent_tying
            for task in self.tasks:
                if task.state == DOCKED:
                    busy = (LAUNCHING,) if concurrent else (LAUNCHING, TYING)
                    if not any(t.state in busy for t in self.tasks[:task.index]):
                        self.start_launch(task)
                    break
            if all(t.state == TIED for t in self.tasks):
                self.set_stage("tension")
                self.tensions = self._per_anchor(self.cfg.mission.hold_tensions)
                self.emit("tension_applied", tensions=_r(self.tensions))
            return
        if self.stage == "tension":
            if self.time - self.stage_start >= self.cfg.mission.hold_duration - 1e-9:
                self.set_stage("reel")
                self.drive_index = -1
                self._next_drive()
            return
        if self.stage == "reel":
            step = self.cfg.mission.drive[self.drive_index] if self.drive_index < len(self.cfg.mission.drive) else None
            if step is None:
                self._complete()
            elif self.time - self.drive_start_time >= step.duration - 1e-9:
                disp = self.world.robot.position - self.drive_start_pos
                self.emit("drive_step", name=step.name, displacement=_r(disp),
                          direction=step.direction)
                self._next_drive()

    def _next_drive(self) -> None:
        self.drive_index += 1
        drive = self.cfg.mission.drive
        if self.drive_index >= len(drive):
            self._complete()
            return
        step = drive[self.drive_index]
        self.tensions = self._per_anchor(step.tensions)
        self.drive_start_pos = self.world.robot.position.copy()
        self.drive_start_time = self.time
        self.emit("tension_applied", tensions=_r(self.tensions), step=step.name)

    def _complete(self) -> None:
        self.set_stage("done")
        self.done = True

    def _per_anchor(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        return np.full(len(self.tasks), v[0]) if v.size == 1 else v.copy()

    # ------------------------------------------------------------ tick
    def sense(self):
        fixes = []
        if self.tick % self.frame_every != 0:
            return fixes
        tying = any(t.state == TYING for t in self.tasks)
        launching = any(t.state == LAUNCHING for t in self.tasks)
        want_targets = self.stage == "recognize"
        want_anchors = launching or (tying and self.cfg.mission.camera_fix_during_tying)
        if not (want_targets or want_anchors):
            return fixes
        cam_pose = self.camera_pose()
        image, boxes = sense_camera(self.world, self.camera.with_pose(cam_pose), self.rng_cam)
        for box in boxes:
            if box.label == "anchor":
                if want_anchors:
                    fix = recognize_anchor(image, box, cam_pose, self.perception)
                    if fix is not None:
                        fixes.append(fix)
            elif want_targets:
                est = recognize_target(image, box, cam_pose, self.perception)
                if est is not None:
                    self.targets = observe_target(self.targets, est, noise=self.target_noise)
        return fixes

    def estimate(self, fixes) -> None:
        self.targets = predict_targets(self.targets, self.dt, self.target_noise.process)
        active = [t for t in self.tasks if t.state in (LAUNCHING, TYING)]
        for t in active:
            t.belief = ae.ekf_predict(t.belief, self.dt, self.ekf_noise)
        assigned: dict[int, np.ndarray] = {}
        thr = self.cfg.mission.anchor_threshold
        parked = [t for t in self.tasks if t.state == TIED]
        for fix in fixes:
            # tied anchors sit at known spots; their fixes must not seed a new belief
            if any(np.linalg.norm(fix - t.belief.position) <= thr for t in parked):
                continue
            best, best_d = None, math.inf
            for t in active:
                if t.index in assigned or not ae.gate_camera_fix(t.belief, fix, thr):
                    continue
                d = float(np.linalg.norm(fix - t.belief.position))
                if d < best_d:
                    best, best_d = t, d
            if best is None:
                self.emit("gate_rejected", fix=_r(fix))
            else:
                assigned[best.index] = fix
        for t in active:
            odom = sense_odometry(self.world.anchors[t.index], self.rng_odom, self.world.noise)
            odom.camera_fix = assigned.get(t.index)
            t.belief = ae.ekf_update(t.belief, odom, self.ekf_noise)

    def plan_and_control(self) -> None:
        for t in self.tasks:
            if t.state == LAUNCHING:
                if t.belief.fix_count > 0 and np.linalg.norm(t.belief.position - t.hover) <= self.cfg.mission.reach_tolerance:
                    self.start_tie(t)
            if t.state == TYING:
                before = t.follow.active_index
                t.follow = advance(t.follow, t.traj, t.belief.position)
                if t.follow.active_index != before:
                    self.emit("waypoint_reached", anchor=t.index, index=before)
                    t.pid = PidState()
                if t.follow.done:
                    self.finish_tie(t)
            ref = t.setpoint() if t.state in (LAUNCHING, TYING) else None
            if ref is None:
                t.cmd = np.zeros(3)
                continue
            t.cmd, t.pid = pid_step(self.gains, t.pid, t.belief.position, ref, t.belief.velocity,
                                    t.estimated_yaw(), self.dt)

    def actuate(self) -> None:
        for t in self.tasks:
            sim = self.world.anchors[t.index]
            if not sim.flying:
                continue
            sim = step_anchor(sim, t.cmd, self.dt, self.rng_plant, self.world.k_v, self.world.noise)
            sim = update_windings(sim, self.world)
            self.world.anchors[t.index] = sim
            t.path.append(sim.position.copy())
        if self.stage in ("tension", "reel"):
            self.world = step_robot(self.world, self.tensions, self.dt)
        for a in self.world.anchors:
            if not a.flying:
                continue
            for i, bar in enumerate(self.world.bars):
                key = (a.id, i)
                near = bar.distance_to_axis(a.position) <= bar.radius + ANCHOR_RADIUS + 0.05
                rel = (a.position - bar.p0) @ bar.axis
                near = near and 0.0 <= rel <= bar.length
                if near and key not in self.proximity:
                    self.proximity.add(key)
                    self.emit("proximity", anchor=a.id, bar=bar.name)
                elif not near:
                    self.proximity.discard(key)

    def record(self) -> dict:
        anchors = []
        for t in self.tasks:
            sim = self.world.anchors[t.index]
            b = t.belief
            anchors.append({
                "id": t.index, "state": t.state,
                "true_pos": _r(sim.position), "true_vel": _r(sim.velocity),
                "est_pos": _r(b.position) if b is not None else None,
                "est_vel": _r(b.velocity) if b is not None else None,
                "est_u": _r(b.x[ae.U]) if b is not None else None,
                "est_phi": _r(b.x[ae.PHI]) if b is not None else None,
                "P_diag": _r(np.diag(b.P), 9) if b is not None else None,
                "active_index": t.follow.active_index if t.follow is not None else None,
                "cmd": _r(t.cmd), "wire_length": _r(update_wire(sim, self.world).total_length),
            })
        robot = self.world.robot
        return {
            "tick": self.tick, "time": round(self.time, 9), "phase": self.phase_label(),
            "robot": {"pos": _r(robot.position), "vel": _r(robot.velocity),
                      "tensions": _r([w.tension for w in robot.winches]),
                      "deployed": _r([w.deployed_length for w in robot.winches])},
            "anchors": anchors,
            "targets": [{"id": tr.id, "pos": _r(tr.position), "quat": _r(tr.pose.orientation),
                         "trace": _r(tr.trace, 9), "hits": tr.hit_count, "label": tr.label}
                        for tr in self.targets.tracks],
        }

    def phase_label(self) -> str:
        if self.stage != "anchors":
            return self.stage
        parts = [f"{t.state}:{t.index}" for t in self.tasks if t.state in (LAUNCHING, TYING)]
        return "anchors" if not parts else ",".join(parts)

    def flush_tick(self) -> None:
        rec = self.record()
        rec["events"] = [e.to_dict() for e in self.events]
        self.events = []
        self.log.ticks.append(rec)

    def summary(self, completed: bool) -> dict:
        robot = self.world.robot.position
        return {
            "completed": completed,
            "ticks": len(self.log.ticks),
            "robot_start": _r(self.robot_start), "robot_final": _r(robot),
            "rise": _r(robot[2] - self.robot_start[2]),
            "ties": {str(t.index): (t.state == TIED) for t in self.tasks},
            "windings": {str(t.index): _r(t.winding) for t in self.tasks},
        }

    def run(self) -> RunLog:
        n_ticks = int(round(self.cfg.duration * self.cfg.tick_rate))
        for self.tick in range(n_ticks):
            self.time = self.tick * self.dt
            if self.tick == 0:
                self.set_stage("recognize")
            self.advance_mission()
            if self.done:
                self.flush_tick()
                break
            self.check_budget()
            fixes = self.sense()
            self.estimate(fixes)
            self.plan_and_control()
            if self.failed:
                self.flush_tick()
                break
            self.actuate()
            self.flush_tick()
        self.log.summary = self.summary(self.done and not self.failed)
        return self.log


def run_scenario(config: ScenarioConfig) -> RunLog:
    """Run a whole mission; raises :class:`PhaseTimeout` (carrying the
    partial log) when a phase overruns its budget."""
    return Mission(config).run()
