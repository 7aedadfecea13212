"""Analytic serial-manipulator model and dataset generation.

The arm is described by standard (distal) Denavit-Hartenberg parameters
loaded from a JSON file, so swapping robots requires no code changes.
Datasets (babbling transitions, recorded trajectories, endpoint pairs)
are generated with seeded, schedule-independent RNG substreams and
serialized as JSON Lines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class DHLink:
    """One link: length a (m), twist alpha (rad), offset d (m), joint offset (rad)."""

    a: float
    alpha: float
    d: float
    theta_offset: float = 0.0

    def __post_init__(self):
        for v in (self.a, self.alpha, self.d, self.theta_offset):
            if not np.isfinite(v):
                raise InvalidInputError("DH parameters must be finite")


@dataclass
class ArmModel:
    links: list[DHLink]
    joint_limits: np.ndarray  # (N, 2) [lo, hi] in rad
    home_config: np.ndarray  # (N,) rad

    def __post_init__(self):
        self.joint_limits = np.asarray(self.joint_limits, dtype=np.float64)
        self.home_config = np.asarray(self.home_config, dtype=np.float64)
        n = len(self.links)
        if self.joint_limits.shape != (n, 2):
            raise InvalidInputError("joint_limits must be (N, 2)")
        if self.home_config.shape != (n,):
            raise InvalidInputError("home_config must have one angle per joint")
        if not np.all(self.joint_limits[:, 0] < self.joint_limits[:, 1]):
            raise InvalidInputError("every joint needs lo < hi")
        if np.any(self.home_config < self.joint_limits[:, 0]) or np.any(
            self.home_config > self.joint_limits[:, 1]
        ):
            raise InvalidInputError("home_config outside joint limits")

    @property
    def n_joints(self) -> int:
        return len(self.links)

    @property
    def reach(self) -> float:
        """Upper bound on end-effector distance from base (sum of |a| + |d|)."""
        return float(sum(abs(l.a) + abs(l.d) for l in self.links))


@dataclass(frozen=True)
class State:
    """Full state: joint configuration plus FK-consistent end-effector position."""

    theta: np.ndarray  # (N,) rad
    ef: np.ndarray  # (3,) m


@dataclass(frozen=True)
class Transition:
    s: State
    action: np.ndarray  # (N,) joint deltas, rad
    s_next: State


@dataclass(frozen=True)
class Trajectory:
    states: list[State]  # length T + 1

    @property
    def horizon(self) -> int:
        return len(self.states) - 1


@dataclass(frozen=True)
class EndpointPair:
    s0: State
    sT: State


def dh_transform(link: DHLink, theta: float) -> np.ndarray:
    """Homogeneous transform of one link at joint angle theta (standard DH)."""
    th = theta + link.theta_offset
    ct, st = np.cos(th), np.sin(th)
    ca, sa = np.cos(link.alpha), np.sin(link.alpha)
    return np.array(
        [
            [ct, -st * ca, st * sa, link.a * ct],
            [st, ct * ca, -ct * sa, link.a * st],
            [0.0, sa, ca, link.d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def forward_kinematics(arm: ArmModel, theta: np.ndarray) -> np.ndarray:
    """End-effector position for one joint configuration. Pure and deterministic."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (arm.n_joints,):
        raise InvalidInputError(
            f"expected {arm.n_joints} joint angles, got shape {theta.shape}"
        )
    T = np.eye(4)
    for link, th in zip(arm.links, theta):
        T = T @ dh_transform(link, th)
    return T[:3, 3].copy()


def forward_kinematics_batch(arm: ArmModel, thetas: np.ndarray) -> np.ndarray:
    """Vectorized FK over (M, N) joint configurations -> (M, 3) positions."""
    thetas = np.asarray(thetas, dtype=np.float64)
    if thetas.ndim != 2 or thetas.shape[1] != arm.n_joints:
        raise InvalidInputError("thetas must be (M, N)")
    m = thetas.shape[0]
    T = np.broadcast_to(np.eye(4), (m, 4, 4)).copy()
    for j, link in enumerate(arm.links):
        th = thetas[:, j] + link.theta_offset
        ct, st = np.cos(th), np.sin(th)
        ca, sa = np.cos(link.alpha), np.sin(link.alpha)
        L = np.zeros((m, 4, 4))
        L[:, 0, 0] = ct
        L[:, 0, 1] = -st * ca
        L[:, 0, 2] = st * sa
        L[:, 0, 3] = link.a * ct
        L[:, 1, 0] = st
        L[:, 1, 1] = ct * ca
        L[:, 1, 2] = -ct * sa
        L[:, 1, 3] = link.a * st
        L[:, 2, 1] = sa
        L[:, 2, 2] = ca
        L[:, 2, 3] = link.d
        L[:, 3, 3] = 1.0
        T = T @ L
    return T[:, :3, 3].copy()


def fk_state(arm: ArmModel, theta: np.ndarray) -> State:
    theta = np.asarray(theta, dtype=np.float64)
    return State(theta=theta, ef=forward_kinematics(arm, theta))


# ---------------------------------------------------------------------------
# Arm description files


def arm_from_dict(spec: dict) -> ArmModel:
    links = [
        DHLink(
            a=float(l["a"]),
            alpha=float(l["alpha"]),
            d=float(l["d"]),
            theta_offset=float(l.get("theta_offset", 0.0)),
        )
        for l in spec["links"]
    ]
    return ArmModel(
        links=links,
        joint_limits=np.asarray(spec["joint_limits"], dtype=np.float64),
        home_config=np.asarray(spec["home_config"], dtype=np.float64),
    )


def load_arm(path: str) -> ArmModel:
    with open(path) as fh:
        return arm_from_dict(json.load(fh))


def default_arm() -> ArmModel:
    """7-DoF arm with KUKA LBR iiwa-style DH parameters (bundled data file)."""
    text = resources.files("trajplan.data").joinpath("kuka_iiwa.json").read_text()
    return arm_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Dataset generation


def sample_babbling(
    arm: ArmModel, n: int, delta_bound: float, seed: int
) -> list[Transition]:
    """Motor babbling: n transitions from uniform random configs with uniform
    per-joint deltas in [-delta_bound, +delta_bound], clipped to joint limits.

    Deterministic for a fixed seed; each transition draws from its own
    (seed, index) substream so generation order is irrelevant.
    """
    if n <= 0:
        raise InvalidInputError("n must be positive")
    if delta_bound < 0:
        raise InvalidInputError("delta_bound must be >= 0")
    lo, hi = arm.joint_limits[:, 0], arm.joint_limits[:, 1]
    nj = arm.n_joints
    thetas = np.empty((n, nj))
    thetas_next = np.empty((n, nj))
    for i in range(n):
        rng = np.random.default_rng([seed, 0, i])
        th = rng.uniform(lo, hi)
        delta = rng.uniform(-delta_bound, delta_bound, size=nj)
        th_next = np.clip(th + delta, lo, hi)
        thetas[i] = th
        thetas_next[i] = th_next
    efs = forward_kinematics_batch(arm, thetas)
    efs_next = forward_kinematics_batch(arm, thetas_next)
    out = []
    for i in range(n):
        s = State(theta=thetas[i], ef=efs[i])
        s_next = State(theta=thetas_next[i], ef=efs_next[i])
        # action recomputed after clipping so s_next.theta = s.theta + a exactly
        out.append(Transition(s=s, action=thetas_next[i] - thetas[i], s_next=s_next))
    return out


def record_trajectories(
    arm: ArmModel, n: int, T: int, init_noise: float, seed: int
) -> list[Trajectory]:
    """Record n joint-space linearly interpolated trajectories of horizon T.

    Each starts at home plus uniform per-joint noise in [-init_noise, +init_noise]
    (clipped to limits) and ends at a uniform random within-limits goal.
    """
    if n <= 0:
        raise InvalidInputError("n must be positive")
    if T < 2:
        raise InvalidInputError("T must be >= 2")
    if init_noise < 0:
        raise InvalidInputError("init_noise must be >= 0")
    lo, hi = arm.joint_limits[:, 0], arm.joint_limits[:, 1]
    nj = arm.n_joints
    starts = np.empty((n, nj))
    goals = np.empty((n, nj))
    for i in range(n):
        rng = np.random.default_rng([seed, 1, i])
        starts[i] = np.clip(
            arm.home_config + rng.uniform(-init_noise, init_noise, size=nj), lo, hi
        )
        goals[i] = rng.uniform(lo, hi)
    ts = np.arange(T + 1) / T  # (T+1,)
    # (n, T+1, nj) interpolated configs
    thetas = starts[:, None, :] + ts[None, :, None] * (goals - starts)[:, None, :]
    efs = forward_kinematics_batch(arm, thetas.reshape(-1, nj)).reshape(n, T + 1, 3)
    trajectories = []
    for i in range(n):
        states = [State(theta=thetas[i, t], ef=efs[i, t]) for t in range(T + 1)]
        trajectories.append(Trajectory(states=states))
    return trajectories


def extract_endpoints(trajectories: list[Trajectory]) -> list[EndpointPair]:
    """One (first, last) state pair per trajectory, order preserved."""
    if not trajectories:
        raise InvalidInputError("empty trajectory list")
    return [EndpointPair(s0=t.states[0], sT=t.states[-1]) for t in trajectories]


# ---------------------------------------------------------------------------
# JSON Lines serialization (floats round-trip exactly via repr)


def _state_to_dict(s: State) -> dict:
    return {"theta": s.theta.tolist(), "ef": s.ef.tolist()}


def _state_from_dict(d: dict) -> State:
    return State(
        theta=np.asarray(d["theta"], dtype=np.float64),
        ef=np.asarray(d["ef"], dtype=np.float64),
    )


def save_transitions(transitions: list[Transition], path: str) -> None:
    with open(path, "w") as fh:
        for t in transitions:
            fh.write(
                json.dumps(
                    {
                        "s": _state_to_dict(t.s),
                        "action": t.action.tolist(),
                        "s_next": _state_to_dict(t.s_next),
                    }
                )
                + "\n"
            )


def load_transitions(path: str) -> list[Transition]:
    out = []
    with open(path) as fh:
        for line in fh:
            d = json.loads(line)
            out.append(
                Transition(
                    s=_state_from_dict(d["s"]),
                    action=np.asarray(d["action"], dtype=np.float64),
                    s_next=_state_from_dict(d["s_next"]),
                )
            )
    return out


def save_trajectories(trajectories: list[Trajectory], path: str) -> None:
    with open(path, "w") as fh:
        for t in trajectories:
            fh.write(
                json.dumps({"states": [_state_to_dict(s) for s in t.states]}) + "\n"
            )


def load_trajectories(path: str) -> list[Trajectory]:
    out = []
    with open(path) as fh:
        for line in fh:
            d = json.loads(line)
            out.append(Trajectory(states=[_state_from_dict(s) for s in d["states"]]))
    return out


def save_endpoints(pairs: list[EndpointPair], path: str) -> None:
    with open(path, "w") as fh:
        for p in pairs:
            fh.write(
                json.dumps(
                    {"s0": _state_to_dict(p.s0), "sT": _state_to_dict(p.sT)}
                )
                + "\n"
            )


def load_endpoints(path: str) -> list[EndpointPair]:
    out = []
    with open(path) as fh:
        for line in fh:
            d = json.loads(line)
            out.append(
                EndpointPair(
                    s0=_state_from_dict(d["s0"]), sT=_state_from_dict(d["sT"])
                )
            )
    return out
