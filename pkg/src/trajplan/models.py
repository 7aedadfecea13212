"""Forward and inverse models: MLPs over standardized features, trained on
motor-babbling transitions, plus analytic oracles used as test references.

The forward model maps (state, action) -> next state through a shared tanh
trunk with separate linear heads for the joint configuration and the
end-effector position. The inverse model is a single tanh stack mapping
(previous state, next end-effector position) -> action.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import arm as arm_mod
from .arm import ArmModel, State, Transition, forward_kinematics
from .errors import InvalidInputError, NumericalError, TrainingDivergenceError
from .nn import (
    DenseLayer,
    Optimizer,
    OptimizerConfig,
    collect_param_grads,
    zero_grads,
)

STD_FLOOR = 1e-8


@dataclass
class Standardizer:
    """Per-feature z-score statistics for theta, ef, action and the
    single-step end-effector displacement."""

    mean_theta: np.ndarray
    std_theta: np.ndarray
    mean_ef: np.ndarray
    std_ef: np.ndarray
    mean_action: np.ndarray
    std_action: np.ndarray
    mean_ef_delta: np.ndarray
    std_ef_delta: np.ndarray

    _FIELDS = (
        "mean_theta",
        "std_theta",
        "mean_ef",
        "std_ef",
        "mean_action",
        "std_action",
        "mean_ef_delta",
        "std_ef_delta",
    )

    def __post_init__(self):
        for name in self._FIELDS:
            setattr(
                self, name, np.asarray(getattr(self, name), dtype=np.float64)
            )
        for name in ("std_theta", "std_ef", "std_action", "std_ef_delta"):
            setattr(self, name, np.maximum(getattr(self, name), STD_FLOOR))

    @classmethod
    def from_transitions(cls, transitions: list[Transition]) -> "Standardizer":
        thetas = np.concatenate(
            [
                np.stack([t.s.theta for t in transitions]),
                np.stack([t.s_next.theta for t in transitions]),
            ]
        )
        efs = np.concatenate(
            [
                np.stack([t.s.ef for t in transitions]),
                np.stack([t.s_next.ef for t in transitions]),
            ]
        )
        actions = np.stack([t.action for t in transitions])
        deltas = np.stack([t.s_next.ef - t.s.ef for t in transitions])
        return cls(
            mean_theta=thetas.mean(axis=0),
            std_theta=thetas.std(axis=0),
            mean_ef=efs.mean(axis=0),
            std_ef=efs.std(axis=0),
            mean_action=actions.mean(axis=0),
            std_action=actions.std(axis=0),
            mean_ef_delta=deltas.mean(axis=0),
            std_ef_delta=deltas.std(axis=0),
        )

    def std_theta_fwd(self, theta):
        return (theta - self.mean_theta) / self.std_theta

    def std_theta_inv(self, z):
        return z * self.std_theta + self.mean_theta

    def std_ef_fwd(self, ef):
        return (ef - self.mean_ef) / self.std_ef

    def std_ef_inv(self, z):
        return z * self.std_ef + self.mean_ef

    def std_action_fwd(self, a):
        return (a - self.mean_action) / self.std_action

    def std_action_inv(self, z):
        return z * self.std_action + self.mean_action

    def std_ef_delta_fwd(self, ef_prev, ef_next):
        return (ef_next - ef_prev - self.mean_ef_delta) / self.std_ef_delta

    def std_state_fwd(self, thetas, efs):
        """Standardized 10-wide state block; accepts (N,) or (B, N) arrays."""
        return np.concatenate(
            [self.std_theta_fwd(thetas), self.std_ef_fwd(efs)], axis=-1
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in self._FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(**{k: np.asarray(v, dtype=np.float64) for k, v in d.items()})


@dataclass
class TrainReport:
    """Per-epoch training losses and final held-out MAEs per subvector."""

    epoch_losses: list[float] = field(default_factory=list)
    mae: dict[str, float] = field(default_factory=dict)

    def to_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            mae_cols = sorted(self.mae)
            fh.write("epoch,loss," + ",".join(f"mae_{c}" for c in mae_cols) + "\n")
            for i, loss in enumerate(self.epoch_losses):
                tail = ",".join(
                    repr(self.mae[c]) if i == len(self.epoch_losses) - 1 else ""
                    for c in mae_cols
                )
                fh.write(f"{i},{loss!r},{tail}\n")


class ForwardModel:
    """Predicts the full next state from (state, action), standardized I/O.

    The tanh trunk is bypassed by a linear skip from the inputs into both
    heads: the joint-configuration target is affine in the inputs and the
    end-effector target is dominated by an affine part, so the skip buys
    most of the accuracy within the short training budget.
    """

    N_THETA = 7
    N_EF = 3
    N_IN = N_THETA + N_EF + N_THETA  # theta + ef + action

    def __init__(
        self, standardizer: Standardizer, hidden=(128, 128, 128), seed: int = 0
    ):
        rng = np.random.default_rng([seed, 2, 0])
        self.standardizer = standardizer
        self.hidden = tuple(hidden)
        dims = [self.N_IN, *hidden]
        self.trunk = [
            DenseLayer(dims[i], dims[i + 1], "tanh", rng) for i in range(len(hidden))
        ]
        self.head_theta = DenseLayer(dims[-1] + self.N_IN, self.N_THETA, "linear", rng)
        self.head_ef = DenseLayer(dims[-1] + self.N_IN, self.N_EF, "linear", rng)

    def layers(self):
        return [*self.trunk, self.head_theta, self.head_ef]

    def forward_std(self, X: np.ndarray):
        caches = []
        H = X
        for layer in self.trunk:
            H, c = layer.forward(H)
            caches.append(c)
        Ha = np.concatenate([H, X], axis=1)
        Yt, ct = self.head_theta.forward(Ha)
        Ye, ce = self.head_ef.forward(Ha)
        return Yt, Ye, (caches, ct, ce)

    def backward_std(self, dYt, dYe, cache):
        caches, ct, ce = cache
        dHa = self.head_theta.backward(dYt, ct) + self.head_ef.backward(dYe, ce)
        dH = dHa[:, : -self.N_IN]
        dX = dHa[:, -self.N_IN :].copy()
        for layer, c in zip(reversed(self.trunk), reversed(caches)):
            dH = layer.backward(dH, c)
        return dX + dH

    def predict_batch(self, thetas, efs, actions):
        """(B,7),(B,3),(B,7) -> predicted (B,7),(B,3) in raw units."""
        sd = self.standardizer
        X = np.concatenate(
            [sd.std_state_fwd(thetas, efs), sd.std_action_fwd(actions)], axis=-1
        )
        Yt, Ye, _ = self.forward_std(X)
        return sd.std_theta_inv(Yt), sd.std_ef_inv(Ye)

    def predict(self, s: State, action: np.ndarray) -> State:
        action = np.asarray(action, dtype=np.float64)
        if s.theta.shape != (self.N_THETA,) or action.shape != (self.N_THETA,):
            raise InvalidInputError("forward model expects 7-dim theta and action")
        th, ef = self.predict_batch(
            s.theta[None, :], s.ef[None, :], action[None, :]
        )
        return State(theta=th[0], ef=ef[0])


class InverseModel:
    """Predicts the action from (previous state, next end-effector position).

    The target position enters the network as the standardized single-step
    displacement ef_next - ef rather than an absolute coordinate: a one-step
    displacement is tiny relative to the workspace, so z-scoring the absolute
    positions would leave the two inputs nearly indistinguishable and the
    displacement signal numerically invisible to the first layer. A linear
    skip from the inputs into the head mirrors the forward model.
    """

    N_THETA = 7
    N_EF = 3
    N_IN = N_THETA + N_EF + N_EF  # theta + ef + ef displacement

    def __init__(
        self, standardizer: Standardizer, hidden=(128, 128, 128), seed: int = 0
    ):
        rng = np.random.default_rng([seed, 2, 1])
        self.standardizer = standardizer
        self.hidden = tuple(hidden)
        dims = [self.N_IN, *hidden]
        self.trunk = [
            DenseLayer(dims[i], dims[i + 1], "tanh", rng) for i in range(len(hidden))
        ]
        self.head = DenseLayer(dims[-1] + self.N_IN, self.N_THETA, "linear", rng)

    def layers(self):
        return [*self.trunk, self.head]

    def forward_std(self, X: np.ndarray):
        caches = []
        H = X
        for layer in self.trunk:
            H, c = layer.forward(H)
            caches.append(c)
        Ha = np.concatenate([H, X], axis=1)
        Y, ch = self.head.forward(Ha)
        return Y, (caches, ch)

    def backward_std(self, dY, cache):
        caches, ch = cache
        dHa = self.head.backward(dY, ch)
        dH = dHa[:, : -self.N_IN]
        dX = dHa[:, -self.N_IN :].copy()
        for layer, c in zip(reversed(self.trunk), reversed(caches)):
            dH = layer.backward(dH, c)
        return dX + dH

    def predict_batch(self, thetas, efs, efs_next):
        sd = self.standardizer
        X = np.concatenate(
            [sd.std_state_fwd(thetas, efs), sd.std_ef_delta_fwd(efs, efs_next)],
            axis=-1,
        )
        Y, _ = self.forward_std(X)
        return sd.std_action_inv(Y)

    def predict(self, s_prev: State, ef_next: np.ndarray) -> np.ndarray:
        ef_next = np.asarray(ef_next, dtype=np.float64)
        if ef_next.shape != (self.N_EF,):
            raise InvalidInputError("ef_next must be 3-dim")
        return self.predict_batch(
            s_prev.theta[None, :], s_prev.ef[None, :], ef_next[None, :]
        )[0]


# ---------------------------------------------------------------------------
# Supervised training from babbling transitions


def _split(n: int, holdout_frac: float, seed: int):
    rng = np.random.default_rng([seed, 17])
    idx = rng.permutation(n)
    n_hold = max(1, int(round(n * holdout_frac)))
    return idx[n_hold:], idx[:n_hold]


def _cosine_eta(eta0: float, epoch: int, epochs: int) -> float:
    """Cosine decay of the learning rate from eta0 at epoch 0 to 0 at the end."""
    return eta0 * 0.5 * (1.0 + np.cos(np.pi * epoch / epochs))


def _transition_arrays(transitions):
    thetas = np.stack([t.s.theta for t in transitions])
    efs = np.stack([t.s.ef for t in transitions])
    actions = np.stack([t.action for t in transitions])
    thetas_next = np.stack([t.s_next.theta for t in transitions])
    efs_next = np.stack([t.s_next.ef for t in transitions])
    return thetas, efs, actions, thetas_next, efs_next


def train_fm(
    transitions: list[Transition],
    cfg: OptimizerConfig,
    epochs: int,
    hidden=(128, 128, 128),
    batch_size: int = 16,
    seed: int = 0,
    holdout_frac: float = 0.1,
    standardizer: Standardizer | None = None,
) -> tuple[ForwardModel, TrainReport]:
    """Train the forward model with cosine learning-rate decay; loss is the
    mean over the two heads of the per-head MSE against the true standardized
    next-state subvectors."""
    if len(transitions) < 2:
        raise InvalidInputError("need at least 2 transitions")
    sd = standardizer or Standardizer.from_transitions(transitions)
    fm = ForwardModel(sd, hidden=hidden, seed=seed)
    thetas, efs, actions, thetas_next, efs_next = _transition_arrays(transitions)
    X = np.concatenate(
        [sd.std_state_fwd(thetas, efs), sd.std_action_fwd(actions)], axis=-1
    )
    Tt = sd.std_theta_fwd(thetas_next)
    Te = sd.std_ef_fwd(efs_next)
    tr, ho = _split(len(transitions), holdout_frac, seed)

    report = TrainReport()
    opt_cfg = replace(cfg)
    opt = Optimizer(opt_cfg, collect_param_grads(fm.layers()))
    rng = np.random.default_rng([seed, 3])
    for epoch in range(epochs):
        opt_cfg.eta = _cosine_eta(cfg.eta, epoch, epochs)
        order = rng.permutation(tr)
        losses = []
        for start in range(0, len(order), batch_size):
            bi = order[start : start + batch_size]
            Xb, Ttb, Teb = X[bi], Tt[bi], Te[bi]
            Yt, Ye, cache = fm.forward_std(Xb)
            b = len(bi)
            lt = np.mean((Yt - Ttb) ** 2)
            le = np.mean((Ye - Teb) ** 2)
            loss = 0.5 * (lt + le)
            if not np.isfinite(loss):
                raise TrainingDivergenceError("forward-model loss diverged")
            losses.append(loss)
            zero_grads(fm.layers())
            dYt = (Yt - Ttb) / (b * fm.N_THETA)
            dYe = (Ye - Teb) / (b * fm.N_EF)
            fm.backward_std(dYt, dYe, cache)
            opt.step()
        report.epoch_losses.append(float(np.mean(losses)) if losses else float("nan"))

    th_pred, ef_pred = fm.predict_batch(thetas[ho], efs[ho], actions[ho])
    report.mae["theta"] = float(np.mean(np.abs(th_pred - thetas_next[ho])))
    report.mae["ef"] = float(np.mean(np.abs(ef_pred - efs_next[ho])))
    return fm, report


def train_im(
    transitions: list[Transition],
    cfg: OptimizerConfig,
    epochs: int,
    hidden=(128, 128, 128),
    batch_size: int = 16,
    seed: int = 0,
    holdout_frac: float = 0.1,
    standardizer: Standardizer | None = None,
) -> tuple[InverseModel, TrainReport]:
    """Train the inverse model with an action-MSE objective and cosine
    learning-rate decay."""
    if len(transitions) < 2:
        raise InvalidInputError("need at least 2 transitions")
    sd = standardizer or Standardizer.from_transitions(transitions)
    im = InverseModel(sd, hidden=hidden, seed=seed)
    thetas, efs, actions, _, efs_next = _transition_arrays(transitions)
    X = np.concatenate(
        [sd.std_state_fwd(thetas, efs), sd.std_ef_delta_fwd(efs, efs_next)], axis=-1
    )
    Ta = sd.std_action_fwd(actions)
    tr, ho = _split(len(transitions), holdout_frac, seed)

    report = TrainReport()
    opt_cfg = replace(cfg)
    opt = Optimizer(opt_cfg, collect_param_grads(im.layers()))
    rng = np.random.default_rng([seed, 4])
    for epoch in range(epochs):
        opt_cfg.eta = _cosine_eta(cfg.eta, epoch, epochs)
        order = rng.permutation(tr)
        losses = []
        for start in range(0, len(order), batch_size):
            bi = order[start : start + batch_size]
            Xb, Tab = X[bi], Ta[bi]
            Y, caches = im.forward_std(Xb)
            loss = np.mean((Y - Tab) ** 2)
            if not np.isfinite(loss):
                raise TrainingDivergenceError("inverse-model loss diverged")
            losses.append(loss)
            zero_grads(im.layers())
            dY = 2.0 * (Y - Tab) / Y.size
            im.backward_std(dY, caches)
            opt.step()
        report.epoch_losses.append(float(np.mean(losses)) if losses else float("nan"))

    a_pred = im.predict_batch(thetas[ho], efs[ho], efs_next[ho])
    report.mae["action"] = float(np.mean(np.abs(a_pred - actions[ho])))
    return im, report


# ---------------------------------------------------------------------------
# Analytic oracles (test references, independent of the learned models)


def oracle_fm(
    arm: ArmModel, s: State, action: np.ndarray, return_clipped: bool = False
):
    """Exact kinematic next state: theta' = clip(theta + a), ef' = FK(theta')."""
    action = np.asarray(action, dtype=np.float64)
    lo, hi = arm.joint_limits[:, 0], arm.joint_limits[:, 1]
    theta_next = np.clip(s.theta + action, lo, hi)
    clipped = bool(np.any(theta_next != s.theta + action))
    out = State(theta=theta_next, ef=forward_kinematics(arm, theta_next))
    return (out, clipped) if return_clipped else out


def numerical_jacobian(arm: ArmModel, theta: np.ndarray, eps: float = 1e-6):
    """Central-difference Jacobian of FK, shape (3, N)."""
    n = arm.n_joints
    J = np.empty((3, n))
    for j in range(n):
        dp = theta.copy()
        dm = theta.copy()
        dp[j] += eps
        dm[j] -= eps
        J[:, j] = (forward_kinematics(arm, dp) - forward_kinematics(arm, dm)) / (
            2.0 * eps
        )
    return J


def oracle_im_dls(
    arm: ArmModel,
    s_prev: State,
    ef_target: np.ndarray,
    iters: int = 10,
    damping: float = 1e-3,
) -> np.ndarray:
    """Damped-least-squares IK: the total joint delta moving the end effector
    from s_prev toward ef_target. Used as an inverse-model test oracle."""
    if iters < 1:
        raise InvalidInputError("iters must be >= 1")
    if damping <= 0:
        raise InvalidInputError("damping must be > 0")
    ef_target = np.asarray(ef_target, dtype=np.float64)
    lo, hi = arm.joint_limits[:, 0], arm.joint_limits[:, 1]
    theta = np.clip(s_prev.theta, lo, hi)
    err = float(np.linalg.norm(ef_target - forward_kinematics(arm, theta)))
    for _ in range(iters):
        residual = ef_target - forward_kinematics(arm, theta)
        J = numerical_jacobian(arm, theta)
        A = J @ J.T + damping**2 * np.eye(3)
        try:
            step = J.T @ np.linalg.solve(A, residual)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"ill-conditioned DLS system: {exc}") from exc
        if not np.all(np.isfinite(step)):
            raise NumericalError("non-finite DLS step")
        # Backtracking: near singularities the full dampened step can
        # overshoot and oscillate, so halve it until the residual shrinks.
        # Candidates are clipped to joint limits so the solution stays
        # executable on the arm.
        scale = 1.0
        for _ in range(20):
            cand = np.clip(theta + scale * step, lo, hi)
            cand_err = float(
                np.linalg.norm(ef_target - forward_kinematics(arm, cand))
            )
            if cand_err < err:
                theta, err = cand, cand_err
                break
            scale *= 0.5
    return theta - s_prev.theta


class OracleInverseModel:
    """Adapter giving oracle_im_dls the learned inverse model's interface."""

    def __init__(self, arm: ArmModel, iters: int = 10, damping: float = 1e-3):
        self.arm = arm
        self.iters = iters
        self.damping = damping

    def predict(self, s_prev: State, ef_next: np.ndarray) -> np.ndarray:
        return oracle_im_dls(self.arm, s_prev, ef_next, self.iters, self.damping)

    def predict_batch(self, thetas, efs, efs_next):
        out = np.empty_like(thetas)
        for i in range(thetas.shape[0]):
            out[i] = oracle_im_dls(
                self.arm,
                State(theta=thetas[i], ef=efs[i]),
                efs_next[i],
                self.iters,
                self.damping,
            )
        return out


class OracleForwardModel:
    """Adapter giving oracle_fm the learned forward model's interface."""

    def __init__(self, arm: ArmModel):
        self.arm = arm

    def predict(self, s: State, action: np.ndarray) -> State:
        return oracle_fm(self.arm, s, action)

    def predict_batch(self, thetas, efs, actions):
        lo, hi = self.arm.joint_limits[:, 0], self.arm.joint_limits[:, 1]
        thetas_next = np.clip(thetas + actions, lo, hi)
        efs_next = arm_mod.forward_kinematics_batch(self.arm, thetas_next)
        return thetas_next, efs_next
