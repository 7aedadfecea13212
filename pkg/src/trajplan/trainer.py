"""Self-supervised trajectory-model training.

A predicted trajectory is rectified by chaining the frozen inverse and
forward models from the ground-truth initial state; the rectified states act
as detached targets for the decoder, together with two endpoint-anchoring
terms. Losses are computed in standardized space so reported magnitudes are
scale-free.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .arm import EndpointPair, State
from .errors import InvalidInputError, NumericalError, TrainingDivergenceError
from .models import Standardizer
from .nn import Optimizer, OptimizerConfig, collect_param_grads, zero_grads
from .tm import PredictedTrajectory, TrajectoryModel


@dataclass
class RectifiedTrajectory:
    """T-1 rectified intermediate states, the final rectified state, and the
    actions produced along the way."""

    states: list[State]
    s_tilde_T: State
    actions: np.ndarray  # (T, 7)


@dataclass
class LossBreakdown:
    rectification: float
    initial: float
    final: float

    @property
    def total(self) -> float:
        return self.rectification + self.initial + self.final


@dataclass
class TMTrainConfig:
    optimizer: OptimizerConfig
    epochs: int = 50
    batch_size: int = 64
    seed: int = 0
    checkpoint_every: int = 0  # 0 disables checkpoints
    checkpoint_dir: str | None = None
    log_path: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidInputError("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")


def state_loss(ef_hat_std: np.ndarray, ef_ref_std: np.ndarray) -> float:
    """Mean over compared subvectors of per-subvector MSE. The decoder
    predicts a single subvector (end-effector position), so k = 1."""
    ef_hat_std = np.asarray(ef_hat_std, dtype=np.float64)
    ef_ref_std = np.asarray(ef_ref_std, dtype=np.float64)
    if ef_hat_std.shape != ef_ref_std.shape:
        raise InvalidInputError("subvector shape mismatch")
    return float(np.mean((ef_hat_std - ef_ref_std) ** 2))


def rectify_batch(fm, im, s0_thetas, s0_efs, ef_hat, sT_efs):
    """Chain IM and FM along batched predicted trajectories.

    ef_hat is (B, T-1, 3) raw units. Returns rectified joint configurations
    (B, T, 7), end-effector positions (B, T, 3) and actions (B, T, 7), where
    index t of the state arrays holds the rectified state at time t+1 (the
    final slot being the goal-directed last step).
    """
    b, steps, _ = ef_hat.shape
    T = steps + 1
    thetas = np.empty((b, T, s0_thetas.shape[1]))
    efs = np.empty((b, T, 3))
    actions = np.empty((b, T, s0_thetas.shape[1]))
    th_prev, ef_prev = s0_thetas, s0_efs
    for t in range(T):
        target = ef_hat[:, t, :] if t < steps else sT_efs
        a = im.predict_batch(th_prev, ef_prev, target)
        th_next, ef_next = fm.predict_batch(th_prev, ef_prev, a)
        if not (np.all(np.isfinite(th_next)) and np.all(np.isfinite(ef_next))):
            raise NumericalError(f"non-finite rectified state at step {t + 1}")
        thetas[:, t] = th_next
        efs[:, t] = ef_next
        actions[:, t] = a
        th_prev, ef_prev = th_next, ef_next
    return thetas, efs, actions


def rectify(
    tm: TrajectoryModel, fm, im, s0: State, sT: State
) -> tuple[PredictedTrajectory, RectifiedTrajectory]:
    """Infer a trajectory and generate its rectified counterpart.

    The previous rectified state is always the IM/FM input, never the
    decoder's own prediction; the final rectified state is returned
    separately and is not a training target.
    """
    traj = tm.infer(s0, sT)
    thetas, efs, actions = rectify_batch(
        fm,
        im,
        s0.theta[None, :],
        s0.ef[None, :],
        traj.ef_seq[None, :, :],
        sT.ef[None, :],
    )
    steps = len(traj)
    states = [State(theta=thetas[0, t], ef=efs[0, t]) for t in range(steps)]
    s_tilde_T = State(theta=thetas[0, steps], ef=efs[0, steps])
    traj.theta_seq = thetas[0, :steps]
    return traj, RectifiedTrajectory(
        states=states, s_tilde_T=s_tilde_T, actions=actions[0]
    )


def tm_loss(
    traj_hat: PredictedTrajectory,
    traj_tilde: RectifiedTrajectory,
    s0: State,
    sT: State,
    standardizer: Standardizer,
) -> LossBreakdown:
    """Trajectory loss: mean rectification discrepancy plus the two
    endpoint-anchoring terms, all on standardized end-effector subvectors.
    Targets are constants; no gradient flows through them."""
    steps = len(traj_hat)
    if len(traj_tilde.states) != steps:
        raise InvalidInputError("predicted/rectified length mismatch")
    sd = standardizer
    hat = sd.std_ef_fwd(traj_hat.ef_seq)
    tilde = sd.std_ef_fwd(np.stack([s.ef for s in traj_tilde.states]))
    rect = float(
        np.mean([state_loss(hat[i], tilde[i]) for i in range(steps)])
    )
    init = state_loss(hat[0], sd.std_ef_fwd(s0.ef))
    final = state_loss(hat[-1], sd.std_ef_fwd(sT.ef))
    return LossBreakdown(rectification=rect, initial=init, final=final)


@dataclass
class EpochLog:
    epoch: int
    loss: float
    rectification: float
    initial: float
    final: float
    goal_dist: float  # diagnostic: mean ||ef_tilde(T) - ef(T)||, raw units
    wall_clock: float


def train_tm(
    endpoints: list[EndpointPair],
    fm,
    im,
    cfg: TMTrainConfig,
    horizon: int = 11,
    n_r: int = 1,
    d_r: int = 20,
    d_h: int = 20,
    d_hy: int = 10,
    standardizer: Standardizer | None = None,
) -> tuple[TrajectoryModel, list[EpochLog]]:
    """Optimize a freshly initialized trajectory model against its own
    rectified trajectories, with the forward/inverse models frozen."""
    if not endpoints:
        raise InvalidInputError("endpoints must be nonempty")
    sd = standardizer or getattr(fm, "standardizer", None)
    if sd is None:
        raise InvalidInputError("no standardizer available")
    tm = TrajectoryModel(
        sd, horizon=horizon, n_r=n_r, d_r=d_r, d_h=d_h, d_hy=d_hy, seed=cfg.seed
    )
    s0_th = np.stack([p.s0.theta for p in endpoints])
    s0_ef = np.stack([p.s0.ef for p in endpoints])
    sT_th = np.stack([p.sT.theta for p in endpoints])
    sT_ef = np.stack([p.sT.ef for p in endpoints])
    X = tm.endpoint_input(s0_th, s0_ef, sT_th, sT_ef)
    y0 = sd.std_ef_fwd(s0_ef)
    yT = sd.std_ef_fwd(sT_ef)

    opt = Optimizer(cfg.optimizer, collect_param_grads(tm.layers()))
    rng = np.random.default_rng([cfg.seed, 6])
    steps = horizon - 1
    n = len(endpoints)
    logs: list[EpochLog] = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        sums = np.zeros(4)  # rect, init, final, goal_dist
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            bi = order[start : start + cfg.batch_size]
            b = len(bi)
            Y, cache = tm.forward_std(X[bi])  # (steps, b, 3) standardized
            ef_hat = sd.std_ef_inv(Y).transpose(1, 0, 2)  # (b, steps, 3)
            _, efs_tilde, _ = rectify_batch(
                fm, im, s0_th[bi], s0_ef[bi], ef_hat, sT_ef[bi]
            )
            tilde = sd.std_ef_fwd(efs_tilde[:, :steps, :]).transpose(1, 0, 2)
            rect_err = Y - tilde
            init_err = Y[0] - y0[bi]
            final_err = Y[-1] - yT[bi]
            rect = np.mean(rect_err**2)
            init = np.mean(init_err**2)
            final = np.mean(final_err**2)
            loss = rect + init + final
            if not np.isfinite(loss):
                raise TrainingDivergenceError(
                    f"trajectory loss diverged at epoch {epoch}, batch "
                    f"{start // cfg.batch_size}"
                )
            goal = float(
                np.mean(
                    np.linalg.norm(efs_tilde[:, steps, :] - sT_ef[bi], axis=1)
                )
            )
            sums += (rect, init, final, goal)
            n_batches += 1
            zero_grads(tm.layers())
            dY = (2.0 / (3 * b)) * (rect_err / steps)
            dY[0] += (2.0 / (3 * b)) * init_err
            dY[-1] += (2.0 / (3 * b)) * final_err
            tm.backward_std(dY, cache)
            opt.step()
        means = sums / n_batches
        logs.append(
            EpochLog(
                epoch=epoch,
                loss=float(means[0] + means[1] + means[2]),
                rectification=float(means[0]),
                initial=float(means[1]),
                final=float(means[2]),
                goal_dist=float(means[3]),
                wall_clock=time.perf_counter() - t0,
            )
        )
        if (
            cfg.checkpoint_every
            and cfg.checkpoint_dir
            and (epoch + 1) % cfg.checkpoint_every == 0
        ):
            from .serialize import save_model

            save_model(tm, f"{cfg.checkpoint_dir}/tm_epoch{epoch + 1:04d}.json")
    if cfg.log_path:
        write_training_log(logs, cfg.log_path)
    return tm, logs


def write_training_log(logs: list[EpochLog], path: str) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,loss,rectification,initial,final,goal_dist,wall_clock\n")
        for l in logs:
            fh.write(
                f"{l.epoch},{l.loss!r},{l.rectification!r},{l.initial!r},"
                f"{l.final!r},{l.goal_dist!r},{l.wall_clock:.3f}\n"
            )
