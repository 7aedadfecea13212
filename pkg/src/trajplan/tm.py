"""GRU decoder mapping an endpoint pair to a fixed-length sequence of
intermediate end-effector positions.

The concatenated standardized endpoint pair is fed as a constant input at
each of the T-1 decoding steps from a zero initial hidden state; every step
goes through a shared tanh common layer and a prediction head (tanh hidden
plus linear output).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arm import State
from .errors import InvalidInputError
from .models import Standardizer
from .nn import DenseLayer, GRULayer


@dataclass
class PredictedTrajectory:
    """T-1 intermediate end-effector predictions, optionally with the joint
    configurations attached by rectification."""

    ef_seq: np.ndarray  # (T-1, 3) raw units
    theta_seq: np.ndarray | None = None  # (T-1, 7) when attached

    def __len__(self):
        return self.ef_seq.shape[0]


class TrajectoryModel:
    N_STATE = 10  # theta 7 + ef 3
    N_EF = 3

    def __init__(
        self,
        standardizer: Standardizer,
        horizon: int = 11,
        n_r: int = 1,
        d_r: int = 20,
        d_h: int = 20,
        d_hy: int = 10,
        seed: int = 0,
    ):
        if horizon < 2:
            raise InvalidInputError("horizon must be >= 2")
        rng = np.random.default_rng([seed, 5])
        self.standardizer = standardizer
        self.horizon = horizon
        self.n_r = n_r
        self.d_r = d_r
        self.d_h = d_h
        self.d_hy = d_hy
        in_dim = 2 * self.N_STATE
        self.grus = []
        for i in range(n_r):
            self.grus.append(GRULayer(in_dim if i == 0 else d_r, d_r, rng))
        self.common = DenseLayer(d_r, d_h, "tanh", rng)
        self.head_hidden = DenseLayer(d_h, d_hy, "tanh", rng)
        self.head_out = DenseLayer(d_hy, self.N_EF, "linear", rng)
        self.gru_step_count = 0  # instrumentation: total GRU steps executed

    def layers(self):
        return [*self.grus, self.common, self.head_hidden, self.head_out]

    def arch_dict(self) -> dict:
        return {
            "n_r": self.n_r,
            "d_r": self.d_r,
            "d_h": self.d_h,
            "heads": [{"d_hy": self.d_hy, "out_dim": self.N_EF, "target": "ef"}],
            "T": self.horizon,
        }

    def endpoint_input(self, s0_thetas, s0_efs, sT_thetas, sT_efs) -> np.ndarray:
        """Standardized (B, 20) conditioning vector from batched endpoints."""
        sd = self.standardizer
        return np.concatenate(
            [
                sd.std_state_fwd(s0_thetas, s0_efs),
                sd.std_state_fwd(sT_thetas, sT_efs),
            ],
            axis=-1,
        )

    def forward_std(self, X: np.ndarray):
        """Unroll T-1 decoder steps on constant input X (B, 20).

        Returns standardized outputs Y (T-1, B, 3) and the caches needed by
        backward_std.
        """
        if X.ndim != 2 or X.shape[1] != 2 * self.N_STATE:
            raise InvalidInputError(
                f"expected (B, {2 * self.N_STATE}) input, got {X.shape}"
            )
        b = X.shape[0]
        steps = self.horizon - 1
        hs = [np.zeros((b, g.hidden)) for g in self.grus]
        gru_caches = [[] for _ in self.grus]
        dense_caches = []
        Y = np.empty((steps, b, self.N_EF))
        for t in range(steps):
            inp = X
            for li, gru in enumerate(self.grus):
                hs[li], c = gru.step(inp, hs[li])
                gru_caches[li].append(c)
                inp = hs[li]
                self.gru_step_count += 1
            hc, cc = self.common.forward(inp)
            hh, ch = self.head_hidden.forward(hc)
            y, co = self.head_out.forward(hh)
            dense_caches.append((cc, ch, co))
            Y[t] = y
        return Y, (gru_caches, dense_caches, X.shape)

    def backward_std(self, dY: np.ndarray, cache) -> None:
        """Accumulate parameter gradients for loss gradients dY (T-1, B, 3)."""
        gru_caches, dense_caches, xshape = cache
        steps = self.horizon - 1
        dhs = [np.zeros((xshape[0], g.hidden)) for g in self.grus]
        for t in range(steps - 1, -1, -1):
            cc, ch, co = dense_caches[t]
            dh = self.head_out.backward(dY[t], co)
            dh = self.head_hidden.backward(dh, ch)
            dh = self.common.backward(dh, cc)
            # output of the last GRU layer feeds the common layer
            dhs[-1] += dh
            for li in range(len(self.grus) - 1, -1, -1):
                dx, dh_prev = self.grus[li].step_backward(dhs[li], gru_caches[li][t])
                dhs[li] = dh_prev
                if li > 0:
                    dhs[li - 1] += dx
                # gradient w.r.t. the constant input X is not needed

    def infer_batch(self, s0_thetas, s0_efs, sT_thetas, sT_efs) -> np.ndarray:
        """Batched inference -> (B, T-1, 3) end-effector positions, raw units."""
        X = self.endpoint_input(s0_thetas, s0_efs, sT_thetas, sT_efs)
        Y, _ = self.forward_std(X)
        return self.standardizer.std_ef_inv(Y).transpose(1, 0, 2)

    def infer(self, s0: State, sT: State) -> PredictedTrajectory:
        """Predict the T-1 intermediate end-effector positions. Pure."""
        ef_seq = self.infer_batch(
            s0.theta[None, :], s0.ef[None, :], sT.theta[None, :], sT.ef[None, :]
        )[0]
        return PredictedTrajectory(ef_seq=ef_seq)


def tm_infer(tm: TrajectoryModel, s0: State, sT: State) -> PredictedTrajectory:
    return tm.infer(s0, sT)


def actions_from_trajectory(
    im, s0: State, traj: PredictedTrajectory, sT: State
) -> np.ndarray:
    """Translate a predicted trajectory into T actions via the inverse model.

    Step t pairs the previous full state with the next predicted end-effector
    position only. Intermediate full states require joint configurations,
    which the decoder does not predict; they must be attached to the
    trajectory (rectification does this).
    """
    steps = len(traj)
    T = steps + 1
    if traj.theta_seq is None:
        raise InvalidInputError(
            "trajectory carries no joint configurations; rectify it first"
        )
    if traj.theta_seq.shape[0] != steps:
        raise InvalidInputError("theta_seq length mismatch")
    actions = np.empty((T, s0.theta.shape[0]))
    prev = s0
    for t in range(T):
        ef_next = traj.ef_seq[t] if t < steps else sT.ef
        actions[t] = im.predict(prev, ef_next)
        if t < steps:
            prev = State(theta=traj.theta_seq[t], ef=traj.ef_seq[t])
    return actions
