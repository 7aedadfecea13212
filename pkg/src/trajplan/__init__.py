"""Self-supervised recurrent trajectory planning for a serial manipulator."""

from .arm import (
    ArmModel,
    DHLink,
    EndpointPair,
    State,
    Trajectory,
    Transition,
    default_arm,
    extract_endpoints,
    forward_kinematics,
    record_trajectories,
    sample_babbling,
)
from .models import ForwardModel, InverseModel, Standardizer, train_fm, train_im
from .nn import OptimizerConfig, gradient_check, mse
from .tm import PredictedTrajectory, TrajectoryModel, actions_from_trajectory, tm_infer
from .trainer import (
    LossBreakdown,
    RectifiedTrajectory,
    TMTrainConfig,
    rectify,
    state_loss,
    tm_loss,
    train_tm,
)

__version__ = "0.1.0"
