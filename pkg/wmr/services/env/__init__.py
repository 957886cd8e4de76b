from wmr.services.env.commands import (
    Command,
    ConstantSchedule,
    RandomSchedule,
    SyntheticSchedule,
    Trajectory,
    TrajectorySchedule,
    load_trajectory,
    make_schedule,
    sample_command,
)
from wmr.services.env.layout import Field, Layout
from wmr.services.env.observation import build_observation, build_world_state, projected_gravity
from wmr.services.env.rewards import REWARD_TERMS, RewardBreakdown, StepSnapshot, compute_reward
from wmr.services.env.termination import RUNNING, TERMINATED, TIMED_OUT, check_termination, tilt_angle
from wmr.services.env.vec_env import EpisodeStats, StepResult, VecEnv
