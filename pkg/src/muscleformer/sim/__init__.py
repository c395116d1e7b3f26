"""Desk-scale musculoskeletal tasks driven by simplified Hill-type muscles."""

from .embodiment import DT, FRAME_SKIP, Embodiment, Joint, mini_arm, mini_elbow
from .muscle import MuscleParams, activation_step, activation_substeps, force_length, force_velocity, muscle_force
from .tasks import (
    CATALOG,
    ChannelLayout,
    TaskSpec,
    UnknownTaskError,
    VecTask,
    actuator_signatures,
    catalog_text,
    episode_seed,
    get_task,
    make_env,
    observation_signatures,
    run_episode,
    task_catalog,
    task_names,
    write_trajectory_csv,
)
