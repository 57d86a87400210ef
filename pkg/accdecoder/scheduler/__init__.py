from accdecoder.scheduler.mdp import (  # noqa
    ACTION_COUNT,
    Action,
    RewardParams,
    classify_frames,
    reward,
)
from accdecoder.scheduler.env import ChunkEnv, StepResult  # noqa
from accdecoder.scheduler.policy import Policy, load_policy, save_policy, select_action  # noqa
from accdecoder.scheduler.a2c import TrainConfig, train  # noqa
from accdecoder.scheduler.baselines import (  # noqa
    KNNBank,
    StaticScheduler,
    assignment_oracle,
    build_bank,
    oracle_search,
)
