from .agent import RLGovernor, TrainResult, evaluate_policy, select_action, train_governor
from .ddqn import DDQNTrainer, ExplorationSchedule, TrainConfig, ddqn_train_step
from .qnet import QNet, load_model, q_forward, save_model
from .replay import ReplayBuckets, build_training_pool, bucket_index
from .reward import compute_reward
