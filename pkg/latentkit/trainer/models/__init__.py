from .reward_model import RewardModel, init_model, forward, loss_and_grads
