from .train import Adam, train
from .evaluate import EvalReport, evaluate, roc_auc
from .export import load_model, save_model
