"""LatentKit: latent-thinking trajectory analysis, reward modelling and reward-guided sampling."""

__version__ = "0.1.0"
