from .cartpole import CartPoleEnv, CartPoleParams
from .highway import HighwayConfig, HighwayEnv
from .taxi import TaxiEnv

__all__ = ["CartPoleEnv", "CartPoleParams", "HighwayConfig", "HighwayEnv", "TaxiEnv"]
