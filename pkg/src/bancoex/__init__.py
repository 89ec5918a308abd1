"""Game-theoretic transmit power control for coexisting body area networks.

Modules:

``core``          units, the discrete power grid, seeded random streams
``pdr_model``     packet delivery ratio as a compressed exponential of SINR
``channel``       on-body gamma fading, walking people, inter-body path loss
``coexistence``   how many BANs overlap under unsynchronised TDMA
``controllers``   game best response and baseline power rules
``equilibrium``   Nash equilibrium and social-optimum checks of one stage
``sim``           repeated games, campaigns and their metrics
``cli``           the ``bancoex`` command
"""

__version__ = "0.1.0"

from .core import ConfigurationError, DomainError, PowerGrid, RngStream, make_power_grid
from .pdr_model import BPSK, DPSK, PdrModelParams, pdr_from_sinr, sinr_for_target_pdr
from .controllers import Controller, UtilityWeights
from .sim import CampaignConfig, MetricsReport, run_campaign

__all__ = [
    "BPSK", "DPSK", "CampaignConfig", "ConfigurationError", "Controller", "DomainError",
    "MetricsReport", "PdrModelParams", "PowerGrid", "RngStream", "UtilityWeights",
    "make_power_grid", "pdr_from_sinr", "run_campaign", "sinr_for_target_pdr",
]
