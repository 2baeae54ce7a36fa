"""Battery-aware charging control for RF-powered device networks."""

from .allocator import (MccWeights, PowerAllocation, allocate, allocate_maxmin, allocate_maxrate,
                        allocate_mcc, allocate_uni)
from .config import SimConfig, load_config, load_preset
from .energymodel import BatteryParams, ConsumptionModel, capacity_joules
from .feedback import FadingDistribution, FeedbackPolicy, impute_gains, select_feedback
from .lifetime import PerpetualRegimeError, estimate_statistics, predict_lifetime, verify_martingale
from .lpcore import LinearProgram, LpStatus, solve
from .rfchannel import ChannelParams, path_loss_db, sample_block, sample_placement
from .simkernel import (PlacementSpec, Scenario, UnachievableError, make_placement,
                        min_power_search, run_once, run_replicated, run_streams)

__version__ = "0.1.0"
