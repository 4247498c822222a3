"""Simulator and analysis toolkit for tree-structured referencing time
synchronization (TSRT) in wireless sensor networks."""

from .clockmodel import ErrorModel, LocalClock, Scaling, local_time, mismatch, sample_estimation_errors, true_time
from .engine import Message, MessageKind, SimConfig, Simulator
from .hts import CorrectionMode, HtsProtocol, SyncErrorReport, simulate_tsrt
from .neteval import Mode, SyncParams, evaluate, select_mode, sigma_from_ps, tau_max
from .pairwise import ExchangeRecord, compute_drift_delay, two_way_exchange
from .topology import NetworkGraph, assign_channels, linear_network, star_network
from .treebuild import TreeState, build_tree

__version__ = "0.1.0"
