"""Simulator for quantum key distribution over partially entangled channels
via probabilistic teleportation."""

from .adversary import AttackKind, AttackModel
from .gbs import GbsOutcome, p_final_rate, p_suc, p_wrong
from .oracle import exhaustive_oracle
from .protocol import Mode, ProtocolConfig, controlled_run, repeater_run, run_protocol

__all__ = [
    "AttackKind",
    "AttackModel",
    "GbsOutcome",
    "Mode",
    "ProtocolConfig",
    "controlled_run",
    "exhaustive_oracle",
    "p_final_rate",
    "p_suc",
    "p_wrong",
    "repeater_run",
    "run_protocol",
]
