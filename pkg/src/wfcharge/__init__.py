"""EV charging scheduling by water-filling, online and offline, with marginal-cost prices."""

__version__ = "0.1.0"

from .model import (
    BaselineProfile,
    ClassDemand,
    EVClassKey,
    QuadraticCost,
    Schedule,
    TimeGrid,
    WfChargeError,
    cost,
    total_load,
)
from .offline import OfflineSolution, brute_force_oracle, solve_offline
from .online import ArrivalEvent, OnlineState, advance_and_update, run_online, schedule_arrival
from .pricing import PriceTable, offline_cup, online_cup
from .waterfill import WaterFillResult, water_fill

__all__ = [
    "ArrivalEvent",
    "BaselineProfile",
    "ClassDemand",
    "EVClassKey",
    "OfflineSolution",
    "OnlineState",
    "PriceTable",
    "QuadraticCost",
    "Schedule",
    "TimeGrid",
    "WaterFillResult",
    "WfChargeError",
    "advance_and_update",
    "brute_force_oracle",
    "cost",
    "offline_cup",
    "online_cup",
    "run_online",
    "schedule_arrival",
    "solve_offline",
    "total_load",
    "water_fill",
]
