"""Static scenario description shared by the environment, baselines and CLI."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .channel import RfParams
from .geometry import GeoParams
from .metrics import ComputeParams
from .taskgraph import MB_BITS

OBJECTIVES = ("energy", "latency")


@dataclass(frozen=True)
class FlightBox:
    x_min: float = 0.0
    x_max: float = 200.0
    y_min: float = 0.0
    y_max: float = 200.0
    z_min: float = 50.0
    z_max: float = 60.0

    def __post_init__(self) -> None:
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max and self.z_min <= self.z_max):
            raise ValueError("flight box is empty")

    @property
    def low(self) -> tuple[float, float, float]:
        return (self.x_min, self.y_min, self.z_min)

    @property
    def high(self) -> tuple[float, float, float]:
        return (self.x_max, self.y_max, self.z_max)


@dataclass(frozen=True)
class Scenario:
    n_users: int = 12
    n_uavs: int = 3
    n_sats: int = 5
    n_clouds: int = 3
    tasks_per_user: int = 10
    geo: GeoParams = field(default_factory=GeoParams)
    rf: RfParams = field(default_factory=RfParams)
    compute: ComputeParams = field(default_factory=ComputeParams)
    t_max_s: float = 50.0
    e_max_J: float = 400.0
    objective: str = "energy"
    reward_mode: str = "sparse"
    flight_box: FlightBox = field(default_factory=FlightBox)
    uav_max_step_m: float = 10.0
    slot_s: float = 1.0
    user_area_m: float = 200.0
    uav_init_height_m: float = 60.0
    leo_offset_range_m: tuple[float, float] = (100e3, 500e3)
    leo_offsets_m: tuple[float, ...] | None = None
    cloud_offset_range_m: tuple[float, float] = (50e3, 100e3)
    task_size_range_bits: tuple[float, float] = (0.6 * MB_BITS, 1.2 * MB_BITS)
    task_cycles: float = 3e9
    edge_prob: float = 0.3
    min_alloc_frac: float = 0.01
    seed: int = 0

    def __post_init__(self) -> None:
        errors = self.validation_errors()
        if errors:
            raise ValueError("; ".join(errors))

    def validation_errors(self) -> list[str]:
        errors = []
        for name in ("n_users", "n_uavs", "n_sats", "n_clouds", "tasks_per_user"):
            if int(getattr(self, name)) < 1:
                errors.append(f"{name} must be >= 1")
        if not self.t_max_s > 0:
            errors.append("t_max_s must be positive")
        if not self.e_max_J > 0:
            errors.append("e_max_J must be positive")
        if self.objective not in OBJECTIVES:
            errors.append(f"objective must be one of {OBJECTIVES}")
        if self.reward_mode not in ("sparse", "dense"):
            errors.append("reward_mode must be 'sparse' or 'dense'")
        if not self.uav_max_step_m >= 0:
            errors.append("uav_max_step_m must be nonnegative")
        if not self.slot_s > 0:
            errors.append("slot_s must be positive")
        if not 0.0 < self.min_alloc_frac < 1.0:
            errors.append("min_alloc_frac must lie in (0, 1)")
        if not 0.0 <= self.edge_prob <= 1.0:
            errors.append("edge_prob must lie in [0, 1]")
        if self.leo_offsets_m is not None and len(self.leo_offsets_m) != self.n_sats:
            errors.append("leo_offsets_m must list one offset per satellite")
        return errors

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    # action layout ---------------------------------------------------------
    @property
    def n_tasks(self) -> int:
        return self.n_users * self.tasks_per_user

    @property
    def head_arms(self) -> list[int]:
        """Arm count of every discrete head: users, then UAVs, then satellite tails."""
        tail = self.n_sats - 1 + self.n_clouds
        return [self.n_uavs] * self.n_users + [self.n_sats] * self.n_uavs + [tail] * self.n_sats

    @property
    def n_heads(self) -> int:
        return self.n_users + self.n_uavs + self.n_sats

    @property
    def max_arms(self) -> int:
        return max(self.head_arms)

    @property
    def continuous_dim(self) -> int:
        return 6 * self.n_tasks + 3 * self.n_uavs


def micro_scenario(**overrides) -> Scenario:
    """Two users, one UAV, two satellites (one already out of view), one cloud."""
    base = dict(n_users=2, n_uavs=1, n_sats=2, n_clouds=1, tasks_per_user=2,
                leo_offsets_m=(200e3, 1.8e6), seed=3)
    base.update(overrides)
    return Scenario(**base)
