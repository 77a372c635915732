"""Latency and energy of one task under a partial-offloading plan.

A task is split along the chain user -> UAV -> LEO satellite -> (ISL
satellite | cloud).  Each tier keeps a fraction of what reaches it and
forwards the rest; the last hop computes whatever is left.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, fields

from .channel import RfParams
from .taskgraph import Task


class OffloadError(ValueError):
    pass


class InfeasibleLinkError(OffloadError):
    pass


class ZeroAllocationError(OffloadError):
    pass


class TargetMismatchError(OffloadError):
    pass


@dataclass(frozen=True)
class ComputeParams:
    energy_factor: float = 1e-25
    overhead_factor: float = 1.2
    f_user_Hz: float = 0.1e9
    f_uav_max_Hz: float = 0.5e9
    f_sat_max_Hz: float = 1.0e9
    f_cloud_max_Hz: float = 3.0e9

    def __post_init__(self) -> None:
        if not self.energy_factor > 0:
            raise ValueError("energy_factor must be positive")
        if not self.overhead_factor > 1:
            raise ValueError("overhead_factor must exceed 1")
        for name in ("f_user_Hz", "f_uav_max_Hz", "f_sat_max_Hz", "f_cloud_max_Hz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class OffloadFractions:
    mu_user: float = 1.0
    mu_uav: float = 1.0
    mu_sat: float = 1.0

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{f.name} must lie in [0, 1], got {v!r}")

    def shares(self) -> tuple[float, float, float, float]:
        """Cycle share kept by user, UAV, serving satellite and tail node."""
        m, n, l = self.mu_user, self.mu_uav, self.mu_sat
        return m, (1 - m) * n, (1 - m) * (1 - n) * l, (1 - m) * (1 - n) * (1 - l)


@dataclass(frozen=True)
class ResourceAlloc:
    f_uav_Hz: float = 0.0
    f_sat_Hz: float = 0.0
    f_tail_Hz: float = 0.0

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be nonnegative")


class TailTarget(enum.Enum):
    NONE = "none"
    ISL_SATELLITE = "isl_satellite"
    CLOUD = "cloud"


@dataclass(frozen=True)
class LinkRates:
    rate_user_uav: float
    rate_uav_sat: float
    rate_isl: float = 0.0
    rate_sat_cloud: float = 0.0
    dist_uav_sat_m: float = 0.0
    dist_isl_m: float = 0.0
    dist_sat_cloud_m: float = 0.0


@dataclass(frozen=True)
class TaskMetrics:
    t_local: float = 0.0
    e_local: float = 0.0
    t_tx_user_uav: float = 0.0
    e_tx_user_uav: float = 0.0
    t_uav: float = 0.0
    e_uav: float = 0.0
    t_tx_uav_sat: float = 0.0
    e_tx_uav_sat: float = 0.0
    t_sat: float = 0.0
    e_sat: float = 0.0
    t_tx_isl: float = 0.0
    e_tx_isl: float = 0.0
    t_isl: float = 0.0
    e_isl: float = 0.0
    t_tx_cloud: float = 0.0
    e_tx_cloud: float = 0.0
    t_cloud: float = 0.0
    e_cloud: float = 0.0
    total_latency: float = 0.0
    total_energy: float = 0.0

    def to_row(self) -> dict[str, float]:
        return asdict(self)


def _transmit(share: float, data_bits: float, rate: float, b: float, power: float,
              prop_dist_m: float = 0.0, light_speed: float = 1.0,
              link: str = "") -> tuple[float, float]:
    if share <= 0.0:
        return 0.0, 0.0
    if not rate > 0.0:
        raise InfeasibleLinkError(f"{link} link has zero rate but carries share {share:.4g}")
    payload_time = b * share * data_bits / rate
    return prop_dist_m / light_speed + payload_time, power * payload_time


def _compute(share: float, cycles: float, freq: float, iota: float,
             node: str = "") -> tuple[float, float]:
    if share <= 0.0:
        return 0.0, 0.0
    if not freq > 0.0:
        raise ZeroAllocationError(f"{node} computes share {share:.4g} with no CPU allocated")
    work = share * cycles
    return work / freq, iota * work * freq * freq


def local_segment(task: Task, fractions: OffloadFractions,
                  compute: ComputeParams) -> tuple[float, float]:
    return _compute(fractions.mu_user, task.cpu_cycles, compute.f_user_Hz,
                    compute.energy_factor, "user")


def uav_segment(task: Task, fractions: OffloadFractions, alloc: ResourceAlloc,
                rates: LinkRates, compute: ComputeParams,
                rf: RfParams) -> tuple[float, float, float, float]:
    sent = 1.0 - fractions.mu_user
    tx_t, tx_e = _transmit(sent, task.data_size_bits, rates.rate_user_uav,
                           compute.overhead_factor, rf.tx_power_user_W, link="user-UAV")
    c_t, c_e = _compute(fractions.mu_uav * sent, task.cpu_cycles, alloc.f_uav_Hz,
                        compute.energy_factor, "UAV")
    return tx_t, tx_e, c_t, c_e


def sat_segment(task: Task, fractions: OffloadFractions, alloc: ResourceAlloc,
                rates: LinkRates, compute: ComputeParams,
                rf: RfParams) -> tuple[float, float, float, float]:
    sent = (1.0 - fractions.mu_uav) * (1.0 - fractions.mu_user)
    tx_t, tx_e = _transmit(sent, task.data_size_bits, rates.rate_uav_sat,
                           compute.overhead_factor, rf.tx_power_uav_W,
                           rates.dist_uav_sat_m, rf.light_speed_mps, "UAV-satellite")
    c_t, c_e = _compute(fractions.mu_sat * sent, task.cpu_cycles, alloc.f_sat_Hz,
                        compute.energy_factor, "satellite")
    return tx_t, tx_e, c_t, c_e


def tail_segment(task: Task, fractions: OffloadFractions, alloc: ResourceAlloc,
                 rates: LinkRates, compute: ComputeParams, target: TailTarget,
                 rf: RfParams) -> tuple[float, float, float, float]:
    residual = fractions.shares()[3]
    if residual <= 0.0:
        if alloc.f_tail_Hz > 0.0:
            raise TargetMismatchError("tail allocation given but nothing is forwarded")
        return 0.0, 0.0, 0.0, 0.0
    if target is TailTarget.NONE:
        raise TargetMismatchError(f"residual share {residual:.4g} has no tail target")
    if target is TailTarget.ISL_SATELLITE:
        rate, dist, link = rates.rate_isl, rates.dist_isl_m, "ISL"
    else:
        rate, dist, link = rates.rate_sat_cloud, rates.dist_sat_cloud_m, "satellite-cloud"
    tx_t, tx_e = _transmit(residual, task.data_size_bits, rate, compute.overhead_factor,
                           rf.tx_power_sat_W, dist, rf.light_speed_mps, link)
    c_t, c_e = _compute(residual, task.cpu_cycles, alloc.f_tail_Hz,
                        compute.energy_factor, link + " node")
    return tx_t, tx_e, c_t, c_e


def task_metrics(task: Task, fractions: OffloadFractions, alloc: ResourceAlloc,
                 rates: LinkRates, compute: ComputeParams, target: TailTarget,
                 rf: RfParams) -> TaskMetrics:
    t_m, e_m = local_segment(task, fractions, compute)
    t_mn, e_mn, t_n, e_n = uav_segment(task, fractions, alloc, rates, compute, rf)
    t_nl, e_nl, t_l, e_l = sat_segment(task, fractions, alloc, rates, compute, rf)
    tail = tail_segment(task, fractions, alloc, rates, compute, target, rf)
    isl = tail if target is TailTarget.ISL_SATELLITE else (0.0, 0.0, 0.0, 0.0)
    cloud = tail if target is TailTarget.CLOUD else (0.0, 0.0, 0.0, 0.0)

    latency = max(
        t_m,
        t_mn + t_n,
        t_mn + t_nl + t_l,
        t_mn + t_nl + isl[0] + isl[2],
        t_mn + t_nl + cloud[0] + cloud[2],
    )
    energy = math.fsum((e_m, e_mn, e_n, e_nl, e_l, isl[1], isl[3], cloud[1], cloud[3]))
    return TaskMetrics(
        t_local=t_m, e_local=e_m,
        t_tx_user_uav=t_mn, e_tx_user_uav=e_mn, t_uav=t_n, e_uav=e_n,
        t_tx_uav_sat=t_nl, e_tx_uav_sat=e_nl, t_sat=t_l, e_sat=e_l,
        t_tx_isl=isl[0], e_tx_isl=isl[1], t_isl=isl[2], e_isl=isl[3],
        t_tx_cloud=cloud[0], e_tx_cloud=cloud[1], t_cloud=cloud[2], e_cloud=cloud[3],
        total_latency=latency, total_energy=energy,
    )
