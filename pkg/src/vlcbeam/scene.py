"""Room geometry, Lambertian LOS channels and bounded-error channel estimates.

LEDs are mounted in the ceiling facing straight down, photodiodes face
straight up, so the radiance and incidence angles coincide and
cos(phi) = cos(psi) = dz / d.  Each user moves inside a horizontal disk of
radius r around its nominal center, which bounds the LED-user distance and
hence the realizable channel gains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LedParams",
    "Scenario",
    "ChannelEstimate",
    "lambertian_order",
    "effective_pd_area",
    "channel_gain",
    "distance_bounds",
    "estimate_csit",
    "dbm_to_watts",
]


def dbm_to_watts(dbm: float) -> float:
    """Convert a power level in dBm to watts."""
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class LedParams:
    """Physical LED / photodiode parameters shared by all emitters.

    ``dc_bias``, ``current_min``, ``current_max`` and ``amplitude`` are all
    expressed in one drive-signal unit (declared by the configuration); the
    math is unit agnostic.
    """

    semi_angle_deg: float = 60.0
    fov_deg: float = 60.0
    pd_area: float = 1e-4
    refractive_index: float = 1.5
    responsivity: float = 0.54
    led_conversion: float = 1.0
    dc_bias: float = 17.5
    current_min: float = 15.0
    current_max: float = 20.0
    amplitude: float = 2.0
    variance: float = 1.0
    noise_power: float = dbm_to_watts(-98.82)

    def __post_init__(self) -> None:
        if not 0.0 < self.semi_angle_deg < 90.0:
            raise ValueError("semi_angle_deg must lie in (0, 90)")
        if not 0.0 < self.fov_deg <= 90.0:
            raise ValueError("fov_deg must lie in (0, 90]")
        if self.pd_area <= 0.0:
            raise ValueError("pd_area must be positive")
        if self.refractive_index < 1.0:
            raise ValueError("refractive_index must be >= 1")
        if self.responsivity <= 0.0 or self.led_conversion <= 0.0:
            raise ValueError("responsivity and led_conversion must be positive")
        if not self.current_min <= self.dc_bias <= self.current_max:
            raise ValueError("dc_bias must lie in [current_min, current_max]")
        if self.amplitude <= 0.0:
            raise ValueError("amplitude must be positive")
        if not 0.0 < self.variance <= self.amplitude**2:
            raise ValueError("variance must lie in (0, amplitude^2]")
        if self.noise_power <= 0.0:
            raise ValueError("noise_power must be positive")

    @property
    def optical_limit(self) -> float:
        """Per-LED headroom min{b - I_L, I_H - b} for the modulated signal."""
        return min(self.dc_bias - self.current_min, self.current_max - self.dc_bias)


@dataclass(frozen=True)
class Scenario:
    """A room: LED positions, nominal user centers and power limits."""

    led_positions: np.ndarray
    user_centers: np.ndarray
    user_radius: float
    params: LedParams
    total_power: float

    def __post_init__(self) -> None:
        leds = np.atleast_2d(np.asarray(self.led_positions, dtype=float))
        users = np.atleast_2d(np.asarray(self.user_centers, dtype=float))
        object.__setattr__(self, "led_positions", leds)
        object.__setattr__(self, "user_centers", users)
        if leds.shape[0] < 1 or users.shape[0] < 1:
            raise ValueError("need at least one LED and one user")
        if leds.shape[1] != 3 or users.shape[1] != 3:
            raise ValueError("positions must be 3-D points")
        if not np.allclose(users[:, 2], users[0, 2]):
            raise ValueError("all users must share one receiving plane")
        if np.any(leds[:, 2] <= users[0, 2]):
            raise ValueError("every LED must sit strictly above the receiving plane")
        if self.user_radius < 0.0:
            raise ValueError("user_radius must be nonnegative")
        if self.total_power <= 0.0:
            raise ValueError("total_power must be positive")

    @property
    def num_leds(self) -> int:
        return self.led_positions.shape[0]

    @property
    def num_users(self) -> int:
        return self.user_centers.shape[0]


@dataclass(frozen=True)
class ChannelEstimate:
    """Estimated channel with elementwise bounds and error-ball radius.

    Invariants: 0 <= h_lower <= h_hat <= h_upper elementwise,
    h_hat = (h_upper + h_lower) / 2 and v = ||h_upper - h_lower||^2 / 4.
    """

    h_hat: np.ndarray
    v: float
    h_upper: np.ndarray
    h_lower: np.ndarray

    def __post_init__(self) -> None:
        for name in ("h_hat", "h_upper", "h_lower"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.h_lower < -1e-15) or np.any(self.h_upper < self.h_lower - 1e-15):
            raise ValueError("channel bounds must satisfy 0 <= h_lower <= h_upper")
        if self.v < 0.0:
            raise ValueError("v must be nonnegative")


def lambertian_order(semi_angle_deg: float) -> float:
    """Lambertian order l = -ln 2 / ln(cos(semi-angle))."""
    if not 0.0 < semi_angle_deg < 90.0:
        raise ValueError("semi_angle_deg must lie in (0, 90)")
    return -math.log(2.0) / math.log(math.cos(math.radians(semi_angle_deg)))


def effective_pd_area(n_r: float, fov_deg: float, pd_area: float) -> float:
    """Effective photodiode area A_r = n_r^2 / sin^2(FOV) * A_PD."""
    if not 0.0 < fov_deg <= 90.0:
        raise ValueError("fov_deg must lie in (0, 90]")
    if n_r < 1.0 or pd_area <= 0.0:
        raise ValueError("need n_r >= 1 and pd_area > 0")
    return n_r**2 / math.sin(math.radians(fov_deg)) ** 2 * pd_area


def _gain_at_distance(dz: float, d: float, params: LedParams) -> float:
    """LOS gain at axial drop dz and LED-PD distance d (both orientations
    vertical, so cos(phi) = cos(psi) = dz / d); zero outside the FOV."""
    cos_ang = dz / d
    if cos_ang < math.cos(math.radians(params.fov_deg)) - 1e-15:
        return 0.0
    l = lambertian_order(params.semi_angle_deg)
    a_r = effective_pd_area(params.refractive_index, params.fov_deg, params.pd_area)
    c = (l + 1.0) * params.responsivity * params.led_conversion * a_r / (2.0 * math.pi)
    return c * cos_ang ** (l + 1.0) / d**2


def channel_gain(led_pos, user_pos, params: LedParams) -> float:
    """Lambertian LOS channel gain between one LED and one user position."""
    led_pos = np.asarray(led_pos, dtype=float)
    user_pos = np.asarray(user_pos, dtype=float)
    dz = led_pos[2] - user_pos[2]
    if dz <= 0.0:
        raise ValueError("LED must sit above the user")
    d = float(np.linalg.norm(led_pos - user_pos))
    return _gain_at_distance(dz, d, params)


def distance_bounds(led_pos, user_center, radius: float) -> tuple[float, float]:
    """Min and max LED-user distance over the activity disk of given radius."""
    led_pos = np.asarray(led_pos, dtype=float)
    user_center = np.asarray(user_center, dtype=float)
    dz = led_pos[2] - user_center[2]
    if dz <= 0.0:
        raise ValueError("LED must sit above the user plane")
    if radius < 0.0:
        raise ValueError("radius must be nonnegative")
    d_xy = float(np.hypot(led_pos[0] - user_center[0], led_pos[1] - user_center[1]))
    if d_xy <= radius:
        d_min = dz
    else:
        d_min = math.hypot(d_xy - radius, dz)
    d_max = math.hypot(d_xy + radius, dz)
    return d_min, d_max


def estimate_csit(scenario: Scenario, user_index: int) -> ChannelEstimate:
    """Channel estimate with elementwise bounds from the activity disk.

    On-axis the gain is monotone decreasing in distance (h ~ d^-(l+3)), so the
    elementwise upper bound comes from d_min and the lower bound from d_max.
    """
    if not 0 <= user_index < scenario.num_users:
        raise IndexError("user_index out of range")
    center = scenario.user_centers[user_index]
    n = scenario.num_leds
    h_upper = np.zeros(n)
    h_lower = np.zeros(n)
    for i in range(n):
        led = scenario.led_positions[i]
        dz = led[2] - center[2]
        d_min, d_max = distance_bounds(led, center, scenario.user_radius)
        h_upper[i] = _gain_at_distance(dz, d_min, scenario.params)
        h_lower[i] = _gain_at_distance(dz, d_max, scenario.params)
    h_hat = 0.5 * (h_upper + h_lower)
    diff = h_upper - h_lower
    v = 0.25 * float(diff @ diff)
    return ChannelEstimate(h_hat=h_hat, v=v, h_upper=h_upper, h_lower=h_lower)
