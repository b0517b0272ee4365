"""Walk through the optical downlink channel model.

Nine ceiling LEDs illuminate a 3 m x 3 m room; a photodiode on the
z = 1.7 m plane sees each LED through a Lambertian radiation pattern.  The
script prints the per-LED DC gains for a user in the middle of the room and
shows how the bounded-position uncertainty turns into a channel error ball.
"""

import numpy as np

from vlcbeam.bench import DEFAULT_LED_GRID, snr_to_power
from vlcbeam.scene import (
    LedParams,
    Scenario,
    channel_gain,
    estimate_csit,
    lambertian_order,
)

params = LedParams()
print(f"Lambertian order at {params.semi_angle_deg} deg semi-angle: "
      f"{lambertian_order(params.semi_angle_deg):.3f}")
print(f"per-LED drive amplitude headroom: {params.optical_limit:.2f} mA\n")

user = np.array([1.4, 1.6, 1.7])
print("per-LED channel gains for a user at", user)
for i, led in enumerate(DEFAULT_LED_GRID):
    g = channel_gain(led, user, params)
    print(f"  LED {i + 1} at {led[:2]}: h = {g:.3e}")

# a user known only up to a 10 cm ball: the channel is bounded entry-wise
scenario = Scenario(DEFAULT_LED_GRID, user[None, :], 0.10, params, 1.0)
est = estimate_csit(scenario, 0)
print("\nwith a 10 cm position ball the channel estimate carries an error "
      f"ball of squared radius v = {est.v:.3e}")
print("entry-wise bounds (first three LEDs):")
for i in range(3):
    print(f"  LED {i + 1}: [{est.h_lower[i]:.3e}, {est.h_upper[i]:.3e}] "
          f"around {est.h_hat[i]:.3e}")

budget = snr_to_power(scenario, 15.0)
print(f"\nelectric budget for 15 dB mean received SNR: {budget:.3e}")
