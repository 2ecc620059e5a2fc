"""Steady-state conductor heat balance (IEEE 738 style) for line ratings.

The rating is the current at which Joule heating at the maximum allowed
conductor temperature balances the net cooling:

    I = sqrt((q_c + q_r - q_s) / R(T_max))

Pinned formula set, SI units, sea-level elevation:

* air properties at film temperature T_film = (T_max + T_a) / 2:
    rho_f = 1.293 / (1 + 0.00367 T_film)                    kg/m^3
    mu_f  = 1.458e-6 (T_film + 273)^1.5 / (T_film + 383.4)  Pa s
    k_f   = 2.424e-2 + 7.477e-5 T_film - 4.407e-9 T_film^2  W/(m C)
* forced convection, wind-direction factor K on attack angle phi:
    K     = 1.194 - cos(phi) + 0.194 cos(2 phi) + 0.368 sin(2 phi)
    q_c1  = K (1.01 + 1.35 Re^0.52) k_f dT
    q_c2  = K 0.754 Re^0.6 k_f dT,     Re = D rho_f V / mu_f
* natural convection floor:
    q_cn  = 3.645 rho_f^0.5 D^0.75 dT^1.25
  q_c is the largest of the three.
* gray-body radiation:
    q_r   = 17.8 D eps [((T_max + 273)/100)^4 - ((T_a + 273)/100)^4]
* flat-plate solar gain on the projected area:
    q_s   = alpha G D
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConductorParams:
    """Conductor constants. Defaults describe 795 kcmil 26/7 ACSR "Drake"."""

    diameter: float = 0.02814  # m
    resistance: float = 9.390e-5  # ohm/m at max_temp
    emissivity: float = 0.8
    absorptivity: float = 0.8
    max_temp: float = 100.0  # C

    def __post_init__(self):
        for name in ("diameter", "resistance", "emissivity", "absorptivity", "max_temp"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.emissivity > 1 or self.absorptivity > 1:
            raise ValueError("emissivity and absorptivity must be <= 1")


@dataclass(frozen=True)
class WeatherSample:
    ambient_temp: float  # C
    wind_speed: float  # m/s
    wind_direction: float  # degrees, direction the wind blows from
    solar_radiation: float  # W/m^2


def attack_angle(wind_direction, line_azimuth):
    """Angle between wind and conductor axis folded into [0, 90] degrees."""
    diff = np.mod(np.abs(np.asarray(wind_direction, dtype=float) - line_azimuth), 180.0)
    return np.where(diff > 90.0, 180.0 - diff, diff)


def wind_direction_factor(phi_deg):
    phi = np.radians(phi_deg)
    return 1.194 - np.cos(phi) + 0.194 * np.cos(2 * phi) + 0.368 * np.sin(2 * phi)


def heat_terms(params: ConductorParams, ambient_temp, wind_speed, wind_direction,
               solar_radiation, line_azimuth=0.0):
    """Return (q_c, q_r, q_s) in W/m; inputs broadcast as numpy arrays."""
    ta = np.asarray(ambient_temp, dtype=float)
    v = np.asarray(wind_speed, dtype=float)
    g = np.asarray(solar_radiation, dtype=float)
    tc = params.max_temp
    d = params.diameter
    dt = tc - ta

    t_film = 0.5 * (tc + ta)
    rho = 1.293 / (1.0 + 0.00367 * t_film)
    mu = 1.458e-6 * (t_film + 273.0) ** 1.5 / (t_film + 383.4)
    k_f = 2.424e-2 + 7.477e-5 * t_film - 4.407e-9 * t_film**2

    reynolds = d * rho * v / mu
    k_angle = wind_direction_factor(attack_angle(wind_direction, line_azimuth))
    q_c1 = k_angle * (1.01 + 1.35 * reynolds**0.52) * k_f * dt
    q_c2 = k_angle * 0.754 * reynolds**0.6 * k_f * dt
    q_cn = 3.645 * np.sqrt(rho) * d**0.75 * np.maximum(dt, 0.0) ** 1.25
    q_c = np.maximum(np.maximum(q_c1, q_c2), q_cn)

    q_r = 17.8 * d * params.emissivity * (((tc + 273.0) / 100.0) ** 4 - ((ta + 273.0) / 100.0) ** 4)
    q_s = params.absorptivity * g * d
    return q_c, q_r, q_s


def _check_weather(params, ambient_temp, wind_speed, solar_radiation):
    if np.any(np.asarray(ambient_temp) >= params.max_temp):
        raise ValueError(
            f"ambient temperature must stay below the conductor limit of {params.max_temp} C"
        )
    if np.any(np.asarray(wind_speed) < 0):
        raise ValueError("wind speed must be non-negative")
    if np.any(np.asarray(solar_radiation) < 0):
        raise ValueError("solar radiation must be non-negative")


def ampacity_array(params: ConductorParams, ambient_temp, wind_speed, wind_direction,
                   solar_radiation, line_azimuth=0.0) -> np.ndarray:
    """Vectorized rating in amperes."""
    _check_weather(params, ambient_temp, wind_speed, solar_radiation)
    q_c, q_r, q_s = heat_terms(params, ambient_temp, wind_speed, wind_direction,
                               solar_radiation, line_azimuth)
    return np.sqrt(np.maximum(0.0, q_c + q_r - q_s) / params.resistance)


def ampacity(params: ConductorParams, w: WeatherSample, line_azimuth: float) -> float:
    return float(ampacity_array(params, w.ambient_temp, w.wind_speed, w.wind_direction,
                                w.solar_radiation, line_azimuth))


def dlr_series(params, weather, azimuths) -> np.ndarray:
    """Hourly ratings for every line.

    ``weather`` maps "ambient_temp", "wind_speed", "wind_direction" and
    "solar_radiation" to arrays of shape (hours, n_lines); ``azimuths`` is
    (n_lines,) in degrees.  ``params`` is one ConductorParams or a sequence
    with one entry per line.
    """
    temp = np.asarray(weather["ambient_temp"], dtype=float)
    if temp.size == 0:
        return np.zeros_like(temp)
    azimuths = np.asarray(azimuths, dtype=float)
    shape = temp.shape
    for key in ("wind_speed", "wind_direction", "solar_radiation"):
        if np.shape(weather[key]) != shape:
            raise ValueError(f"{key} has shape {np.shape(weather[key])}, expected {shape}")
    if isinstance(params, ConductorParams):
        return ampacity_array(params, temp, weather["wind_speed"], weather["wind_direction"],
                              weather["solar_radiation"], azimuths)
    out = np.empty(shape)
    for k, p in enumerate(params):
        out[:, k] = ampacity_array(p, temp[:, k], weather["wind_speed"][:, k],
                                   weather["wind_direction"][:, k],
                                   weather["solar_radiation"][:, k], azimuths[k])
    return out


def initial_bearing(lat1, lon1, lat2, lon2) -> float:
    """Compass bearing in degrees from point 1 toward point 2."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    y = math.sin(dl) * math.cos(p2)
    x = math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl)
    return math.degrees(math.atan2(y, x)) % 360.0
