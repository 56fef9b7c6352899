"""Seeded parametric simulators used as ground truth.

Two families are shipped: an hourly building-energy simulator driven by a
synthetic multivariate weather series, and a steady-state wind-farm power
simulator driven by a single atmospheric condition. Both are closed-form
and fully deterministic given (attributes, scenario, seed), which makes
every downstream accuracy number checkable by hand against the coefficient
tables in ``data/simulator_coefficients.toml``.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Mapping

import numpy as np

from .schema import CATEGORICAL, INTEGER, NUMERIC, AttributeSchema, AttributeSpec
from .validation import ContractViolation, check_finite, require

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

WEATHER_VARIABLES = (
    "dry_bulb_c",
    "rel_humidity_pct",
    "wind_speed_ms",
    "solar_direct_wm2",
    "solar_diffuse_wm2",
    "dew_point_c",
    "pressure_kpa",
)

BUILDING = "building"
WINDFARM = "windfarm"


@lru_cache(maxsize=1)
def coefficients() -> dict:
    """The versioned simulator coefficient tables."""
    text = resources.files("surrotext.data").joinpath("simulator_coefficients.toml").read_text()
    return tomllib.loads(text)


@dataclass(frozen=True)
class WeatherScenario:
    """Hourly exogenous weather driver with calendar anchoring."""

    values: np.ndarray  # (T, 7) in WEATHER_VARIABLES order
    start_weekday: int  # 0 = Monday

    def __post_init__(self):
        require(self.values.ndim == 2 and self.values.shape[1] == len(WEATHER_VARIABLES),
                f"weather values must be (T, {len(WEATHER_VARIABLES)})")
        require(0 <= self.start_weekday <= 6, "start_weekday must be in 0..6")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, WEATHER_VARIABLES.index(name)]

    def calendar_features(self) -> np.ndarray:
        """Cyclic hour-of-day and day-of-week encodings, shape (T, 4)."""
        t = np.arange(self.T)
        hour = t % 24
        day = (self.start_weekday + t // 24) % 7
        return np.stack([
            np.sin(2 * np.pi * hour / 24.0),
            np.cos(2 * np.pi * hour / 24.0),
            np.sin(2 * np.pi * day / 7.0),
            np.cos(2 * np.pi * day / 7.0),
        ], axis=1)


def generate_weather(seed: int, T: int, climate_profile: str) -> WeatherScenario:
    """Seasonal + diurnal sinusoids with seeded AR(1) residuals."""
    require(T >= 24 and T % 24 == 0, f"T must be a positive multiple of 24, got {T}")
    cfg = coefficients()["weather"]
    try:
        profile = cfg["profiles"][climate_profile]
    except KeyError:
        raise ContractViolation(
            f"unknown climate profile {climate_profile!r}; options: "
            f"{sorted(cfg['profiles'])}") from None

    rng = np.random.default_rng(seed)
    t = np.arange(T)
    hour = t % 24
    day_of_year = (t // 24) % 365

    seasonal = profile["seasonal_amplitude_c"] * np.sin(2 * np.pi * (day_of_year - 80) / 365.0)
    diurnal = profile["diurnal_amplitude_c"] * np.sin(2 * np.pi * (hour - 9) / 24.0)

    noise = np.empty(T)
    shocks = rng.normal(0.0, cfg["ar_sigma"], size=T)
    level = 0.0
    for i in range(T):
        level = cfg["ar_rho"] * level + shocks[i]
        noise[i] = level

    temp = np.clip(profile["mean_temp_c"] + seasonal + diurnal + noise,
                   cfg["temperature_floor_c"], cfg["temperature_ceiling_c"])

    humidity = np.clip(
        profile["base_humidity_pct"] - 0.8 * (temp - profile["mean_temp_c"])
        + rng.normal(0.0, 5.0, size=T), 0.0, 100.0)

    wind = np.abs(rng.normal(4.0, 2.2, size=T))

    daylight = np.maximum(0.0, np.sin(np.pi * (hour - 6) / 12.0))
    cloudiness = np.clip(rng.beta(2.0, 2.0, size=T), 0.05, 1.0)
    direct = profile["solar_peak_wm2"] * daylight * cloudiness
    diffuse = 0.35 * profile["solar_peak_wm2"] * daylight * (1.1 - cloudiness)

    dew = np.minimum(temp, temp - (100.0 - humidity) / 5.0)
    pressure = 101.3 + rng.normal(0.0, 0.6, size=T)

    values = np.stack([temp, humidity, wind, direct, diffuse, dew, pressure], axis=1)
    start_weekday = int(rng.integers(0, 7))
    return WeatherScenario(values=values, start_weekday=start_weekday)


# ---------------------------------------------------------------------------
# building simulator

def occupancy_profile(attrs: Mapping, T: int, start_weekday: int) -> np.ndarray:
    """Hourly occupancy fraction implied by schedule attributes."""
    cfg = coefficients()["building"]
    t = np.arange(T)
    hour = t % 24
    day = (start_weekday + t // 24) % 7
    in_hours = (hour >= attrs["weekday_open_hour"]) & (hour < attrs["weekday_close_hour"])
    weekday = day < 5
    occ = np.where(weekday & in_hours, 1.0, 0.0)
    mode = attrs["weekend_operation"]
    if mode == "full":
        occ = np.where(~weekday & in_hours, 1.0, occ)
    elif mode == "reduced":
        occ = np.where(~weekday & in_hours, cfg["weekend_reduced_occupancy"], occ)
    return occ


def effective_temperature(dry_bulb: np.ndarray, smoothing: float | None = None) -> np.ndarray:
    """Exponentially smoothed outdoor temperature (building thermal mass)."""
    lam = coefficients()["building"]["thermal_mass_smoothing"] if smoothing is None else smoothing
    out = np.empty_like(dry_bulb)
    level = dry_bulb[0]
    for i, value in enumerate(dry_bulb):
        level = (1.0 - lam) * level + lam * value
        out[i] = level
    return out


def simulate_building(attrs: Mapping, weather: WeatherScenario,
                      noise_seed: int, noise_amplitude: float | None = None) -> np.ndarray:
    """Hourly energy series in kWh, length ``weather.T``.

    ``noise_amplitude`` overrides the configured bound; 0 disables noise
    (used by monotonicity probes and hand checks). Decoy attributes may be
    omitted; they have no effect on the output.
    """
    cfg = coefficients()["building"]
    causal = building_schema().subset(CAUSAL_BUILDING_ATTRIBUTES)
    causal.validate({k: v for k, v in attrs.items() if k in causal.attribute_names})

    T = weather.T
    occ = occupancy_profile(attrs, T, weather.start_weekday)
    occupied = occ > 0

    delta = attrs["unoccupied_setpoint_delta"]
    cooling = np.where(occupied, attrs["cooling_setpoint"], attrs["cooling_setpoint"] + delta)
    heating = np.where(occupied, attrs["heating_setpoint"], attrs["heating_setpoint"] - delta)

    t_eff = effective_temperature(weather.column("dry_bulb_c"))

    q_base = cfg["base_load_kwh_per_1000sqft"][attrs["building_type"]]
    q_occ = (cfg["light_per_lpd"] * attrs["lighting_power_density"]
             + cfg["plug_per_occupant"] * attrs["occupant_density"])
    q_cool = cfg["hvac_cool_kwh_per_degc"][attrs["hvac_type"]]
    q_heat = cfg["hvac_heat_kwh_per_degc"][attrs["hvac_type"]]

    intensity = (q_base
                 + q_occ * occ
                 + q_cool * np.maximum(0.0, t_eff - cooling)
                 + q_heat * np.maximum(0.0, heating - t_eff))

    story_factor = 1.0 + cfg["story_factor_per_story"] * (attrs["num_stories"] - 1)
    vintage_factor = cfg["vintage_factor"][attrs["vintage"]]
    scale = (attrs["sqft"] / 1000.0) * vintage_factor * story_factor

    amplitude = cfg["noise_amplitude"] if noise_amplitude is None else noise_amplitude
    rng = np.random.default_rng(noise_seed)
    noise = rng.uniform(-amplitude, amplitude, size=T)
    return scale * intensity * (1.0 + noise)


# ---------------------------------------------------------------------------
# wind farm simulator

def power_curve(wind_speed: float, rated_power: float) -> float:
    cfg = coefficients()["windfarm"]
    cut_in, rated_at, cut_out = cfg["cut_in_ms"], cfg["rated_speed_ms"], cfg["cut_out_ms"]
    if wind_speed < cut_in or wind_speed > cut_out:
        return 0.0
    if wind_speed >= rated_at:
        return float(rated_power)
    ramp = (wind_speed - cut_in) / (rated_at - cut_in)
    return float(rated_power * ramp ** 3)


def wake_efficiency(attrs: Mapping, atmo: Mapping) -> float:
    cfg = coefficients()["windfarm"]
    layout = attrs["layout_shape"]
    strength = cfg["wake_strength"][layout]
    align_cfg = cfg["alignment"][layout]
    angle = math.radians(atmo["wind_direction"] - align_cfg["orientation_deg"])
    align = align_cfg["base"] + align_cfg["span"] * math.cos(angle) ** 2
    loss = (strength
            * math.exp(-(attrs["mean_spacing"] - 3.0) / 4.0)
            * align
            * (1.0 + 2.0 * atmo["turbulence_intensity"]))
    return float(np.clip(1.0 - loss, cfg["wake_floor"], 1.0))


def simulate_windfarm(attrs: Mapping, atmo: Mapping) -> float:
    """Steady-state farm power output in MW."""
    windfarm_schema().validate({k: v for k, v in attrs.items()
                                if k in windfarm_schema().attribute_names})
    validate_atmosphere(atmo)
    per_turbine = power_curve(atmo["wind_speed"], attrs["rated_power"])
    return attrs["num_turbines"] * per_turbine * wake_efficiency(attrs, atmo)


def validate_atmosphere(atmo: Mapping) -> None:
    require(set(atmo) >= {"wind_speed", "wind_direction", "turbulence_intensity"},
            "atmosphere needs wind_speed, wind_direction, turbulence_intensity")
    check_finite("atmosphere", [atmo["wind_speed"], atmo["wind_direction"],
                                atmo["turbulence_intensity"]])
    require(0.0 <= atmo["wind_direction"] < 360.0, "wind_direction must be in [0, 360)")
    require(0.0 < atmo["turbulence_intensity"] < 0.5,
            "turbulence_intensity must be in (0, 0.5)")


# ---------------------------------------------------------------------------
# schemas and population samplers

BUILDING_TYPES = tuple(sorted((
    "FullServiceRestaurant", "RetailStripmall", "Warehouse", "RetailStandalone",
    "SmallOffice", "PrimarySchool", "MediumOffice", "SecondarySchool",
    "Outpatient", "QuickServiceRestaurant", "LargeOffice", "LargeHotel",
    "SmallHotel", "Hospital",
)))

DECOY_ATTRIBUTES = ("roof_color", "window_tint", "parking_spaces", "facade_material")

HVAC_TYPES = ("rooftop unit", "heat pump", "electric resistance", "chilled water plant")
VINTAGES = ("pre-1950", "1960s", "1980s", "2000s", "2020s")
WEEKEND_MODES = ("closed", "reduced", "full")


@lru_cache(maxsize=1)
def building_schema() -> AttributeSchema:
    """Schema for the building simulator: 13 causal attributes plus 4 decoys."""
    decoys = coefficients()["building"]["decoys"]
    specs = (
        AttributeSpec("building_type", CATEGORICAL, BUILDING_TYPES),
        AttributeSpec("sqft", NUMERIC, low=500.0, high=200_000.0, units="ft2"),
        AttributeSpec("num_stories", INTEGER, low=1, high=10),
        AttributeSpec("vintage", CATEGORICAL, VINTAGES),
        AttributeSpec("weekday_open_hour", INTEGER, low=0, high=24),
        AttributeSpec("weekday_close_hour", INTEGER, low=0, high=24),
        AttributeSpec("weekend_operation", CATEGORICAL, WEEKEND_MODES),
        AttributeSpec("heating_setpoint", NUMERIC, low=10.0, high=25.0, units="degC"),
        AttributeSpec("cooling_setpoint", NUMERIC, low=18.0, high=32.0, units="degC"),
        AttributeSpec("unoccupied_setpoint_delta", NUMERIC, low=0.0, high=12.0, units="degC"),
        AttributeSpec("hvac_type", CATEGORICAL, HVAC_TYPES),
        AttributeSpec("lighting_power_density", NUMERIC, low=0.1, high=5.0, units="W/ft2"),
        AttributeSpec("occupant_density", NUMERIC, low=0.1, high=10.0,
                      units="people/1000ft2"),
        AttributeSpec("roof_color", CATEGORICAL, tuple(decoys["roof_color"])),
        AttributeSpec("window_tint", CATEGORICAL, tuple(decoys["window_tint"])),
        AttributeSpec("parking_spaces", INTEGER, low=0, high=1000),
        AttributeSpec("facade_material", CATEGORICAL, tuple(decoys["facade_material"])),
    )
    return AttributeSchema(
        name=BUILDING, specs=specs,
        extra_rules=("weekday_open_hour < weekday_close_hour",
                     "heating_setpoint < cooling_setpoint"),
    )


CAUSAL_BUILDING_ATTRIBUTES = (
    "building_type", "sqft", "num_stories", "vintage", "weekday_open_hour",
    "weekday_close_hour", "weekend_operation", "heating_setpoint",
    "cooling_setpoint", "unoccupied_setpoint_delta", "hvac_type",
    "lighting_power_density", "occupant_density",
)


@lru_cache(maxsize=1)
def windfarm_schema() -> AttributeSchema:
    layouts = coefficients()["windfarm"]["sampling"]["layout_shapes"]
    specs = (
        AttributeSpec("layout_shape", CATEGORICAL, tuple(layouts)),
        AttributeSpec("num_turbines", INTEGER, low=4, high=200),
        AttributeSpec("mean_spacing", NUMERIC, low=3.0, high=10.0, units="rotor diameters"),
        AttributeSpec("rotor_diameter", NUMERIC, low=40.0, high=200.0, units="m"),
        AttributeSpec("rated_power", NUMERIC, low=0.5, high=10.0, units="MW"),
    )
    return AttributeSchema(name=WINDFARM, specs=specs)


def _weighted_choice(rng: np.random.Generator, options, weights=None):
    if weights is None:
        idx = int(rng.integers(0, len(options)))
    else:
        probs = np.asarray(weights, dtype=np.float64)
        idx = int(rng.choice(len(options), p=probs / probs.sum()))
    return options[idx]


def sample_system(kind: str, seed: int) -> dict:
    """Draw one system configuration from the population distributions."""
    rng = np.random.default_rng(seed)
    if kind == BUILDING:
        samp = coefficients()["building"]["sampling"]
        decoys = coefficients()["building"]["decoys"]
        attrs = {
            "building_type": _weighted_choice(rng, BUILDING_TYPES),
            "sqft": float(_weighted_choice(rng, samp["sqft_grid"], samp["sqft_weights"])),
            "num_stories": int(_weighted_choice(rng, samp["stories_grid"],
                                                samp["stories_weights"])),
            "vintage": _weighted_choice(rng, VINTAGES),
            "weekday_open_hour": int(_weighted_choice(rng, samp["open_hour_grid"])),
            "weekday_close_hour": int(_weighted_choice(rng, samp["close_hour_grid"])),
            "weekend_operation": _weighted_choice(rng, WEEKEND_MODES,
                                                  samp["weekend_operation_weights"]),
            "heating_setpoint": float(_weighted_choice(rng, samp["heating_setpoint_grid"])),
            "cooling_setpoint": float(_weighted_choice(rng, samp["cooling_setpoint_grid"])),
            "unoccupied_setpoint_delta": float(_weighted_choice(rng, samp["setback_delta_grid"])),
            "hvac_type": _weighted_choice(rng, HVAC_TYPES),
            "lighting_power_density": float(_weighted_choice(
                rng, samp["lighting_power_density_grid"])),
            "occupant_density": float(_weighted_choice(rng, samp["occupant_density_grid"])),
            "roof_color": _weighted_choice(rng, decoys["roof_color"]),
            "window_tint": _weighted_choice(rng, decoys["window_tint"]),
            "parking_spaces": int(_weighted_choice(rng, decoys["parking_spaces"])),
            "facade_material": _weighted_choice(rng, decoys["facade_material"]),
        }
        building_schema().validate(attrs)
        return attrs
    if kind == WINDFARM:
        samp = coefficients()["windfarm"]["sampling"]
        attrs = {
            "layout_shape": _weighted_choice(rng, samp["layout_shapes"]),
            "num_turbines": int(_weighted_choice(rng, samp["num_turbines_grid"])),
            "mean_spacing": float(_weighted_choice(rng, samp["mean_spacing_grid"])),
            "rotor_diameter": float(_weighted_choice(rng, samp["rotor_diameter_grid"])),
            "rated_power": float(_weighted_choice(rng, samp["rated_power_grid"])),
        }
        windfarm_schema().validate(attrs)
        return attrs
    raise ContractViolation(f"unknown system kind {kind!r}")


def sample_atmosphere(seed: int) -> dict:
    """One steady-state atmospheric condition for the wind simulator."""
    samp = coefficients()["windfarm"]["sampling"]
    rng = np.random.default_rng(seed)
    lo, hi = samp["wind_speed_range"]
    tlo, thi = samp["turbulence_range"]
    return {
        "wind_speed": float(rng.uniform(lo, hi)),
        "wind_direction": float(rng.uniform(0.0, 360.0)),
        "turbulence_intensity": float(rng.uniform(tlo, thi)),
    }
