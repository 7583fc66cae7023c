"""Physical constants and repo-wide default radio parameters."""

SPEED_OF_LIGHT = 299_792_458.0  # m/s

# Defaults shared by all generators (sub-6 GHz FR1 setup).
DEFAULT_CARRIER_HZ = 3.5e9
DEFAULT_SUBCARRIER_SPACING_HZ = 15e3
DEFAULT_DELAY_SPREAD_S = 300e-9
DEFAULT_ANTENNA_SPACING_WL = 0.5  # ULA, half-wavelength

# Floor applied to linear error ratios before converting to dB, so exact
# reconstructions report -300 dB instead of -inf.
NMSE_FLOOR_LINEAR = 1e-30
NMSE_FLOOR_DB = -300.0


def wavelength_m(carrier_hz: float) -> float:
    return SPEED_OF_LIGHT / carrier_hz


def max_doppler_hz(speed_mps: float, carrier_hz: float) -> float:
    """Maximum Doppler shift v*fc/c for a user moving at `speed_mps`."""
    return speed_mps * carrier_hz / SPEED_OF_LIGHT
