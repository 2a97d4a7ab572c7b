"""Unit conventions and physical constants.

All public interfaces take energies in wavenumbers (cm^-1), temperatures in
Kelvin and times in picoseconds.  Internally hbar = 1 and energies are
converted to angular frequencies in rad/ps at a single point, via the factor
2*pi*c below.  Keeping the conversion in one module prevents the usual
factor-of-2pi bugs.
"""

import math

# Boltzmann constant in wavenumber units, k_B/(h c), CODATA.
KB_CM = 0.695034800  # cm^-1 / K

# Speed of light in cm/ps.
C_CM_PER_PS = 0.0299792458

# Angular frequency (rad/ps) per wavenumber (cm^-1).
CM_TO_RAD_PS = 2.0 * math.pi * C_CM_PER_PS


def wavenumber_to_angular(value_cm):
    """Convert an energy in cm^-1 to an angular frequency in rad/ps."""
    return value_cm * CM_TO_RAD_PS


def angular_to_wavenumber(value_rad_ps):
    """Convert an angular frequency in rad/ps to cm^-1."""
    return value_rad_ps / CM_TO_RAD_PS


def thermal_energy_cm(kelvin):
    """Thermal energy kT in cm^-1 for an absolute temperature in Kelvin."""
    return KB_CM * kelvin
