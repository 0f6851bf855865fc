"""Physical constants and unit conversions.

Everything inside the package is SI (rad/s, s, m). The helpers here are the
only place where nm, THz, ps or wavelength bandwidths are turned into SI.
"""
import math

C = 299_792_458.0  # m/s
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def angular_frequency_from_wavelength(wavelength_m):
    return 2.0 * math.pi * C / wavelength_m


def wavelength_from_angular_frequency(omega):
    return 2.0 * math.pi * C / omega


def sigma_from_fwhm_bandwidth(wavelength_m, fwhm_m):
    """Gaussian angular-frequency half-bandwidth from a wavelength FWHM.

    ``sigma`` is the standard deviation of the intensity spectrum in rad/s,
    i.e. the quantity appearing in the envelope ``exp(-2 sigma^2 tau^2)``.
    """
    return (2.0 * math.pi * C / wavelength_m**2) * fwhm_m / FWHM_PER_SIGMA


def delay_from_path(x_m):
    """Path-length difference (m) to relative delay (s)."""
    return x_m / C


def path_from_delay(tau_s):
    return tau_s * C


def nm(value):
    return value * 1e-9


def thz_to_angular(f_thz):
    return 2.0 * math.pi * f_thz * 1e12


def ps(value):
    return value * 1e-12


def db_to_transmission(loss_db):
    return 10.0 ** (-loss_db / 10.0)


def transmission_to_db(eta):
    return -10.0 * math.log10(eta)
