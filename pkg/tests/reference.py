"""Independent transcriptions of closed-form results used as test oracles.

Written directly from the printed formulas, without the numerical rewrites
used in the library.
"""

import numpy as np


def gamma2_resonant(g0, lam, t):
    return g0 * (1 - np.exp(-lam * t))


def gamma4_resonant(g0, lam, t):
    return g0 * (1 - np.exp(-lam * t) + g0 / lam * (np.sinh(lam * t) - lam * t) * np.exp(-lam * t))


def s4_detuned(g0, lam, dl, t):
    q = lam / dl
    l2 = lam**2 + dl**2
    e = np.exp(-lam * t)
    first = g0 * lam * dl / l2 * (1 - e * (np.cos(dl * t) + q * np.sin(dl * t)))
    brace = (
        (1 - 3 * q**2) * (np.exp(lam * t) - e * np.cos(2 * dl * t))
        - 2 * (1 - q**4) * dl * t * np.sin(dl * t)
        + 4 * (1 + q**2) * lam * t * np.cos(dl * t)
        - q * (3 - q**2) * e * np.sin(2 * dl * t)
    )
    return first - g0**2 * lam**2 * dl**3 * e / (2 * l2**3) * brace


def gamma4_detuned(g0, lam, dl, t):
    q = dl / lam
    l2 = lam**2 + dl**2
    e = np.exp(-lam * t)
    first = g0 * lam**2 / l2 * (1 - e * (np.cos(dl * t) - q * np.sin(dl * t)))
    brace = (
        (1 - 3 * q**2) * (np.exp(lam * t) - e * np.cos(2 * dl * t))
        - 2 * (1 - q**4) * lam * t * np.cos(dl * t)
        + 4 * (1 + q**2) * dl * t * np.sin(dl * t)
        + q * (3 - q**2) * e * np.sin(2 * dl * t)
    )
    return first + g0**2 * lam**5 * e / (2 * l2**3) * brace


def exact_rho11_resonant(g0, lam, t):
    d = np.sqrt(complex(lam**2 - 2 * g0 * lam))
    c = np.exp(-lam * t / 2) * (np.cosh(d * t / 2) + lam / d * np.sinh(d * t / 2))
    return np.abs(c) ** 2


def exact_rate_resonant(g0, lam, t):
    d = np.sqrt(complex(lam**2 - 2 * g0 * lam))
    x = d * t / 2
    return (2 * g0 * lam * np.sinh(x) / (d * np.cosh(x) + lam * np.sinh(x))).real


def gme_rate_resonant(g0, lam, t):
    d = np.sqrt(complex(lam**2 - 4 * g0 * lam))
    x = d * t / 2
    return (2 * g0 * lam * np.sinh(x) / (d * np.cosh(x) + lam * np.sinh(x))).real


def gme_rho11_resonant(g0, lam, t):
    d = np.sqrt(complex(lam**2 - 4 * g0 * lam))
    return (np.exp(-lam * t / 2) * (np.cosh(d * t / 2) + lam / d * np.sinh(d * t / 2))).real
