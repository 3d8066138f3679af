"""Reservoir models: spectral densities and rotating-frame correlation functions.

Every rate formula depends on the reservoir only through the two real
functions ``Phi(t)`` and ``Psi(t)``,

    Phi(t) + i Psi(t) = 2 * integral J(w) exp(i (w_S - w) t) dw,

so the system frequency ``w_S`` never appears: ``spectral_density`` takes the
offset ``w - w_S`` as its argument.

Units are dimensionless. The Jaynes-Cummings models measure time in ``1/gamma0``
and the band-gap model in ``1/Omega0``; both reference rates default to 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .errors import ModelError


def _positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise ModelError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class ResonantJC:
    """Damped Jaynes-Cummings model on resonance (Lorentzian of width ``lam``)."""

    gamma0: float = 1.0
    lam: float = 1.0

    variant: ClassVar[str] = "resonant_jc"
    time_unit: ClassVar[str] = "1/gamma0"

    def __post_init__(self):
        _positive("gamma0", self.gamma0)
        _positive("lambda", self.lam)

    def params(self) -> dict:
        return {"gamma0": self.gamma0, "lambda": self.lam}


@dataclass(frozen=True)
class DetunedJC:
    """Damped Jaynes-Cummings model with cavity detuning ``delta = w_S - w_0``."""

    gamma0: float = 1.0
    lam: float = 1.0
    delta: float = 0.0

    variant: ClassVar[str] = "detuned_jc"
    time_unit: ClassVar[str] = "1/gamma0"

    def __post_init__(self):
        _positive("gamma0", self.gamma0)
        _positive("lambda", self.lam)
        if not np.isfinite(self.delta):
            raise ModelError("delta must be finite")

    def params(self) -> dict:
        return {"gamma0": self.gamma0, "lambda": self.lam, "delta": self.delta}


@dataclass(frozen=True)
class BandGap:
    """Two-Lorentzian model of a photonic band gap.

    A broad background of width ``gamma1`` and weight ``w1`` minus a narrow
    gap of width ``gamma2`` and weight ``w2``; ``omega0**2`` sets the overall
    coupling. ``J`` may go negative for some parameters; this is not checked.
    """

    omega0: float = 1.0
    gamma1: float = 10.0
    gamma2: float = 1.0
    w1: float = 1.1
    w2: float = 0.1

    variant: ClassVar[str] = "band_gap"
    time_unit: ClassVar[str] = "1/Omega0"

    def __post_init__(self):
        _positive("omega0", self.omega0)
        _positive("gamma1", self.gamma1)
        _positive("gamma2", self.gamma2)
        for name in ("w1", "w2"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ModelError(f"{name} must be finite and >= 0, got {value!r}")

    def params(self) -> dict:
        return {
            "omega0": self.omega0,
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "w1": self.w1,
            "w2": self.w2,
        }


@dataclass(frozen=True)
class Custom:
    """Tabulated ``Phi``, ``Psi`` on the uniform grid ``t_k = k * h``.

    Values between nodes are linearly interpolated; evaluation past the last
    node is an error.
    """

    h: float
    phi: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)

    variant: ClassVar[str] = "custom"
    time_unit: ClassVar[str] = "model time unit"

    def __post_init__(self):
        _positive("h", self.h)
        phi = np.array(self.phi, dtype=float)
        psi = np.array(self.psi, dtype=float)
        if phi.ndim != 1 or phi.shape != psi.shape or phi.size < 2:
            raise ModelError("phi and psi must be 1-d tables of equal length >= 2")
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(psi))):
            raise ModelError("correlation tables must be finite")
        phi.setflags(write=False)
        psi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)

    def __hash__(self):
        return hash((self.h, self.phi.tobytes(), self.psi.tobytes()))

    def __eq__(self, other):
        return (
            isinstance(other, Custom)
            and self.h == other.h
            and np.array_equal(self.phi, other.phi)
            and np.array_equal(self.psi, other.psi)
        )

    @property
    def grid(self) -> np.ndarray:
        return self.h * np.arange(self.phi.size)

    @property
    def t_max(self) -> float:
        return self.h * (self.phi.size - 1)

    def params(self) -> dict:
        return {"h": self.h, "phi": self.phi.tolist(), "psi": self.psi.tolist()}


ModelSpec = ResonantJC | DetunedJC | BandGap | Custom

_VARIANTS = {cls.variant: cls for cls in (ResonantJC, DetunedJC, BandGap, Custom)}
_JSON_KEYS = {"lambda": "lam"}


def spectral_density(m: ModelSpec, omega):
    """Spectral density ``J`` at frequency offset ``omega = w - w_S``."""
    x = np.asarray(omega, dtype=float)
    if isinstance(m, ResonantJC):
        out = m.gamma0 * m.lam**2 / (2 * np.pi * (x**2 + m.lam**2))
    elif isinstance(m, DetunedJC):
        out = m.gamma0 * m.lam**2 / (2 * np.pi * ((x + m.delta) ** 2 + m.lam**2))
    elif isinstance(m, BandGap):
        lor1 = m.w1 * m.gamma1 / (x**2 + (m.gamma1 / 2) ** 2)
        lor2 = m.w2 * m.gamma2 / (x**2 + (m.gamma2 / 2) ** 2)
        out = m.omega0**2 / (2 * np.pi) * (lor1 - lor2)
    elif isinstance(m, Custom):
        raise ModelError("a tabulated model has no spectral density")
    else:
        raise TypeError(f"not a model: {m!r}")
    return out if np.ndim(omega) else float(out)


def correlation(m: ModelSpec, t):
    """Return ``(Phi(t), Psi(t))``; ``t`` may be a scalar or an array."""
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0) or not np.all(np.isfinite(tt)):
        raise ModelError("correlation functions are defined for finite t >= 0")
    if isinstance(m, ResonantJC):
        phi = m.gamma0 * m.lam * np.exp(-m.lam * tt)
        psi = np.zeros_like(phi)
    elif isinstance(m, DetunedJC):
        env = m.gamma0 * m.lam * np.exp(-m.lam * tt)
        phi = env * np.cos(m.delta * tt)
        psi = env * np.sin(m.delta * tt)
    elif isinstance(m, BandGap):
        phi = 2 * m.omega0**2 * (
            m.w1 * np.exp(-m.gamma1 * tt / 2) - m.w2 * np.exp(-m.gamma2 * tt / 2)
        )
        psi = np.zeros_like(phi)
    elif isinstance(m, Custom):
        if np.any(tt > m.t_max * (1 + 1e-12)):
            raise ModelError(
                f"t beyond the tabulated range [0, {m.t_max:g}] of a custom model"
            )
        tt = np.minimum(tt, m.t_max)
        phi = np.interp(tt, m.grid, m.phi)
        psi = np.interp(tt, m.grid, m.psi)
    else:
        raise TypeError(f"not a model: {m!r}")
    if np.ndim(t) == 0:
        return float(phi), float(psi)
    return phi, psi


def kernel(m: ModelSpec, t):
    """Complex memory kernel ``(Phi + i Psi) / 2`` of the amplitude equation."""
    phi, psi = correlation(m, t)
    return 0.5 * (np.asarray(phi) + 1j * np.asarray(psi))


def time_scale(m: ModelSpec) -> float:
    """Shortest time scale of the kernel, used to size quadrature grids."""
    if isinstance(m, ResonantJC):
        return 1.0 / m.lam
    if isinstance(m, DetunedJC):
        return 1.0 / np.hypot(m.lam, m.delta)
    if isinstance(m, BandGap):
        return 2.0 / max(m.gamma1, m.gamma2)
    return m.h


def model_id(m: ModelSpec) -> str:
    if isinstance(m, Custom):
        return f"custom(h={m.h:g},n={m.phi.size})"
    args = ",".join(f"{k}={v:g}" for k, v in m.params().items())
    return f"{m.variant}({args})"


def to_dict(m: ModelSpec) -> dict:
    return {"variant": m.variant, **m.params()}


def from_dict(d: dict) -> ModelSpec:
    d = dict(d)
    try:
        cls = _VARIANTS[d.pop("variant")]
    except KeyError as exc:
        raise ModelError(f"unknown or missing model variant in {d!r}") from exc
    kwargs = {_JSON_KEYS.get(k, k): v for k, v in d.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ModelError(f"bad parameters for {cls.variant}: {exc}") from exc


def to_json(m: ModelSpec) -> str:
    return json.dumps(to_dict(m))


def from_json(text: str) -> ModelSpec:
    return from_dict(json.loads(text))
