"""Virtual wave machinery: thin lenses, temporal gates, illumination signals.

Conventions
-----------
* Illumination is a Gaussian-gated carrier ``G(t_c, t) * exp(i*w*t)`` scaled by
  the thin lens toward the focus and the ``1/r`` falloff. ``t`` runs over the
  bin centers of a :class:`~vltm.scene.TimeAxis`.
* Gates act on path time: a gate centered at ``t_c`` keeps histogram bins
  whose time of flight is near ``t_c``. The profile is emitted backwards from
  the focus (retarded time), so :func:`image_value` reverses it before the
  convolution with ``H`` and reads the result at retarded time ``0``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft as sp_fft

from .scene import SPEED_OF_LIGHT, ImpulseResponse, RelayTopology, TimeAxis

# two-sided 99% quantile of the standard normal
Z99 = 2.576

GAUSSIAN = "gaussian"
HIGHER_ORDER = "higher"


@dataclass(frozen=True)
class WaveParams:
    """Monochromatic virtual wave of wavelength ``wavelength`` (meters).

    ``gate_sigma`` defaults to the width whose +-2.576 sigma span covers four
    wavelengths of travel, ``2*wavelength / (2.576*c)``.
    """

    wavelength: float
    gate_sigma: Optional[float] = None

    def __post_init__(self):
        if not (np.isfinite(self.wavelength) and self.wavelength > 0):
            raise ValueError(f"wavelength must be > 0, got {self.wavelength}")
        if self.gate_sigma is None:
            object.__setattr__(self, "gate_sigma", 2.0 * self.wavelength / (Z99 * SPEED_OF_LIGHT))
        elif not self.gate_sigma > 0:
            raise ValueError(f"gate_sigma must be > 0, got {self.gate_sigma}")

    @property
    def c(self) -> float:
        return SPEED_OF_LIGHT

    @property
    def omega(self) -> float:
        return 2.0 * np.pi * SPEED_OF_LIGHT / self.wavelength

    @property
    def k(self) -> float:
        return self.omega / SPEED_OF_LIGHT


@dataclass(frozen=True)
class GateSpec:
    center: float
    sigma: float
    kind: str = GAUSSIAN

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"gate sigma must be > 0, got {self.sigma}")
        if self.kind not in (GAUSSIAN, HIGHER_ORDER):
            raise ValueError(f"unknown gate kind {self.kind!r}")


@dataclass(eq=False)
class PhasorSignal:
    """Complex time series sampled on ``time_axis`` (time is the last axis)."""

    values: np.ndarray
    time_axis: TimeAxis
    points: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape[-1] != self.time_axis.bin_count:
            raise ValueError(f"signal has {self.values.shape[-1]} samples, "
                             f"time axis has {self.time_axis.bin_count}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("phasor signal contains non-finite values")

    @property
    def envelope(self) -> np.ndarray:
        return np.abs(self.values)


def thin_lens(x_from, x_to, params: WaveParams):
    """Phase factor ``exp(-i k |x_to - x_from|)``; broadcasts over leading axes."""
    d = np.linalg.norm(np.asarray(x_to, float) - np.asarray(x_from, float), axis=-1)
    phase = params.k * d
    out = np.cos(phase) - 1j * np.sin(phase)
    return complex(out) if np.ndim(out) == 0 else out


def _gaussian(center, sigma, t):
    return np.exp(-((t - center) ** 2) / (2.0 * sigma ** 2))


def gaussian_gate(spec: GateSpec, t):
    """Unit-amplitude Gaussian ``exp(-(t - center)^2 / (2 sigma^2))``."""
    return _gaussian(spec.center, spec.sigma, np.asarray(t, dtype=float))


def higher_order_gate(t_i4, spec: GateSpec, t):
    """Complement gate: 0 up to ``t_i4``, ``1 - G(t_i4, t)`` after it."""
    t = np.asarray(t, dtype=float)
    return np.where(t > t_i4, 1.0 - _gaussian(t_i4, spec.sigma, t), 0.0)


def gate_values(kind: str, center, sigma: float, t):
    """Evaluate a gate of ``kind`` ('gaussian', 'higher' or 'none')."""
    if kind == GAUSSIAN:
        return _gaussian(center, sigma, t)
    if kind == HIGHER_ORDER:
        return np.where(t > center, 1.0 - _gaussian(center, sigma, t), 0.0)
    if kind == "none":
        return np.ones(np.broadcast(center, t).shape)
    raise ValueError(f"unknown gate kind {kind!r}")


def _distance(a, b):
    return np.linalg.norm(np.asarray(a, float) - np.asarray(b, float), axis=-1)


def _illumination(x_l, x_focus, gate_center, params, time_axis, gate_kind):
    r = _distance(x_l, x_focus)
    if np.any(r <= 0):
        raise ValueError("illumination focus coincides with a laser point")
    t = time_axis.centers
    gate = gate_values(gate_kind, np.asarray(gate_center)[..., None], params.gate_sigma, t)
    carrier = np.exp(1j * params.omega * t)
    lens = thin_lens(x_l, x_focus, params)
    return gate * carrier * (np.asarray(lens) / r)[..., None]


def direct_time(x_l, x_v, x_s, c=SPEED_OF_LIGHT):
    """Time of flight of ``<x_l, x_v, x_s>``."""
    return (_distance(x_s, x_v) + _distance(x_l, x_v)) / c


def indirect_time(x_l, x_a, x_b, x_s, c=SPEED_OF_LIGHT):
    """Time of flight of ``<x_l, x_a, x_b, x_s>``."""
    return (_distance(x_a, x_l) + _distance(x_b, x_a) + _distance(x_s, x_b)) / c


def make_direct_illumination(x_l, x_v, x_s, params: WaveParams, time_axis: TimeAxis,
                             gate_shift: float = 0.0) -> PhasorSignal:
    """Illumination focused at ``x_v`` and gated at the 3-vertex time ``t_d``.

    ``x_l`` and ``x_s`` may be arrays of points; the result then has one
    series per broadcast (laser, SPAD) entry.
    """
    t_d = direct_time(x_l, x_v, x_s, params.c) + gate_shift
    values = _illumination(x_l, x_v, t_d, params, time_axis, GAUSSIAN)
    return PhasorSignal(values, time_axis)


def make_indirect_illumination(x_l, x_a, x_b, x_s, params: WaveParams, time_axis: TimeAxis,
                               gate_kind: str = GAUSSIAN, gate_shift: float = 0.0) -> PhasorSignal:
    """Illumination focused at ``x_a`` and gated at the 4-vertex time ``t_i4``.

    With ``gate_kind='higher'`` the envelope is the complement gate, keeping
    only paths longer than ``t_i4``.
    """
    t_i4 = indirect_time(x_l, x_a, x_b, x_s, params.c) + gate_shift
    values = _illumination(x_l, x_a, t_i4, params, time_axis, gate_kind)
    return PhasorSignal(values, time_axis)


def direct_illumination_family(topology: RelayTopology, x_v, params, time_axis, gate_shift=0.0):
    """Per-(laser, SPAD) direct illumination, values shaped ``(K_p, K_i, bins)``."""
    return make_direct_illumination(topology.laser_points[:, None, :], x_v,
                                    topology.spad_points[None, :, :], params, time_axis, gate_shift)


def indirect_illumination_family(topology: RelayTopology, x_a, x_b, params, time_axis,
                                 gate_kind=GAUSSIAN, gate_shift=0.0):
    return make_indirect_illumination(topology.laser_points[:, None, :], x_a, x_b,
                                      topology.spad_points[None, :, :], params, time_axis,
                                      gate_kind, gate_shift)


def convolve_time(a, b):
    """Full linear convolution along the last axis via zero-padded FFTs.

    Output length is ``n_a + n_b - 1``; leading axes broadcast. Real inputs
    give a real result.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    na, nb = a.shape[-1], b.shape[-1]
    if na == 0 or nb == 0:
        raise ValueError("cannot convolve an empty signal")
    n_out = na + nb - 1
    n_fft = sp_fft.next_fast_len(n_out)
    if np.iscomplexobj(a) or np.iscomplexobj(b):
        out = sp_fft.ifft(sp_fft.fft(a, n_fft) * sp_fft.fft(b, n_fft), n_fft)
    else:
        out = sp_fft.irfft(sp_fft.rfft(a, n_fft) * sp_fft.rfft(b, n_fft), n_fft)
    return out[..., :n_out]


def image_value(h: ImpulseResponse, illumination: PhasorSignal, x_focus, params: WaveParams,
                eval_time: float = 0.0) -> float:
    """Intensity imaged at ``x_focus`` under a family of illumination signals.

    ``illumination.values`` is ``(K_p, K_i, bins)`` (one profile per pair) or
    ``(K_p, bins)`` (shared by all SPADs). Each profile is convolved with its
    histogram in retarded time and sampled at ``eval_time`` (snapped to the
    nearest convolution sample); the laser and SPAD integrals are Riemann
    sums with the topology's cell areas.
    """
    ta, pa = h.time_axis, illumination.time_axis
    if not np.isclose(ta.bin_width, pa.bin_width, rtol=1e-12, atol=0.0):
        raise ValueError("illumination and impulse response use different bin widths")
    values = illumination.values
    if values.ndim == 2:
        values = values[:, None, :]
    if values.shape[:2] not in ((h.shape[0], h.shape[1]), (h.shape[0], 1)):
        raise ValueError(f"illumination shape {illumination.values.shape} does not match "
                         f"impulse response {h.shape}")
    n_p = pa.bin_count
    pos = n_p - 1 + (eval_time + pa.origin - ta.origin) / ta.bin_width
    n = int(np.rint(pos))
    n_out = n_p + ta.bin_count - 1
    if not 0 <= n < n_out:
        raise ValueError(f"eval_time {eval_time!r} is outside the convolved time axis")
    conv = convolve_time(values[..., ::-1], h.data)
    field_at_spads = conv[..., n].sum(axis=0)
    spads = h.topology.spad_points
    r_s = _distance(spads, x_focus)
    imaged = np.sum(field_at_spads * thin_lens(spads, x_focus, params) / r_s)
    weight = h.topology.cell_area("laser") * h.topology.cell_area("spad")
    return float(np.abs(weight * imaged) ** 2)
