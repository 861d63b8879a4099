"""Rayleigh-fading link: coefficient sampling, capacity/timing, flow symbol codec."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m/s


class OutageError(RuntimeError):
    """Link cannot carry payload (zero capacity or vanished coefficient)."""


@dataclass(frozen=True)
class LinkParams:
    distance: float = 100.0       # d, meters
    carrier_hz: float = 2.4e9     # f_c
    path_loss_exp: float = 1.0    # alpha
    tx_power: float = 1.0         # P, watts
    noise_power: float = 1e-9     # sigma^2, watts
    bandwidth_hz: float = 1e6     # B

    def __post_init__(self):
        for name in ("distance", "carrier_hz", "path_loss_exp", "tx_power",
                     "noise_power", "bandwidth_hz"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ChannelRealization:
    h: complex
    snr: float             # linear
    capacity_per_s: float  # bits/second


@dataclass(frozen=True)
class CodecParams:
    bits_per_symbol: int = 8
    mag_cap: float = 32.0   # px, magnitude clamp before [0, 1] normalization
    gamma: float = 1.0      # power normalization factor

    def __post_init__(self):
        if not 1 <= self.bits_per_symbol <= 16:
            raise ValueError("bits_per_symbol must lie in [1, 16]")
        if self.mag_cap <= 0:
            raise ValueError("mag_cap must be positive")


def path_gain(link: LinkParams) -> float:
    """Large-scale amplitude gain (c / (4 pi d f_c))^alpha."""
    return (SPEED_OF_LIGHT / (4.0 * math.pi * link.distance * link.carrier_hz)) ** link.path_loss_exp


def capacity_per_s(bandwidth_hz: float, snr: float) -> float:
    return bandwidth_hz * math.log2(1.0 + snr)


def sample_channel(link: LinkParams, seed: int, beta: complex | None = None) -> ChannelRealization:
    """Draw one fading realization: h = path_gain * beta, beta ~ CN(0, 1).

    `beta` overrides the draw for deterministic tests.
    """
    if beta is None:
        rng = np.random.default_rng(seed)
        re, im = rng.standard_normal(2) * math.sqrt(0.5)
        beta = complex(re, im)
    h = path_gain(link) * beta
    snr = link.tx_power * abs(h) ** 2 / link.noise_power
    return ChannelRealization(h, snr, capacity_per_s(link.bandwidth_hz, snr))


def tx_time(load_bits: float, realization: ChannelRealization) -> float:
    """Seconds to push load_bits through a capacity-achieving pipe."""
    if realization.capacity_per_s <= 0:
        raise OutageError("link outage: zero capacity")
    return load_bits / realization.capacity_per_s


def _quantize_unit(values: np.ndarray, bits: int) -> np.ndarray:
    """Uniform quantizer on [0, 1] with 2^bits levels; returns reconstruction."""
    levels = (1 << bits) - 1
    return np.round(np.clip(values, 0.0, 1.0) * levels) / levels


def flow_encode(payloads: np.ndarray, cp: CodecParams) -> np.ndarray:
    """Map flow patch payloads to symbols in [-1, 1].

    payloads: (n, 2, H', W') with channel 0 = u, 1 = v. Each flow vector
    becomes a (magnitude, angle) pair: m = min(|f|, cap)/cap, theta =
    atan2(v, u)/(2 pi) + 1/2, each uniform-quantized to bits_per_symbol bits
    and mapped to 2x - 1. Output is 1-D, interleaved (m, theta) per pixel.
    """
    payloads = np.asarray(payloads, dtype=np.float64)
    if payloads.ndim != 4 or payloads.shape[1] != 2:
        raise ValueError(f"expected (n, 2, H', W') payloads, got {payloads.shape}")
    u = payloads[:, 0].reshape(-1)
    v = payloads[:, 1].reshape(-1)
    mag = np.minimum(np.hypot(u, v), cp.mag_cap) / cp.mag_cap
    ang = np.arctan2(v, u) / (2.0 * math.pi) + 0.5
    mag_q = _quantize_unit(mag, cp.bits_per_symbol)
    ang_q = _quantize_unit(ang, cp.bits_per_symbol)
    symbols = np.empty(2 * mag_q.size)
    symbols[0::2] = 2.0 * mag_q - 1.0
    symbols[1::2] = 2.0 * ang_q - 1.0
    return symbols


def flow_decode(symbols: np.ndarray, cp: CodecParams, patch_h: int, patch_w: int) -> np.ndarray:
    """Inverse of flow_encode: symbols back to (n, 2, H', W') flow payloads.

    Accepts complex input (real part used) and re-snaps to the quantizer grid,
    so a noiseless transmit round trip decodes identically to encode alone.
    """
    symbols = np.asarray(symbols)
    if np.iscomplexobj(symbols):
        symbols = symbols.real
    per_patch = 2 * patch_h * patch_w
    if symbols.ndim != 1 or symbols.size % per_patch != 0:
        raise ValueError(
            f"malformed symbol vector: length {symbols.size} is not a multiple of {per_patch}"
        )
    mag = _quantize_unit((symbols[0::2] + 1.0) / 2.0, cp.bits_per_symbol) * cp.mag_cap
    ang = (_quantize_unit((symbols[1::2] + 1.0) / 2.0, cp.bits_per_symbol) - 0.5) * 2.0 * math.pi
    u = mag * np.cos(ang)
    v = mag * np.sin(ang)
    n = symbols.size // per_patch
    out = np.empty((n, 2, patch_h, patch_w))
    out[:, 0] = u.reshape(n, patch_h, patch_w)
    out[:, 1] = v.reshape(n, patch_h, patch_w)
    return out


def power_normalize(symbols: np.ndarray, cp: CodecParams, p_ue: float) -> np.ndarray:
    """Scale a symbol vector so its Hermitian self-product equals gamma * P."""
    symbols = np.asarray(symbols)
    norm = float(np.sqrt(np.vdot(symbols, symbols).real))
    if norm == 0.0:
        raise ValueError("cannot power-normalize a zero vector")
    return symbols * (math.sqrt(cp.gamma * p_ue) / norm)


def transmit_analog(
    symbols: np.ndarray, realization: ChannelRealization, sigma2: float, seed: int
) -> np.ndarray:
    """y = h x + n with n ~ CN(0, sigma2); returns the zero-forced estimate y / h."""
    if abs(realization.h) == 0.0:
        raise OutageError("link outage: zero channel coefficient")
    x = np.asarray(symbols)
    if sigma2 < 0:
        raise ValueError("noise power cannot be negative")
    if sigma2 == 0.0:
        return x.astype(complex)
    rng = np.random.default_rng(seed)
    noise = (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)) * math.sqrt(sigma2 / 2.0)
    return (realization.h * x + noise) / realization.h
