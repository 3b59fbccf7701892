"""Flat-fading channel simulation for real-valued payloads.

Every symbol ``x`` goes through ``y = h * x + n`` with a fading magnitude ``h``
(``h = 1`` for AWGN) and Gaussian noise ``n ~ N(0, 10^(-snr_db/10))``.  The
receiver knows ``h`` and equalizes, ``x_hat = y / h``, then bounds the result to
``[-0.5, 1.5]``.

Random numbers come from numpy's counter-based Philox generator.  A stream is
identified by the tuple ``(seed, *key)``, e.g. ``(seed, frame, view, block)``,
so results do not depend on call order, worker scheduling or platform.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .scene import IMAGE_SIZE, N_KEYPOINTS, KeypointFrame

CHANNEL_KINDS = ("awgn", "rayleigh", "rician")
DEFAULT_RICIAN_K = 4.0
CLAMP_RANGE = (-0.5, 1.5)
BITS_PER_SYMBOL = 32

# Each 32-bit symbol carries a pixel coordinate in Q11.21 fixed point
# (11 integer bits cover 0..2047 px).
FRACTION_BITS = 21

# stream ids for substream derivation
BLOCK_KEYPOINTS = 0
BLOCK_DENSE = 1
BLOCK_EXTRACTION = 2


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *key)``; identical on every platform."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ChannelConfig:
    kind: str = "awgn"
    snr_db: float = math.inf
    rician_k: float = DEFAULT_RICIAN_K
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ConfigurationError(f"unknown channel kind {self.kind!r}; expected one of {CHANNEL_KINDS}")
        snr = float(self.snr_db)
        if math.isnan(snr) or snr == -math.inf:
            raise ConfigurationError("snr_db must be finite or +inf")
        object.__setattr__(self, "snr_db", snr)
        if self.kind == "rician" and not self.rician_k > 0:
            raise ConfigurationError("rician_k must be > 0")

    @property
    def noise_variance(self) -> float:
        return 0.0 if math.isinf(self.snr_db) else 10.0 ** (-self.snr_db / 10.0)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "snr_db": self.snr_db if math.isfinite(self.snr_db) else "inf", "seed": self.seed}
        if self.kind == "rician":
            d["rician_k"] = self.rician_k
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelConfig":
        unknown = set(d) - {"kind", "snr_db", "rician_k", "seed"}
        if unknown:
            raise ConfigurationError(f"unknown channel fields: {sorted(unknown)}")
        snr = d.get("snr_db", math.inf)
        return cls(
            kind=d.get("kind", "awgn"),
            snr_db=float(snr),
            rician_k=float(d.get("rician_k", DEFAULT_RICIAN_K)),
            seed=int(d.get("seed", 0)),
        )


@dataclass
class Payload:
    """Normalized symbols plus what is needed to undo the normalization.

    ``offset`` and ``scale`` are per dimension and cycle over ``symbols``
    (``dims`` consecutive symbols form one record).  ``header`` is side
    information that is not sent through the noisy channel.
    """

    symbols: np.ndarray
    offset: np.ndarray
    scale: np.ndarray
    bit_size: int | None = None
    header: dict = field(default_factory=dict)

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=float).ravel()
        self.offset = np.asarray(self.offset, dtype=float).ravel()
        self.scale = np.asarray(self.scale, dtype=float).ravel()
        if len(self.offset) != len(self.scale) or len(self.symbols) % len(self.scale):
            raise ContractViolation("symbol count is not a multiple of the normalization width")
        if self.bit_size is None:
            self.bit_size = BITS_PER_SYMBOL * len(self.symbols)

    def normalize(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=float).reshape(-1, len(self.scale))
        return ((v - self.offset) / self.scale).ravel()

    def denormalize(self) -> np.ndarray:
        return self.symbols.reshape(-1, len(self.scale)) * self.scale + self.offset

    def with_symbols(self, symbols: np.ndarray) -> "Payload":
        return Payload(symbols, self.offset, self.scale, self.bit_size, dict(self.header))


# ---------------------------------------------------------------------------
# Fading gains
# ---------------------------------------------------------------------------


def fading_magnitude(n1, n2, k: float | None = None):
    """Fading magnitude from the two quadrature components.

    With ``k`` None this is the Rayleigh gain ``sqrt(n1^2 + n2^2)`` (components
    drawn from ``N(0, 1/2)``).  With a K-factor the scattered part is scaled to
    variance ``1/(k+1)`` and added to the line-of-sight amplitude ``sqrt(k/(k+1))``.
    """
    n1 = np.asarray(n1, dtype=float)
    n2 = np.asarray(n2, dtype=float)
    if k is None:
        return np.hypot(n1, n2)
    if not k > 0:
        raise ContractViolation("rician K-factor must be > 0")
    s = math.sqrt(1.0 / (k + 1.0))
    return np.hypot(math.sqrt(k / (k + 1.0)) + s * n1, s * n2)


def rayleigh_gain(rng: np.random.Generator, size=None):
    """Rayleigh fading magnitude(s), ``E[h^2] = 1``."""
    shape = (2,) if size is None else (2, *np.atleast_1d(size))
    n = rng.normal(0.0, math.sqrt(0.5), size=shape)
    h = fading_magnitude(n[0], n[1])
    return float(h) if size is None else h


def rician_gain(rng: np.random.Generator, k: float = DEFAULT_RICIAN_K, size=None):
    """Rician fading magnitude(s) with linear K-factor ``k``, ``E[h^2] = 1``."""
    if not k > 0:
        raise ContractViolation("rician K-factor must be > 0")
    shape = (2,) if size is None else (2, *np.atleast_1d(size))
    n = rng.normal(0.0, math.sqrt(0.5), size=shape)
    h = fading_magnitude(n[0], n[1], k)
    return float(h) if size is None else h


def _gains(cfg: ChannelConfig, z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
    if cfg.kind == "awgn":
        return np.ones_like(z1)
    n1, n2 = z1 * math.sqrt(0.5), z2 * math.sqrt(0.5)
    return fading_magnitude(n1, n2, cfg.rician_k if cfg.kind == "rician" else None)


# ---------------------------------------------------------------------------
# Transmission
# ---------------------------------------------------------------------------


def transmit(payload: Payload, cfg: ChannelConfig, rng: np.random.Generator, clamp: bool = True) -> Payload:
    """Send ``payload`` through the channel and return the equalized symbols.

    Each symbol consumes three standard normals (two fading components, one
    noise sample) regardless of ``cfg.kind``, so a given stream yields the same
    noise realization for every channel kind and SNR.  ``clamp=False`` skips
    the receiver's ``[-0.5, 1.5]`` bound and exposes the raw equalizer output.
    """
    if not isinstance(cfg, ChannelConfig):
        raise ConfigurationError("cfg must be a ChannelConfig")
    x = payload.symbols
    if math.isinf(cfg.snr_db):
        return payload.with_symbols(x.copy())
    z = rng.standard_normal((3, x.size))
    h = _gains(cfg, z[0], z[1])
    # h == 0 has probability zero; redraw the fading components if it happens
    zero = h <= np.finfo(float).tiny
    while zero.any():
        redraw = rng.standard_normal((2, int(zero.sum())))
        h[zero] = _gains(cfg, redraw[0], redraw[1])
        zero = h <= np.finfo(float).tiny
    sigma = math.sqrt(cfg.noise_variance)
    y = h * x + sigma * z[2]
    x_hat = y / h
    if clamp:
        x_hat = np.clip(x_hat, *CLAMP_RANGE)
    return payload.with_symbols(x_hat)


# ---------------------------------------------------------------------------
# Keypoint and dense payloads
# ---------------------------------------------------------------------------


def quantize_pixels(px: np.ndarray) -> np.ndarray:
    """Round pixel coordinates to the fixed-point grid carried by a symbol."""
    scale = float(2**FRACTION_BITS)
    return np.round(np.asarray(px, dtype=float) * scale) / scale


def keypoint_payload_bits(n_keypoints: int = N_KEYPOINTS) -> int:
    return n_keypoints * 2 * BITS_PER_SYMBOL


def dense_payload_bits(image_size=IMAGE_SIZE) -> int:
    """Bits of one raw 8-bit RGB image."""
    w, h = image_size
    return w * h * 3 * 8


def encode_keypoints(frame: KeypointFrame, image_size=IMAGE_SIZE) -> Payload:
    """Divide pixel coordinates by ``(width, height)`` so they land in ``[0, 1]``.

    Coordinates are first rounded to the fixed-point grid (2^-21 px), which
    makes :func:`decode_keypoints` an exact inverse on a noiseless channel.
    Pixels outside the image are clamped to its border and the payload header
    records ``clamped=True``.
    """
    w, h = image_size
    kp = frame.keypoints
    if not np.isfinite(kp).all():
        raise ContractViolation("keypoints must be finite")
    bounded = np.clip(kp, 0.0, [w, h])
    clamped = bool((bounded != kp).any()) or frame.clamped
    if clamped and not frame.clamped:
        warnings.warn(f"view {frame.view_id}: keypoints outside the image were clamped", stacklevel=2)
    payload = Payload(np.zeros(kp.size), (0.0, 0.0), (w, h), keypoint_payload_bits(len(kp)))
    payload.symbols = payload.normalize(quantize_pixels(bounded))
    payload.header = {
        "view_id": frame.view_id,
        "theta": frame.theta,
        "validity": frame.validity.copy(),
        "clamped": clamped,
    }
    return payload


def decode_keypoints(payload: Payload, image_size=IMAGE_SIZE) -> KeypointFrame:
    w, h = image_size
    if tuple(payload.scale) != (float(w), float(h)):
        raise ContractViolation("payload was encoded for a different image size")
    hdr = payload.header
    return KeypointFrame(
        view_id=hdr.get("view_id", -1),
        theta=hdr.get("theta", float("nan")),
        keypoints=quantize_pixels(payload.denormalize()),
        validity=hdr.get("validity"),
        clamped=hdr.get("clamped", False),
    )


def encode_dense(pixels: np.ndarray, image_size=IMAGE_SIZE) -> Payload:
    """Dense per-view samples; billed as one full RGB image whatever the sample count."""
    w, h = image_size
    px = np.clip(np.asarray(pixels, dtype=float).reshape(-1, 2), 0.0, [w, h])
    payload = Payload(np.zeros(px.size), (0.0, 0.0), (w, h), dense_payload_bits(image_size))
    payload.symbols = payload.normalize(quantize_pixels(px))
    return payload


def decode_dense(payload: Payload) -> np.ndarray:
    return quantize_pixels(payload.denormalize())
