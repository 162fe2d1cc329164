"""Synthetic complex-baseband I/Q generation with an AWGN channel.

Linear schemes are drawn from unit-energy constellations and shaped with a
root-raised-cosine filter; FM and GMSK are generated as constant-envelope
phase signals. Every frame leaves the channel with unit RMS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

SPS = 8
ROLLOFF = 0.35
SPAN = 24
GMSK_BT = 0.35
SAMPLE_RATE = 1e6

AMPLITUDE = "Amplitude"
PHASE = "Phase"
AMP_PHASE = "Amplitude-and-Phase"
FREQUENCY = "Frequency"
GROUPS = (AMPLITUDE, PHASE, AMP_PHASE, FREQUENCY)

# full 24-class list and group assignment of the RadioML 2018.01A benchmark
GROUP_OF: Dict[str, str] = {
    **{m: AMPLITUDE for m in ("OOK", "4ASK", "8ASK", "AM-SSB-SC", "AM-SSB-WC", "AM-DSB-WC", "AM-DSB-SC")},
    **{m: PHASE for m in ("BPSK", "QPSK", "8PSK", "16PSK", "32PSK", "OQPSK")},
    **{
        m: AMP_PHASE
        for m in ("16APSK", "32APSK", "64APSK", "128APSK", "16QAM", "32QAM", "64QAM", "128QAM", "256QAM")
    },
    **{m: FREQUENCY for m in ("FM", "GMSK")},
}

DEFAULT_SCHEMES = ("OOK", "4ASK", "BPSK", "QPSK", "8PSK", "OQPSK", "16QAM", "64QAM", "16APSK", "FM", "GMSK")
ANALOG = frozenset({"FM"})
SUPPORTED = frozenset(DEFAULT_SCHEMES)


@dataclass(frozen=True)
class ModScheme:
    name: str

    def __post_init__(self):
        if self.name not in SUPPORTED:
            raise ValueError(f"unsupported modulation {self.name!r}; choose from {sorted(SUPPORTED)}")

    @property
    def group(self) -> str:
        return GROUP_OF[self.name]

    @property
    def digital(self) -> bool:
        return self.name not in ANALOG


@dataclass
class Frame:
    iq: np.ndarray  # (T, 2) float32, I then Q
    label: int = -1
    snr_db: Optional[float] = None

    @property
    def length(self) -> int:
        return self.iq.shape[0]

    def complex(self) -> np.ndarray:
        return self.iq[:, 0].astype(np.float64) + 1j * self.iq[:, 1].astype(np.float64)


def _psk(m: int, offset: float = 0.0) -> np.ndarray:
    return np.exp(1j * (2 * np.pi * np.arange(m) / m + offset))


def _qam(m: int) -> np.ndarray:
    side = int(round(math.sqrt(m)))
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    return (levels[:, None] + 1j * levels[None, :]).ravel()


def _apsk16() -> np.ndarray:
    # 4+12 rings with the DVB-S2 radius ratio for rate 3/4
    inner = 1.0 * np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))
    outer = 2.85 * np.exp(1j * (np.pi / 12 + np.pi / 6 * np.arange(12)))
    return np.concatenate([inner, outer])


def constellation(name: str) -> np.ndarray:
    """Unit average-energy symbol alphabet of a linear scheme."""
    points = {
        "OOK": lambda: np.array([0.0, 1.0], dtype=complex),
        "4ASK": lambda: np.arange(4, dtype=float).astype(complex),
        "BPSK": lambda: np.array([1.0, -1.0], dtype=complex),
        "QPSK": lambda: _psk(4, np.pi / 4),
        "OQPSK": lambda: _psk(4, np.pi / 4),
        "8PSK": lambda: _psk(8),
        "16QAM": lambda: _qam(16),
        "64QAM": lambda: _qam(64),
        "16APSK": _apsk16,
    }
    try:
        pts = points[name]()
    except KeyError:
        raise ValueError(f"{name} has no symbol constellation") from None
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


def gen_symbols(scheme: ModScheme, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. symbols uniformly from the scheme's constellation."""
    if not scheme.digital:
        raise ValueError(f"{scheme.name} is analog and has no symbol alphabet")
    pts = constellation(scheme.name)
    return pts[rng.integers(0, len(pts), size=n)]


def rrc_taps(sps: int = SPS, rolloff: float = ROLLOFF, span: int = SPAN) -> np.ndarray:
    """Unit-energy root-raised-cosine impulse response, ``span * sps + 1`` taps."""
    t = (np.arange(span * sps + 1) - span * sps / 2) / sps
    b = rolloff
    h = np.empty_like(t)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            h[i] = 1.0 - b + 4 * b / np.pi
        elif b > 0 and abs(abs(4 * b * ti) - 1.0) < 1e-9:
            h[i] = (b / np.sqrt(2)) * (
                (1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
            )
        else:
            num = np.sin(np.pi * ti * (1 - b)) + 4 * b * ti * np.cos(np.pi * ti * (1 + b))
            h[i] = num / (np.pi * ti * (1 - (4 * b * ti) ** 2))
    return h / np.sqrt(np.sum(h**2))


def pulse_shape(symbols: np.ndarray, sps: int = SPS, rolloff: float = ROLLOFF, span: int = SPAN) -> np.ndarray:
    """Upsample by ``sps`` and filter with an RRC pulse.

    The filter delay is removed so symbol ``i`` peaks at sample ``i * sps``;
    output length is ``len(symbols) * sps``.
    """
    if sps < 2:
        raise ValueError("sps must be >= 2")
    symbols = np.asarray(symbols)
    up = np.zeros(len(symbols) * sps, dtype=np.result_type(symbols.dtype, np.float64))
    up[::sps] = symbols
    h = rrc_taps(sps, rolloff, span)
    delay = (len(h) - 1) // 2
    return np.convolve(up, h)[delay : delay + len(up)]


def gaussian_taps(bt: float = GMSK_BT, sps: int = SPS, span: int = 4) -> np.ndarray:
    t = (np.arange(span * sps + 1) - span * sps / 2) / sps
    sigma = np.sqrt(np.log(2)) / (2 * np.pi * bt)
    g = np.exp(-(t**2) / (2 * sigma**2))
    return g / g.sum()


def gmsk_baseband(bits: np.ndarray, sps: int = SPS, bt: float = GMSK_BT) -> np.ndarray:
    """Unit-envelope GMSK: Gaussian-smoothed NRZ drives a +/-pi/2 per-symbol phase ramp."""
    nrz = np.repeat(2.0 * np.asarray(bits, dtype=float) - 1.0, sps)
    freq = np.convolve(nrz, gaussian_taps(bt, sps), mode="same")
    phase = np.cumsum(freq) * (np.pi / 2) / sps
    return np.exp(1j * phase)


def fm_baseband(message: np.ndarray, deviation: float = 0.25) -> np.ndarray:
    """Frequency modulation of ``message`` (cycles/sample per unit amplitude)."""
    phase = 2 * np.pi * deviation * np.cumsum(message)
    return np.exp(1j * phase)


def _lowpass_message(n: int, rng: np.random.Generator, cutoff: float = 0.02) -> np.ndarray:
    width = max(int(round(1.0 / cutoff)), 2)
    raw = rng.standard_normal(n + 4 * width)
    kernel = np.hanning(4 * width)
    msg = np.convolve(raw, kernel / kernel.sum(), mode="valid")[:n]
    return msg / (np.max(np.abs(msg)) + 1e-12)


def _normalize(z: np.ndarray) -> np.ndarray:
    return z / np.sqrt(np.mean(np.abs(z) ** 2))


def _to_iq(z: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag], axis=-1).astype(np.float32)


def modulate_complex(scheme: ModScheme, length: int, rng: np.random.Generator) -> np.ndarray:
    """Noise-free unit-RMS complex baseband of ``length`` samples (float64)."""
    if length < 1:
        raise ValueError("length must be positive")
    n_sym = length // SPS + 2 * SPAN
    start = SPAN * SPS  # skip the filter start-up transient
    if scheme.name == "FM":
        z = fm_baseband(_lowpass_message(length, rng), deviation=rng.uniform(0.05, 0.15))
    elif scheme.name == "GMSK":
        z = gmsk_baseband(rng.integers(0, 2, n_sym), SPS)[start : start + length]
    elif scheme.name == "OQPSK":
        sym = gen_symbols(scheme, n_sym, rng)
        i = pulse_shape(sym.real)
        q = np.roll(pulse_shape(sym.imag), SPS // 2)
        z = (i + 1j * q)[start : start + length]
    else:
        z = pulse_shape(gen_symbols(scheme, n_sym, rng))[start : start + length]
    z = z * np.exp(1j * rng.uniform(0, 2 * np.pi))
    return _normalize(z)


def modulate(scheme: ModScheme, length: int, rng: np.random.Generator) -> Frame:
    if length < 64:
        raise ValueError(f"frame length must be >= 64, got {length}")
    return Frame(_to_iq(modulate_complex(scheme, length, rng)))


def add_awgn_complex(
    z: np.ndarray, snr_db: Optional[float], rng: np.random.Generator, normalize: bool = True
) -> np.ndarray:
    """Add complex white Gaussian noise at ``snr_db`` relative to the measured power of ``z``.

    Noise variance per complex sample is ``P_s * 10**(-snr_db/10)``, split
    equally between I and Q. ``snr_db=None`` or ``inf`` skips the noise.
    With ``normalize`` the result is rescaled to unit RMS.
    """
    if snr_db is None or math.isinf(snr_db):
        return _normalize(z) if normalize else z.copy()
    ps = np.mean(np.abs(z) ** 2)
    var = ps * 10.0 ** (-snr_db / 10.0)
    noise = rng.standard_normal(len(z)) + 1j * rng.standard_normal(len(z))
    out = z + noise * np.sqrt(var / 2.0)
    return _normalize(out) if normalize else out


def apply_awgn(frame: Frame, snr_db: Optional[float], rng: np.random.Generator) -> Frame:
    noisy = add_awgn_complex(frame.complex(), snr_db, rng)
    return Frame(_to_iq(noisy), frame.label, snr_db)


def estimate_snr_db(clean: np.ndarray, received: np.ndarray) -> float:
    """Signal-known SNR: power of ``clean`` over power of ``received - clean``.

    ``received`` must be on the same scale as ``clean`` (before the unit-RMS
    renormalisation).
    """
    noise = np.asarray(received) - np.asarray(clean)
    return float(10 * np.log10(np.mean(np.abs(clean) ** 2) / np.mean(np.abs(noise) ** 2)))


@dataclass
class ChannelConfig:
    snr_grid: Sequence[int] = tuple(range(-20, 31, 2))
    frames_per_class_per_snr: int = 10
    frame_len: int = 1024
    seed: int = 0

    def validate(self) -> None:
        if not len(self.snr_grid):
            raise ValueError("snr_grid must not be empty")
        if self.frame_len < 64:
            raise ValueError(f"frame_len must be >= 64, got {self.frame_len}")
        if self.frames_per_class_per_snr < 1:
            raise ValueError("frames_per_class_per_snr must be >= 1")


def frame_rng(seed: int, class_idx: int, snr_db: int, index: int) -> np.random.Generator:
    """Independent stream per frame so generation order never matters."""
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, class_idx, int(snr_db) + 1000, index])


def synth_frame(scheme: ModScheme, class_idx: int, snr_db: int, index: int, cfg: ChannelConfig) -> Frame:
    rng = frame_rng(cfg.seed, class_idx, snr_db, index)
    z = add_awgn_complex(modulate_complex(scheme, cfg.frame_len, rng), snr_db, rng)
    return Frame(_to_iq(z), class_idx, snr_db)


def synth_arrays(schemes: Sequence[str], cfg: ChannelConfig):
    """Generate every (scheme, snr, index) cell; returns ``(iq, labels, snrs)``."""
    cfg.validate()
    if len(schemes) < 2:
        raise ValueError("need at least two modulation schemes")
    mods = [ModScheme(s) for s in schemes]
    n = len(mods) * len(cfg.snr_grid) * cfg.frames_per_class_per_snr
    iq = np.empty((n, cfg.frame_len, 2), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    snrs = np.empty(n, dtype=np.int64)
    row = 0
    for c, mod in enumerate(mods):
        for snr in cfg.snr_grid:
            for i in range(cfg.frames_per_class_per_snr):
                iq[row] = synth_frame(mod, c, snr, i, cfg).iq
                labels[row] = c
                snrs[row] = snr
                row += 1
    return iq, labels, snrs


def groups_for(schemes: Sequence[str]) -> List[str]:
    return [GROUP_OF[s] for s in schemes]
