"""Complex-baseband signal synthesis for the ten supported modulation classes.

Digital linear classes (PSK/QAM/PAM) are RRC pulse-shaped random symbol
streams; GFSK/CPFSK are continuous-phase frequency modulations of random
bits; AM-DSB/WBFM modulate a band-limited multitone message. All outputs
are calibrated to unit average power, AWGN is added at a target SNR, and
frames are emitted as 2xL real I/Q matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import UndefinedSnrError, UnsupportedConstellationError

# i16 sentinel used by the dataset container for "no noise added"
NOISELESS_SNR = 32767

SNR_MIN_DB = -20
SNR_MAX_DB = 18


class ModulationClass(Enum):
    BPSK = "BPSK"
    QPSK = "QPSK"
    PSK8 = "PSK8"
    QAM16 = "QAM16"
    QAM64 = "QAM64"
    PAM4 = "PAM4"
    GFSK = "GFSK"
    CPFSK = "CPFSK"
    AM_DSB = "AM_DSB"
    WBFM = "WBFM"

    @property
    def is_digital(self) -> bool:
        return self not in (ModulationClass.AM_DSB, ModulationClass.WBFM)

    @property
    def is_linear(self) -> bool:
        """True for classes with a fixed symbol constellation (PSK/QAM/PAM)."""
        return self in (
            ModulationClass.BPSK,
            ModulationClass.QPSK,
            ModulationClass.PSK8,
            ModulationClass.QAM16,
            ModulationClass.QAM64,
            ModulationClass.PAM4,
        )


#: Canonical class order; fixes label indices, anchor rows and report columns.
CLASSES: tuple[ModulationClass, ...] = tuple(ModulationClass)
CLASS_NAMES: tuple[str, ...] = tuple(c.name for c in CLASSES)


@dataclass
class SynthConfig:
    frame_len: int = 128
    samples_per_symbol: int = 8
    rrc_rolloff: float = 0.35
    rrc_span: int = 8
    seed: int = 0
    snr_grid: list[int] = field(default_factory=lambda: [0])

    # GFSK / CPFSK / analog source parameters (not exposed via CLI)
    gfsk_bt: float = 0.35
    fsk_mod_index: float = 0.5
    wbfm_mod_index: float = 0.8
    msg_tones: int = 8
    msg_freq_lo: float = 0.002
    msg_freq_hi: float = 0.04

    def __post_init__(self):
        if self.frame_len < 2 * self.samples_per_symbol:
            raise ValueError(
                f"frame_len {self.frame_len} must be >= 2*samples_per_symbol "
                f"({2 * self.samples_per_symbol})"
            )
        if not 0.0 < self.rrc_rolloff <= 1.0:
            raise ValueError(f"rrc_rolloff must be in (0, 1], got {self.rrc_rolloff}")
        for snr in self.snr_grid:
            if not SNR_MIN_DB <= snr <= SNR_MAX_DB:
                raise ValueError(
                    f"snr_grid value {snr} outside [{SNR_MIN_DB}, {SNR_MAX_DB}] dB"
                )


@dataclass
class SignalFrame:
    """One 2xL real I/Q frame: row 0 in-phase, row 1 quadrature."""

    iq: np.ndarray
    label: ModulationClass
    snr_db: int

    def __post_init__(self):
        self.iq = np.asarray(self.iq, dtype=np.float32)
        if self.iq.ndim != 2 or self.iq.shape[0] != 2:
            raise ValueError(f"iq must be 2xL, got shape {self.iq.shape}")
        if not np.all(np.isfinite(self.iq)):
            raise ValueError("iq contains NaN/Inf")


def _gray_code(n_bits: int) -> np.ndarray:
    codes = np.arange(1 << n_bits)
    return codes ^ (codes >> 1)


def _gray_pam_levels(n_levels: int) -> np.ndarray:
    """Amplitude levels ordered so adjacent Gray codes sit on adjacent levels."""
    n_bits = int(math.log2(n_levels))
    levels = np.arange(n_levels) * 2.0 - (n_levels - 1)
    out = np.empty(n_levels)
    out[_gray_code(n_bits)] = levels
    return out


def constellation(cls: ModulationClass) -> np.ndarray:
    """Gray-coded symbol set of ``cls``, normalized to unit average power.

    Index order is the Gray bit pattern; adjacent constellation points
    differ in one bit. Raises for classes without a fixed constellation.
    """
    if not cls.is_linear:
        raise UnsupportedConstellationError(
            f"{cls.name} has no linear symbol constellation"
        )
    if cls is ModulationClass.BPSK:
        pts = np.array([1.0, -1.0], dtype=complex)
    elif cls is ModulationClass.QPSK:
        i = _gray_pam_levels(2)
        pts = np.array([i[k & 1] + 1j * i[(k >> 1) & 1] for k in range(4)])
    elif cls is ModulationClass.PSK8:
        order = _gray_code(3)
        phase = np.empty(8)
        phase[order] = 2 * np.pi * np.arange(8) / 8
        pts = np.exp(1j * phase)
    elif cls is ModulationClass.QAM16:
        i = _gray_pam_levels(4)
        pts = np.array([i[k & 3] + 1j * i[(k >> 2) & 3] for k in range(16)])
    elif cls is ModulationClass.QAM64:
        i = _gray_pam_levels(8)
        pts = np.array([i[k & 7] + 1j * i[(k >> 3) & 7] for k in range(64)])
    elif cls is ModulationClass.PAM4:
        pts = _gray_pam_levels(4).astype(complex)
    else:  # pragma: no cover
        raise UnsupportedConstellationError(cls.name)
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


def rrc_taps(rolloff: float, sps: int, span: int) -> np.ndarray:
    """Root-raised-cosine taps, odd length ``span*sps + 1``, unit energy.

    The removable singularities at t=0 and |t|=1/(4*rolloff) symbols use
    their analytic limits.
    """
    if not 0.0 < rolloff <= 1.0:
        raise ValueError(f"rolloff must be in (0, 1], got {rolloff}")
    if sps < 2 or span < 2:
        raise ValueError(f"need sps >= 2 and span >= 2, got sps={sps}, span={span}")
    t = np.arange(-span * sps // 2, span * sps // 2 + 1) / sps
    taps = np.empty_like(t)
    b = rolloff

    at_zero = t == 0.0
    at_brk = np.isclose(np.abs(t), 1.0 / (4 * b), rtol=0, atol=1e-12)
    rest = ~(at_zero | at_brk)

    taps[at_zero] = 1.0 - b + 4 * b / np.pi
    taps[at_brk] = (b / np.sqrt(2)) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * b))
        + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
    )
    tr = t[rest]
    taps[rest] = (
        np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))
    ) / (np.pi * tr * (1 - (4 * b * tr) ** 2))

    return taps / np.sqrt(np.sum(taps**2))


def _multitone_message(n: int, cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Band-limited analog test message: random multitone, unit RMS."""
    freqs = rng.uniform(cfg.msg_freq_lo, cfg.msg_freq_hi, size=cfg.msg_tones)
    phases = rng.uniform(0.0, 2 * np.pi, size=cfg.msg_tones)
    t = np.arange(n)
    msg = np.sum(np.sin(2 * np.pi * freqs[:, None] * t + phases[:, None]), axis=0)
    return msg / np.sqrt(np.mean(msg**2))


def _shape_linear(symbols: np.ndarray, cfg: SynthConfig) -> np.ndarray:
    """Upsample, RRC-filter and trim to the steady-state region.

    Returns ``(len(symbols) - span) * sps`` samples scaled so the average
    power equals the symbol power.
    """
    sps = cfg.samples_per_symbol
    taps = rrc_taps(cfg.rrc_rolloff, sps, cfg.rrc_span)
    if len(symbols) <= cfg.rrc_span:
        raise ValueError(
            f"need more than rrc_span={cfg.rrc_span} symbols, got {len(symbols)}"
        )
    up = np.zeros(len(symbols) * sps, dtype=complex)
    up[::sps] = symbols
    full = np.convolve(up, taps)
    # indices [len(taps)-1, len(up)) see the full filter support: steady state
    steady = full[len(taps) - 1 : len(up)]
    return steady * np.sqrt(sps)


def modulate(
    cls: ModulationClass,
    cfg: SynthConfig,
    rng: np.random.Generator,
    symbols: np.ndarray | None = None,
    return_symbols: bool = False,
):
    """Synthesize a unit-power complex baseband sequence of length >= frame_len.

    For linear classes a random symbol stream is drawn (or taken from
    ``symbols``) and RRC-shaped; the filter transient is trimmed so the
    output is steady-state. GFSK/CPFSK produce constant-envelope CPM with
    random start phase; analog classes modulate a random multitone message.

    With ``return_symbols`` the transmitted symbol indices are returned
    alongside (linear classes only), enabling loopback checks.
    """
    L = cfg.frame_len
    sps = cfg.samples_per_symbol

    if cls.is_linear:
        pts = constellation(cls)
        if symbols is None:
            idx = rng.integers(0, len(pts), size=-(-L // sps) + cfg.rrc_span)
            symbols = pts[idx]
        else:
            symbols = np.asarray(symbols, dtype=complex)
            idx = None
        s = _shape_linear(symbols, cfg)
        if return_symbols:
            return s, (idx if idx is not None else symbols)
        return s

    if cls in (ModulationClass.GFSK, ModulationClass.CPFSK):
        n_sym = -(-L // sps) + (6 if cls is ModulationClass.GFSK else 0)
        bits = rng.integers(0, 2, size=n_sym) * 2.0 - 1.0
        phase0 = rng.uniform(0.0, 2 * np.pi)
        if cls is ModulationClass.CPFSK:
            # rectangular phase pulse: +-pi*h per symbol interval
            dphi = np.repeat(bits, sps) * (np.pi * cfg.fsk_mod_index / sps)
            s = np.exp(1j * (phase0 + np.cumsum(dphi)))[:L]
        else:
            # Gaussian-smoothed frequency pulse (rect * gaussian), DC gain 1
            sigma = sps * np.sqrt(np.log(2)) / (2 * np.pi * cfg.gfsk_bt)
            tt = np.arange(-2 * sps, 2 * sps + 1)
            gauss = np.exp(-0.5 * (tt / sigma) ** 2)
            gauss /= gauss.sum()
            pulse = np.convolve(np.full(sps, 1.0 / sps), gauss)
            impulses = np.zeros(n_sym * sps)
            impulses[::sps] = bits * sps
            freq = np.convolve(impulses, pulse) * (np.pi * cfg.fsk_mod_index / sps)
            phi = np.cumsum(freq)
            s = np.exp(1j * (phase0 + phi))[3 * sps : 3 * sps + L]
        return (s, None) if return_symbols else s

    # analog classes
    msg = _multitone_message(L, cfg, rng)
    phase0 = rng.uniform(0.0, 2 * np.pi)
    if cls is ModulationClass.AM_DSB:
        s = msg * np.exp(1j * phase0)  # suppressed carrier, random phase
    else:  # WBFM: peak deviation = index * highest message frequency
        fdev = cfg.wbfm_mod_index * cfg.msg_freq_hi
        s = np.exp(1j * (phase0 + np.cumsum(2 * np.pi * fdev * msg)))
    return (s, None) if return_symbols else s


def add_awgn(s: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Return ``s`` plus complex AWGN at the requested SNR.

    Noise variance is P_s * 10^(-snr_db/10), split equally between I and Q.
    ``snr_db`` of +inf or the NOISELESS_SNR sentinel passes the signal
    through unchanged.
    """
    s = np.asarray(s, dtype=complex)
    if snr_db == math.inf or snr_db >= NOISELESS_SNR:
        return s.copy()
    p_sig = float(np.mean(np.abs(s) ** 2))
    if p_sig <= 0.0:
        raise UndefinedSnrError("zero-power input: SNR is undefined")
    var = p_sig * 10.0 ** (-snr_db / 10.0)
    w = rng.normal(scale=np.sqrt(var / 2), size=(2, len(s)))
    return s + w[0] + 1j * w[1]


def to_iq_frame(
    s: np.ndarray,
    label: ModulationClass,
    snr_db: int,
    frame_len: int | None = None,
) -> SignalFrame:
    """Frame the first ``frame_len`` samples of ``s`` as a 2xL real matrix."""
    s = np.asarray(s)
    L = len(s) if frame_len is None else frame_len
    if len(s) < L:
        raise ValueError(f"sequence length {len(s)} < frame_len {L}")
    win = s[:L]
    iq = np.stack([win.real.astype(np.float32), win.imag.astype(np.float32)])
    return SignalFrame(iq=iq, label=label, snr_db=int(snr_db))


def frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    """Independent per-frame RNG; synthesis order never affects results."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(frame_index,)))


def synth_frame(
    cls: ModulationClass, snr_db: int, cfg: SynthConfig, rng: np.random.Generator
) -> SignalFrame:
    s = modulate(cls, cfg, rng)
    r = add_awgn(s, snr_db, rng)
    return to_iq_frame(r, cls, snr_db, cfg.frame_len)


def synth_dataset(
    cfg: SynthConfig,
    frames_per_class_per_snr: int,
    classes: tuple[ModulationClass, ...] = CLASSES,
):
    """Synthesize a balanced dataset over classes x cfg.snr_grid.

    Every (class, snr) cell holds exactly ``frames_per_class_per_snr``
    frames; the whole dataset is a pure function of cfg (incl. seed).
    """
    from .dataio import Dataset  # deferred: dataio depends on SignalFrame

    if frames_per_class_per_snr <= 0:
        raise ValueError("frames_per_class_per_snr must be positive")
    frames = []
    index = 0
    for cls in classes:
        for snr in cfg.snr_grid:
            for _ in range(frames_per_class_per_snr):
                frames.append(synth_frame(cls, snr, cfg, frame_rng(cfg.seed, index)))
                index += 1
    meta = {
        "seed": cfg.seed,
        "snr_grid": list(cfg.snr_grid),
        "frames_per_class_per_snr": frames_per_class_per_snr,
    }
    return Dataset(
        frames=frames,
        class_names=[c.name for c in classes],
        frame_len=cfg.frame_len,
        meta=meta,
    )
