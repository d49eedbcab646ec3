"""
File I/O for audio and channel responses.

WAV files are mono, PCM 16-bit or 32-bit float, read and written with
soundfile. Channel-response files are a 32-byte little-endian header
(magic, K, T, sample rate) followed by K x T float32 values in row-major
order.
"""

from pathlib import Path
from typing import Union

import numpy as np
import soundfile as sf
from loguru import logger

from .errors import InputError
from .metrics import ChannelResponseSet, SignalBuffer

WAV_SUBTYPES = {"pcm16": "PCM_16", "float": "FLOAT"}
RESPONSE_MAGIC = b"HLCRESP1"
RESPONSE_HEADER = np.dtype(
    [("magic", "S8"), ("k", "<u8"), ("t", "<u8"), ("sample_rate", "<f8")]
)

PathLike = Union[str, Path]


def read_wav(path: PathLike) -> SignalBuffer:
    """
    Read a mono WAV file as float samples in [-1, 1].

    Raises:
        InputError: If the file cannot be read or has more than one channel.
    """
    try:
        samples, rate = sf.read(str(path), dtype="float64", always_2d=True)
    except (RuntimeError, OSError) as e:
        raise InputError(f"Cannot read audio file {path}: {e}")
    if samples.shape[1] != 1:
        raise InputError(f"{path} has {samples.shape[1]} channels; only mono is supported")
    logger.debug("Read {} samples at {} Hz from {}", samples.shape[0], rate, path)
    return SignalBuffer(samples[:, 0], float(rate))


def write_wav(signal: SignalBuffer, path: PathLike, subtype: str = "float") -> Path:
    """Write a mono WAV file; ``subtype`` is ``"pcm16"`` or ``"float"``."""
    if subtype not in WAV_SUBTYPES:
        raise InputError(f"Unknown WAV subtype {subtype!r}; choose from {', '.join(WAV_SUBTYPES)}")
    if int(signal.sample_rate) != signal.sample_rate:
        raise InputError("WAV files need an integer sample rate")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    peak = float(np.max(np.abs(signal.samples))) if len(signal) else 0.0
    if subtype == "pcm16" and peak > 1.0:
        logger.warning("Clipping {} (peak {:.3f}) to full scale for PCM16", path, peak)
    data = signal.samples.astype(np.float32) if subtype == "float" else np.clip(signal.samples, -1.0, 1.0)
    sf.write(str(path), data, int(signal.sample_rate), subtype=WAV_SUBTYPES[subtype])
    return path


def write_fir_wav(taps: np.ndarray, sample_rate: float, path: PathLike) -> Path:
    """FIR taps as a 32-bit float impulse-response WAV."""
    return write_wav(SignalBuffer(np.asarray(taps, dtype=float), sample_rate), path, "float")


def write_responses(responses: ChannelResponseSet, path: PathLike) -> Path:
    k, t = responses.shape
    header = np.zeros(1, dtype=RESPONSE_HEADER)
    header["magic"] = RESPONSE_MAGIC
    header["k"] = k
    header["t"] = t
    header["sample_rate"] = responses.sample_rate or 0.0
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(header.tobytes())
        fh.write(responses.data.astype("<f4").tobytes())
    return path


def read_responses(path: PathLike) -> ChannelResponseSet:
    """
    Read a channel-response file.

    Raises:
        InputError: On a bad magic value or a payload of the wrong size.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise InputError(f"Cannot read channel responses {path}: {e}")
    if len(raw) < RESPONSE_HEADER.itemsize:
        raise InputError(f"{path} is too short for a channel-response header")
    header = np.frombuffer(raw, dtype=RESPONSE_HEADER, count=1)[0]
    if bytes(header["magic"]) != RESPONSE_MAGIC:
        raise InputError(f"{path} is not a channel-response file")
    k, t = int(header["k"]), int(header["t"])
    payload = raw[RESPONSE_HEADER.itemsize :]
    if len(payload) != 4 * k * t:
        raise InputError(f"{path}: expected {k} x {t} float32 values, found {len(payload)} bytes")
    data = np.frombuffer(payload, dtype="<f4").reshape(k, t).astype(float)
    rate = float(header["sample_rate"])
    logger.debug("Read {} x {} channel responses from {}", k, t, path)
    return ChannelResponseSet(data, sample_rate=rate if rate > 0 else None)
