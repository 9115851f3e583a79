import struct
from pathlib import Path

import numpy as np
import pytest

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def wav_bytes(samples, sample_rate=16000, n_channels=1, audio_format=1, bits=16):
    """Hand-rolled WAV writer, independent of the decoder under test."""
    samples = np.asarray(samples)
    if samples.ndim == 1:
        samples = samples[:, None]
    assert samples.shape[1] == n_channels
    body = samples.astype("<i2").tobytes()
    block_align = n_channels * bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(body),
        b"WAVE",
        b"fmt ",
        16,
        audio_format,
        n_channels,
        sample_rate,
        sample_rate * block_align,
        block_align,
        bits,
        b"data",
        len(body),
    )
    return header + body


@pytest.fixture
def taxonomy_23_path():
    return DATA_DIR / "taxonomy_23_4_2.tsv"


@pytest.fixture
def taxonomy_voxforge_path():
    return DATA_DIR / "taxonomy_voxforge.tsv"
