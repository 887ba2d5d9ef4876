"""Audio decoding, corpus layout, and fixed-grid segmentation.

Tracks are decoded to float samples in [-1, 1] at 22050 Hz and cut into 15
overlapping 5-second segments with hop L/3, so adjacent segments share about
3.33 s.  WAV (PCM) and Sun/NeXT AU files are supported; AU decoding covers
the linear PCM and mu-law encodings found in the GTZAN corpus.
"""
from __future__ import annotations

import logging
import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

EXPECTED_RATE = 22050
SEGMENT_LEN = EXPECTED_RATE * 5        # 110250 samples, 5 s
SEGMENT_HOP = SEGMENT_LEN // 3         # 36750 samples
NUM_SEGMENTS = 15
MIN_TRACK_LEN = (NUM_SEGMENTS - 1) * SEGMENT_HOP + SEGMENT_LEN  # 624750

AUDIO_SUFFIXES = (".wav", ".au")

_AU_MAGIC = b".snd"
# AU encoding ids: 1 = 8-bit mu-law, 2 = 8-bit linear PCM, 3 = 16-bit linear PCM
_AU_SUPPORTED = {1, 2, 3}


@dataclass
class Track:
    """Decoded audio with its genre label and a stable corpus id."""

    samples: np.ndarray
    rate: int
    label: str = ""
    id: str = ""

    def __len__(self) -> int:
        return self.samples.size


@dataclass
class Segment:
    track_id: str
    index: int
    samples: np.ndarray


def _mulaw_decode_table() -> np.ndarray:
    """256-entry u8 -> float lookup for G.711 mu-law (14-bit magnitude)."""
    u = np.arange(256, dtype=np.int64) ^ 0xFF
    sign = np.where(u & 0x80, -1.0, 1.0)
    exponent = (u >> 4) & 0x07
    mantissa = u & 0x0F
    magnitude = ((2 * mantissa + 33) << exponent) - 33
    return sign * magnitude / 8031.0


_MULAW_TABLE = _mulaw_decode_table()


def _to_float(raw: np.ndarray, channels: int, downmix: bool, path) -> np.ndarray:
    if channels > 1:
        if not downmix:
            raise DataError(f"{path}: {channels}-channel audio (pass downmix to average)")
        raw = raw.reshape(-1, channels).mean(axis=1)
    return np.asarray(raw, dtype=np.float64)


def _decode_wav(path: Path, downmix: bool) -> tuple:
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            frames = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError, OSError) as exc:
        raise DataError(f"{path}: cannot decode WAV ({exc})") from exc
    if width == 2:
        samples = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0
    elif width == 1:
        samples = (np.frombuffer(frames, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    else:
        raise DataError(f"{path}: unsupported WAV sample width {width * 8} bits")
    return _to_float(samples, channels, downmix, path), rate


def _decode_au(path: Path, downmix: bool) -> tuple:
    data = path.read_bytes()
    if len(data) < 24 or data[:4] != _AU_MAGIC:
        raise DataError(f"{path}: not a Sun/NeXT AU file")
    offset, size, encoding, rate, channels = struct.unpack(">5I", data[4:24])
    if encoding not in _AU_SUPPORTED:
        raise DataError(f"{path}: unsupported AU encoding {encoding}")
    if offset < 24 or offset > len(data):
        raise DataError(f"{path}: corrupt AU header (data offset {offset})")
    payload = data[offset:offset + size] if size != 0xFFFFFFFF else data[offset:]
    if encoding == 3:
        if len(payload) % 2:
            payload = payload[:-1]
        samples = np.frombuffer(payload, dtype=">i2").astype(np.float64) / 32768.0
    elif encoding == 2:
        samples = np.frombuffer(payload, dtype=np.int8).astype(np.float64) / 128.0
    else:
        samples = _MULAW_TABLE[np.frombuffer(payload, dtype=np.uint8)]
    return _to_float(samples, channels, downmix, path), rate


def probe_audio(path) -> tuple:
    """Header-only inspection: returns (rate, num_frames, channels)."""
    path = Path(path)
    if path.suffix.lower() == ".wav":
        try:
            with wave.open(str(path), "rb") as wf:
                return wf.getframerate(), wf.getnframes(), wf.getnchannels()
        except (wave.Error, EOFError, OSError) as exc:
            raise DataError(f"{path}: cannot read WAV header ({exc})") from exc
    if path.suffix.lower() == ".au":
        with path.open("rb") as fh:
            head = fh.read(24)
        if len(head) < 24 or head[:4] != _AU_MAGIC:
            raise DataError(f"{path}: not a Sun/NeXT AU file")
        offset, size, encoding, rate, channels = struct.unpack(">5I", head[4:24])
        if encoding not in _AU_SUPPORTED:
            raise DataError(f"{path}: unsupported AU encoding {encoding}")
        if size == 0xFFFFFFFF:
            size = max(path.stat().st_size - offset, 0)
        bytes_per = 2 if encoding == 3 else 1
        return rate, size // (bytes_per * max(channels, 1)), channels
    raise DataError(f"{path}: unsupported audio format")


def decode_audio(path, *, resample: bool = False, downmix: bool = False,
                 expected_rate: int = EXPECTED_RATE) -> Track:
    """Decode a WAV or AU file to a mono track scaled to [-1, 1].

    A file at the wrong sample rate is rejected unless `resample` is set and
    the ratio to `expected_rate` is an integer, in which case a polyphase
    resampler brings it onto the expected grid.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    suffix = path.suffix.lower()
    if suffix == ".wav":
        samples, rate = _decode_wav(path, downmix)
    elif suffix == ".au":
        samples, rate = _decode_au(path, downmix)
    else:
        raise DataError(f"{path}: unsupported audio format {suffix!r}")

    if rate != expected_rate:
        if not resample:
            raise DataError(
                f"{path}: sample rate {rate} != {expected_rate} (pass resample to convert)")
        samples = _integer_resample(samples, rate, expected_rate, path)
        rate = expected_rate
    return Track(samples=samples, rate=rate, id=path.name)


def _integer_resample(samples, rate, target, path):
    from scipy.signal import resample_poly

    if rate % target == 0:
        return resample_poly(samples, 1, rate // target)
    if target % rate == 0:
        return resample_poly(samples, target // rate, 1)
    raise DataError(f"{path}: cannot resample {rate} -> {target} (non-integer factor)")


def segment_track(track: Track) -> list:
    """Cut a track into 15 overlapping segments of SEGMENT_LEN samples.

    Segment k covers samples [k*HOP, k*HOP + LEN); tracks shorter than the
    last window are rejected.  Any samples past the final window are unused.
    """
    n = len(track)
    if n < MIN_TRACK_LEN:
        raise DataError(
            f"{track.id or 'track'}: {n} samples, need at least {MIN_TRACK_LEN} "
            f"for {NUM_SEGMENTS} segments")
    segments = []
    for k in range(NUM_SEGMENTS):
        start = k * SEGMENT_HOP
        segments.append(Segment(track_id=track.id, index=k,
                                samples=track.samples[start:start + SEGMENT_LEN]))
    return segments


@dataclass(frozen=True)
class TrackRef:
    """Lazy handle to one corpus file; decoding happens on demand."""

    id: str
    label: str
    path: Path


@dataclass
class Dataset:
    """Immutable labeled corpus: one subdirectory per genre, files inside."""

    root: Path
    tracks: list

    def __len__(self) -> int:
        return len(self.tracks)

    @property
    def genres(self) -> list:
        return sorted({t.label for t in self.tracks})

    def labels(self) -> list:
        return [t.label for t in self.tracks]

    def decode(self, ref: TrackRef, *, resample: bool = False,
               downmix: bool = False) -> Track:
        track = decode_audio(ref.path, resample=resample, downmix=downmix)
        track.label = ref.label
        track.id = ref.id
        return track

    def manifest_rows(self):
        """Yields (id, genre, samples, rate) with header-only probing."""
        for ref in self.tracks:
            rate, frames, _ = probe_audio(ref.path)
            yield ref.id, ref.label, frames, rate


def load_corpus(root) -> Dataset:
    """Scan a genre-per-directory corpus into a lazily decoded Dataset.

    Ordering is deterministic (lexicographic by relative path); non-audio
    files are skipped with a log entry and empty genre directories produce
    a warning.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: corpus root is not a directory")
    genre_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    refs = []
    for gdir in genre_dirs:
        found = 0
        for f in sorted(gdir.iterdir()):
            if not f.is_file():
                continue
            if f.suffix.lower() not in AUDIO_SUFFIXES:
                log.info("skipping non-audio file %s", f)
                continue
            refs.append(TrackRef(id=str(f.relative_to(root)), label=gdir.name, path=f))
            found += 1
        if found == 0:
            log.warning("genre directory %s contains no audio files", gdir)
    return Dataset(root=root, tracks=refs)


def write_manifest(dataset: Dataset, path) -> None:
    """Corpus manifest CSV: id, genre, samples, rate."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id,genre,samples,rate\n")
        for tid, genre, frames, rate in dataset.manifest_rows():
            fh.write(f"{tid},{genre},{frames},{rate}\n")
