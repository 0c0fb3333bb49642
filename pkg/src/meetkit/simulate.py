"""Far-field multi-speaker mixture simulation.

Rooms are shoebox-shaped with frequency-independent wall absorption derived
from the target reverberation time by Sabine's formula; impulse responses
come from the image-source method with nearest-sample tap placement and a
343 m/s speed of sound. Mixtures draw one utterance from each of 1-3
speakers; each utterance starts between 0.5 s and the previous utterance's
duration after the previous one, which keeps emission order equal to start
order (the first-in-first-out property the serialized transcripts rely on).

Mixture jobs are independent and internally single-threaded; deterministic
per-job seeds keep output independent of scheduling.
"""

from __future__ import annotations

import math
import wave as wave_module
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import fftconvolve

from .errors import DataError
from .ingest import SotSample
from .sot import SC_TOKEN
from .timeline import Segment

SPEED_OF_SOUND = 343.0
PEAK_TARGET = 10.0 ** (-1.0 / 20.0)  # -1 dBFS

Point = Tuple[float, float, float]


@dataclass(frozen=True)
class RoomSpec:
    """Sampled room geometry, reverberation target, and device positions."""

    length: float
    width: float
    height: float
    rt60: float
    mic: Point
    sources: Tuple[Point, ...]

    def __post_init__(self):
        if not (3.0 <= self.length <= 8.0 and 3.0 <= self.width <= 8.0):
            raise ValueError(f"floor dimensions must lie in [3, 8] m: {self.length} x {self.width}")
        if not 2.4 <= self.height <= 3.0:
            raise ValueError(f"height must lie in [2.4, 3] m: {self.height}")
        if not 0.4 <= self.rt60 <= 1.0:
            raise ValueError(f"rt60 must lie in [0.4, 1] s: {self.rt60}")
        for point in (self.mic, *self.sources):
            x, y, z = point
            if not (0 < x < self.length and 0 < y < self.width and 0 < z < self.height):
                raise ValueError(f"point {point} is outside the room")

    @property
    def dimensions(self) -> Point:
        return (self.length, self.width, self.height)


@dataclass(frozen=True)
class CatalogEntry:
    """One source utterance available to the mixture planner."""

    speaker_id: str
    audio_ref: str
    duration: float
    transcript: str

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError(f"duration must be positive: {self}")
        if not self.transcript.strip():
            raise ValueError(f"transcript must be non-empty: {self}")


@dataclass(frozen=True)
class PlannedUtterance:
    speaker_id: str
    source_index: int
    audio_ref: str
    duration: float
    start: float


@dataclass(frozen=True)
class MixturePlan:
    """A fully planned mixture: delayed utterances, transcript, templates."""

    mixture_id: str
    utterances: Tuple[PlannedUtterance, ...]
    transcript: SotSample
    templates: Tuple[str, ...]

    def __post_init__(self):
        speakers = [u.speaker_id for u in self.utterances]
        if not 1 <= len(set(speakers)) <= 3 or len(set(speakers)) != len(speakers):
            raise ValueError(f"{self.mixture_id}: need 1-3 distinct speakers, got {speakers}")
        for prev, cur in zip(self.utterances, self.utterances[1:]):
            delay = cur.start - prev.start
            if not 0.5 - 1e-9 <= delay <= prev.duration + 1e-9:
                raise ValueError(
                    f"{self.mixture_id}: delay {delay:.3f} outside [0.5, {prev.duration:.3f}]"
                )
        if len(self.templates) != 8 or len(set(self.templates)) != 8:
            raise ValueError(f"{self.mixture_id}: need 8 unique template ids")
        missing = set(speakers) - set(self.templates)
        if missing:
            raise ValueError(f"{self.mixture_id}: templates missing actual speakers {missing}")


def sample_room(rng_seed: int, n_sources: int = 3) -> RoomSpec:
    """Draw a room within the documented ranges, deterministically per seed.

    Floor 3-8 m per side, height 2.4-3 m, rt60 0.4-1 s; the microphone sits
    within 0.5 m of the room center, sources at least 0.5 m from the lateral
    walls with height mid-plane + 0.6-0.8 m (clamped 0.1 m below the
    ceiling).
    """
    rng = np.random.default_rng(rng_seed)
    length, width = rng.uniform(3.0, 8.0, size=2)
    height = rng.uniform(2.4, 3.0)
    rt60 = rng.uniform(0.4, 1.0)
    center = np.array([length / 2, width / 2, height / 2])
    for _ in range(1000):
        offset = rng.uniform(-0.5, 0.5, size=3)
        if np.linalg.norm(offset) <= 0.5:
            break
    else:
        raise DataError("could not place the microphone near the room center")
    mic = tuple(float(v) for v in center + offset)
    sources = []
    for _ in range(n_sources):
        x = rng.uniform(0.5, length - 0.5)
        y = rng.uniform(0.5, width - 0.5)
        z = min(height / 2 + rng.uniform(0.6, 0.8), height - 0.1)
        sources.append((float(x), float(y), float(z)))
    return RoomSpec(float(length), float(width), float(height), float(rt60), mic, tuple(sources))


def sabine_absorption(room: RoomSpec) -> float:
    """Uniform wall absorption coefficient from Sabine's formula."""
    volume = room.length * room.width * room.height
    surface = 2.0 * (
        room.length * room.width + room.length * room.height + room.width * room.height
    )
    return 0.161 * volume / (surface * room.rt60)


def _axis_images(
    source: float, mic: float, dim: float, n_max: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Squared mic offsets and reflection counts for one axis's image lattice.

    Images sit at 2*n*dim + (-1)**p * source with |n-p| + |n| reflections.
    """
    ns = np.arange(-n_max, n_max + 1)
    offsets, reflections = [], []
    for p in (0, 1):
        coords = 2.0 * ns * dim + (1 - 2 * p) * source
        offsets.append(coords - mic)
        reflections.append(np.abs(ns - p) + np.abs(ns))
    return (
        np.concatenate(offsets) ** 2,
        np.concatenate(reflections).astype(np.int32),
    )


def generate_rir(
    room: RoomSpec,
    source_index: int,
    sample_rate: float,
    max_order: Optional[int] = None,
) -> np.ndarray:
    """Image-source room impulse response for one source.

    Wall reflectivity is -sqrt(1 - alpha) with alpha from Sabine's formula
    (the sign flip per reflection keeps same-tap image collisions from
    summing coherently, which would inflate the late tail); taps are placed
    at the nearest sample with 1/(4 pi d) spreading. With ``max_order`` set,
    images with more total reflections are excluded (0 keeps only the direct
    path). By default the image lattice extends at least 343 * rt60 m along
    every axis and the response length covers the direct delay plus rt60.
    """
    alpha = sabine_absorption(room)
    if alpha >= 1.0:
        raise DataError(
            f"Sabine absorption {alpha:.2f} >= 1; increase the room size or rt60"
        )
    beta = math.sqrt(1.0 - alpha)
    source = np.array(room.sources[source_index])
    mic = np.array(room.mic)
    direct = float(np.linalg.norm(source - mic))
    npts = int(round((direct / SPEED_OF_SOUND + room.rt60) * sample_rate)) + 1
    dims = room.dimensions
    axes = []
    for axis in range(3):
        if max_order is None:
            n_max = math.ceil(SPEED_OF_SOUND * room.rt60 / (2.0 * dims[axis]))
        else:
            n_max = math.ceil((max_order + 1) / 2)
        axes.append(_axis_images(source[axis], mic[axis], dims[axis], n_max))
    (dx2, ex), (dy2, ey), (dz2, ez) = axes
    h = np.zeros(npts)
    # Combine axis lattices in chunks along x to bound peak memory.
    plane = dy2[:, None] + dz2[None, :]
    plane_refl = ey[:, None] + ez[None, :]
    chunk = max(1, int(4_000_000 // max(plane.size, 1)))
    for lo in range(0, len(dx2), chunk):
        hi = min(lo + chunk, len(dx2))
        d2 = dx2[lo:hi, None, None] + plane[None, :, :]
        refl = ex[lo:hi, None, None] + plane_refl[None, :, :]
        if max_order is not None:
            keep = refl <= max_order
            d2, refl = d2[keep], refl[keep]
        d = np.sqrt(d2).ravel()
        refl = refl.ravel()
        taps = np.rint(d / SPEED_OF_SOUND * sample_rate).astype(np.int64)
        inside = taps < npts
        if not np.any(inside):
            continue
        d, refl, taps = d[inside], refl[inside], taps[inside]
        signs = 1.0 - 2.0 * (refl % 2)
        amplitudes = signs * beta ** refl.astype(float) / (4.0 * math.pi * d)
        h += np.bincount(taps, weights=amplitudes, minlength=npts)
    return h


def assign_templates(
    actual_speakers: Sequence[str], speaker_pool: Sequence[str], rng_seed: int
) -> Tuple[str, ...]:
    """Eight unique template speaker ids covering the actual speakers,
    padded with randomly drawn fillers and deterministically shuffled."""
    return _assign_templates(list(actual_speakers), list(speaker_pool), np.random.default_rng(rng_seed))


def _assign_templates(
    actual_speakers: List[str], speaker_pool: List[str], rng: np.random.Generator
) -> Tuple[str, ...]:
    if len(set(actual_speakers)) != len(actual_speakers):
        raise DataError(f"actual speakers must be unique: {actual_speakers}")
    fillers = sorted(set(speaker_pool) - set(actual_speakers))
    needed = 8 - len(actual_speakers)
    if len(fillers) < needed:
        raise DataError(
            f"speaker pool too small: need {needed} fillers, have {len(fillers)}"
        )
    chosen = list(rng.choice(fillers, size=needed, replace=False))
    ids = list(actual_speakers) + [str(c) for c in chosen]
    rng.shuffle(ids)
    return tuple(ids)


def plan_mixture(
    catalog: Sequence[CatalogEntry],
    n_speakers: int,
    rng_seed: int,
    mixture_id: Optional[str] = None,
) -> MixturePlan:
    """Plan one mixture: pick speakers and utterances, stagger starts, build
    the serialized transcript, and attach 8 speaker templates.

    Each start is delayed 0.5 s to the previous utterance's duration after
    the previous start, so transcript emission order equals start order.
    """
    if not 1 <= n_speakers <= 3:
        raise ValueError(f"n_speakers must be 1..3, got {n_speakers}")
    rng = np.random.default_rng(rng_seed)
    by_speaker: Dict[str, List[CatalogEntry]] = {}
    for entry in catalog:
        # Entries shorter than the minimum delay cannot precede another
        # utterance without breaking the delay contract.
        if entry.duration >= 0.5:
            by_speaker.setdefault(entry.speaker_id, []).append(entry)
    if len(by_speaker) < n_speakers:
        raise DataError(
            f"catalog has {len(by_speaker)} usable speakers, need {n_speakers}"
        )
    speakers = [str(s) for s in rng.choice(sorted(by_speaker), size=n_speakers, replace=False)]
    chosen: List[CatalogEntry] = []
    for speaker in speakers:
        entries = sorted(by_speaker[speaker], key=lambda e: e.audio_ref)
        chosen.append(entries[int(rng.integers(len(entries)))])
    starts = [0.0]
    for prev in chosen[:-1]:
        starts.append(starts[-1] + float(rng.uniform(0.5, prev.duration)))
    utterances = tuple(
        PlannedUtterance(e.speaker_id, j, e.audio_ref, e.duration, starts[j])
        for j, e in enumerate(chosen)
    )
    tokens: List[str] = []
    labels: List[str] = []
    for j, utterance in enumerate(utterances):
        if j > 0 and utterance.speaker_id != utterances[j - 1].speaker_id:
            tokens.append(SC_TOKEN)
            labels.append(utterance.speaker_id)
        for word in chosen[j].transcript.split():
            tokens.append(word)
            labels.append(utterance.speaker_id)
    total = max(u.start + u.duration for u in utterances)
    name = mixture_id if mixture_id is not None else f"mix{rng_seed:06d}"
    transcript = SotSample(name, Segment(0.0, total), tuple(tokens), tuple(labels))
    templates = _assign_templates(speakers, sorted(by_speaker), rng)
    return MixturePlan(name, utterances, transcript, templates)


def render_mixture(
    plan: MixturePlan,
    rirs: Mapping[int, np.ndarray],
    waveforms: Mapping[str, Tuple[np.ndarray, int]],
    sample_rate: int,
) -> Tuple[np.ndarray, float]:
    """Convolve, shift, and sum the planned utterances.

    Returns the mixture and the scale factor applied to it (1.0 unless the
    raw sum would clip, in which case the peak is normalized to -1 dBFS).
    """
    pieces = []
    length = 0
    for utterance in plan.utterances:
        samples, rate = waveforms[utterance.audio_ref]
        if rate != sample_rate:
            raise DataError(
                f"{utterance.audio_ref}: sample rate {rate} != mixture rate {sample_rate}"
            )
        convolved = fftconvolve(np.asarray(samples, dtype=float), rirs[utterance.source_index])
        offset = int(round(utterance.start * sample_rate))
        pieces.append((offset, convolved))
        length = max(length, offset + len(convolved))
    out = np.zeros(length)
    for offset, convolved in pieces:
        out[offset : offset + len(convolved)] += convolved
    peak = float(np.max(np.abs(out))) if length else 0.0
    scale = 1.0
    if peak > 1.0:
        scale = PEAK_TARGET / peak
        out = out * scale
    return out, scale


def read_catalog(path: Union[str, Path]) -> List[CatalogEntry]:
    """Read the utterance catalog CSV:
    ``speaker_id,audio_ref,duration,transcript``."""
    import csv

    from .errors import FormatError

    entries: List[CatalogEntry] = []
    expected = ["speaker_id", "audio_ref", "duration", "transcript"]
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(path, 1, "missing header") from None
        if header != expected:
            raise FormatError(path, 1, f"expected header {','.join(expected)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise FormatError(path, lineno, "expected 4 columns")
            try:
                entries.append(CatalogEntry(row[0], row[1], float(row[2]), row[3]))
            except ValueError as exc:
                raise FormatError(path, lineno, str(exc)) from None
    return entries


def simulate_corpus(
    catalog_path: Union[str, Path],
    out_dir: Union[str, Path],
    count: int,
    seed: int,
    sample_rate: int = 16000,
    max_order: Optional[int] = None,
) -> List[str]:
    """Generate ``count`` mixtures: WAV files, a serialized reference file,
    a template-assignment file, and a JSON plan manifest.

    Audio references resolve relative to the catalog's directory. Per-job
    seeds derive deterministically from the base seed, so output is
    independent of scheduling or ordering.
    """
    import dataclasses
    import json

    catalog_path = Path(catalog_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    catalog = read_catalog(catalog_path)
    if not catalog:
        raise DataError(f"catalog {catalog_path} is empty")
    rng = np.random.default_rng(seed)
    job_seeds = rng.integers(0, 2**31 - 1, size=count)
    speaker_counts = rng.integers(1, 4, size=count)
    cache: Dict[str, Tuple[np.ndarray, int]] = {}

    def load(ref: str) -> Tuple[np.ndarray, int]:
        if ref not in cache:
            cache[ref] = read_wav(catalog_path.parent / ref)
        return cache[ref]

    transcripts = []
    template_rows = []
    plans = []
    written = []
    for i in range(count):
        job_seed = int(job_seeds[i])
        plan = plan_mixture(catalog, int(speaker_counts[i]), job_seed, f"mix{i:06d}")
        room = sample_room(job_seed, n_sources=len(plan.utterances))
        rirs = {
            j: generate_rir(room, j, sample_rate, max_order)
            for j in range(len(plan.utterances))
        }
        waveforms = {u.audio_ref: load(u.audio_ref) for u in plan.utterances}
        mixture, scale = render_mixture(plan, rirs, waveforms, sample_rate)
        wav_name = f"{plan.mixture_id}.wav"
        write_wav(out / wav_name, mixture, sample_rate)
        written.append(wav_name)
        transcripts.append(plan.transcript)
        template_rows.append((plan.mixture_id, plan.templates))
        plans.append(
            {
                "mixture_id": plan.mixture_id,
                "seed": job_seed,
                "room": dataclasses.asdict(room),
                "utterances": [dataclasses.asdict(u) for u in plan.utterances],
                "templates": list(plan.templates),
                "scale": scale,
            }
        )
    from .ingest import write_sot

    write_sot(transcripts, out / "reference.sot")
    with open(out / "templates.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for mixture_id, ids in template_rows:
            fh.write("\t".join([mixture_id, *ids]) + "\n")
    with open(out / "plans.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(plans, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.extend(["reference.sot", "templates.tsv", "plans.json"])
    return written


def read_wav(path: Union[str, Path]) -> Tuple[np.ndarray, int]:
    """Read 16-bit PCM audio as floats in [-1, 1]; (n,) mono or (n, ch)."""
    with wave_module.open(str(path), "rb") as fh:
        if fh.getsampwidth() != 2:
            raise DataError(f"{path}: only 16-bit PCM is supported, got {8 * fh.getsampwidth()}-bit")
        channels = fh.getnchannels()
        frames = fh.readframes(fh.getnframes())
        rate = fh.getframerate()
    data = np.frombuffer(frames, dtype="<i2").astype(float) / 32767.0
    if channels > 1:
        data = data.reshape(-1, channels)
    return data, rate


def write_wav(path: Union[str, Path], samples: np.ndarray, sample_rate: int) -> None:
    """Write floats in [-1, 1] as 16-bit PCM; values outside are clipped."""
    data = np.asarray(samples, dtype=float)
    channels = 1 if data.ndim == 1 else data.shape[1]
    clipped = np.clip(data, -1.0, 1.0)
    ints = np.rint(clipped * 32767.0).astype("<i2")
    with wave_module.open(str(path), "wb") as fh:
        fh.setnchannels(channels)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(ints.tobytes())
