"""Run configuration: one key=value section file plus flag overrides.

The file uses INI sections ([paths], [segmentation], [diarization],
[templates], [remap], [run]); command-line overrides are given as
``section.key=value`` and win over the file. The configuration canonicalizes
to sorted ``section.key=value`` lines, whose SHA-256 is the run's config
hash recorded in the pipeline manifest.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path
from typing import List, Optional

from .diarizer import DiarizationConfig
from .errors import ConfigError
from .segmenter import SegmentationConfig
from .templates import CandidateFilter

_SECTIONS = {
    "paths": (
        "vad",
        "segments",
        "words",
        "utterances",
        "embeddings",
        "ref_rttm",
        "ref_sot",
        "hyp_sot",
        "baseline_sot",
        "out_dir",
    ),
    "segmentation": (
        "method",
        "silence_threshold",
        "onset",
        "offset",
        "min_speech",
        "min_silence",
        "chunk",
        "hop",
        "max_group",
        "overlap_margin",
    ),
    "diarization": ("max_speakers", "fixed_k", "affinity_percentile", "kmeans_restarts"),
    "templates": ("min_len", "max_len", "selection", "allow_overlap"),
    "remap": ("mode",),
    "run": ("seed", "workers"),
}

_FIELD_BY_KEY = {
    ("remap", "mode"): "remap_mode",
}


@dataclass
class RunConfig:
    # paths (inputs may be None when a stage is not run)
    vad: Optional[str] = None
    segments: Optional[str] = None
    words: Optional[str] = None
    utterances: Optional[str] = None
    embeddings: Optional[str] = None
    ref_rttm: Optional[str] = None
    ref_sot: Optional[str] = None
    hyp_sot: Optional[str] = None
    baseline_sot: Optional[str] = None
    out_dir: str = "out"
    # segmentation + VAD binarization
    method: str = "vad_merge"
    silence_threshold: float = 0.5
    onset: float = 0.5
    offset: float = 0.35
    min_speech: float = 0.0
    min_silence: float = 0.0
    chunk: float = 5.0
    hop: float = 2.0
    max_group: float = 100.0
    overlap_margin: float = 2.0
    # diarization
    max_speakers: int = 8
    fixed_k: Optional[int] = None
    affinity_percentile: float = 40.0
    kmeans_restarts: int = 10
    # templates
    min_len: float = 2.0
    max_len: float = 5.0
    selection: str = "all"
    allow_overlap: bool = False
    # remap
    remap_mode: str = "literal"
    # run
    seed: Optional[int] = None
    workers: int = 1

    def segmentation_config(self) -> SegmentationConfig:
        return SegmentationConfig(
            method=self.method,
            chunk=self.chunk,
            hop=self.hop,
            silence_threshold=self.silence_threshold,
            max_group=self.max_group,
            overlap_margin=self.overlap_margin,
        )

    def diarization_config(self) -> DiarizationConfig:
        return DiarizationConfig(
            max_speakers=self.max_speakers,
            fixed_k=self.fixed_k,
            affinity_percentile=self.affinity_percentile,
            kmeans_restarts=self.kmeans_restarts,
            seed=0 if self.seed is None else self.seed,
        )

    def candidate_filter(self) -> CandidateFilter:
        n_longest = None
        if self.selection != "all":
            n_longest = int(self.selection)
        return CandidateFilter(
            allow_overlap=self.allow_overlap,
            min_len=self.min_len,
            max_len=self.max_len,
            n_longest=n_longest,
        )

    def canonical_lines(self) -> List[str]:
        # out_dir is excluded: it does not affect the content of any output,
        # so identical inputs and parameters hash identically wherever the
        # artifacts land.
        lines = []
        for section, keys in sorted(_SECTIONS.items()):
            for key in sorted(keys):
                if (section, key) == ("paths", "out_dir"):
                    continue
                value = getattr(self, _FIELD_BY_KEY.get((section, key), key))
                lines.append(f"{section}.{key}={'' if value is None else value}")
        return lines

    def config_hash(self) -> str:
        digest = hashlib.sha256("\n".join(self.canonical_lines()).encode("utf-8"))
        return digest.hexdigest()


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}

_INT_KEYS = {"max_speakers", "fixed_k", "kmeans_restarts", "seed", "workers"}
_FLOAT_KEYS = {
    "silence_threshold",
    "onset",
    "offset",
    "min_speech",
    "min_silence",
    "chunk",
    "hop",
    "max_group",
    "overlap_margin",
    "affinity_percentile",
    "min_len",
    "max_len",
}
_BOOL_KEYS = {"allow_overlap"}


def _coerce(field_name: str, raw: str):
    raw = raw.strip()
    if raw == "":
        return None
    if field_name in _INT_KEYS:
        return int(raw)
    if field_name in _FLOAT_KEYS:
        return float(raw)
    if field_name in _BOOL_KEYS:
        if raw.lower() in ("true", "yes", "1", "on"):
            return True
        if raw.lower() in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    return raw


def _set_key(config: RunConfig, section: str, key: str, raw: str) -> None:
    if section not in _SECTIONS or key not in _SECTIONS[section]:
        raise ConfigError(f"unknown configuration key {section}.{key}")
    field_name = _FIELD_BY_KEY.get((section, key), key)
    try:
        setattr(config, field_name, _coerce(field_name, raw))
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from None


def load_config(path) -> RunConfig:
    """Parse a run-configuration file."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read configuration file {path}")
    config = RunConfig()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown configuration section [{section}]")
        for key, raw in parser.items(section):
            _set_key(config, section, key, raw)
    return config


def apply_overrides(config: RunConfig, overrides) -> RunConfig:
    """Apply ``section.key=value`` strings on top of the file; flags win."""
    for item in overrides:
        head, sep, raw = item.partition("=")
        if not sep or "." not in head:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        section, key = head.split(".", 1)
        _set_key(config, section.strip(), key.strip(), raw)
    return config


def validate_config(config: RunConfig) -> List[str]:
    """Collect configuration findings; an empty list means the config is valid."""
    findings: List[str] = []
    for build in (
        config.segmentation_config,
        config.diarization_config,
        config.candidate_filter,
    ):
        try:
            build()
        except (ValueError, TypeError) as exc:
            findings.append(str(exc))
    if not 0.0 <= config.offset <= config.onset <= 1.0:
        findings.append(
            f"need 0 <= offset <= onset <= 1, got onset={config.onset}, offset={config.offset}"
        )
    if config.min_speech < 0 or config.min_silence < 0:
        findings.append("min_speech and min_silence must be non-negative")
    if config.remap_mode not in ("literal", "one_to_one"):
        findings.append(f"remap.mode must be literal or one_to_one, got {config.remap_mode!r}")
    if config.workers < 1:
        findings.append(f"run.workers must be >= 1, got {config.workers}")
    if config.seed is None:
        findings.append("run.seed is required (stochastic stages must be reproducible)")
    for name in ("vad", "segments", "words", "utterances", "embeddings",
                 "ref_rttm", "ref_sot", "hyp_sot", "baseline_sot"):
        value = getattr(config, name)
        if value is not None and not Path(value).exists():
            findings.append(f"paths.{name}: {value} does not exist")
    if config.vad is None and config.segments is None and config.utterances is None:
        findings.append("one of paths.vad, paths.segments, or paths.utterances is required")
    if config.embeddings is None:
        findings.append("paths.embeddings is required (diarization and templates need it)")
    return findings
