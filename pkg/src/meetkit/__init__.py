"""meetkit: batch tooling for multi-speaker meeting transcription pipelines."""

__version__ = "0.1.0"
