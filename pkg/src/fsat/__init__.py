"""Frequency-selective adversarial training for raw-waveform deepfake audio detectors."""

__version__ = "0.1.0"
