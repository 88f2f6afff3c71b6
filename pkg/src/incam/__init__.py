"""In-camera processing pipelines: cost model, face authentication, bilateral-space stereo."""

__version__ = "0.1.0"
