"""fairfab: a self-contained FAIR fabric for publishing, executing, and
grading AI models, demonstrated on a Bragg-peak localization workload."""

__version__ = "0.1.0"
