"""MIDI-driven avatar animation with masked mocap blending and a
deterministic multi-avatar session simulator."""

__version__ = "0.1.0"
