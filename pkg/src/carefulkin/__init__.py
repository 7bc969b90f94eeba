"""Inferring object carefulness and weight from human transport-movement kinematics."""

__version__ = "0.1.0"
