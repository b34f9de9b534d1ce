"""Simulation laboratory for inertial motion compensation in weight-bearing
cone-beam CT of the knee: articulated leg motion, IMU synthesis, strap-down
tracking, analytic forward projection, FDK reconstruction, a marker-based
baseline, and image-quality evaluation."""

__version__ = "0.1.0"
