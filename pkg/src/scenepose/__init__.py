"""Synthesis and validation of physically feasible 3D human poses in voxel scenes."""

__version__ = "0.1.0"
