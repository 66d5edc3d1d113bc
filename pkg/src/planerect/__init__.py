"""planerect: perspective-distortion removal for feature matching.

Given an image with a dense depth map, the library estimates per-pixel
surface normals, groups them into dominant planes, and warps each plane
fronto-parallel so ordinary feature detectors survive large viewpoint
changes. An evaluation harness scores relative-pose recovery against a
synthetic ground-truth renderer.
"""

__version__ = "0.1.0"
