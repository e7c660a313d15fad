"""bevkit: deterministic LiDAR-camera BEV fusion toolkit.

Core building blocks (geometry, depth rectification, lift-splat view
transform, voxel pyramids, rotated-box post-processing, TTA/WBF
ensembling, detection metrics, paste augmentation) plus a synthetic scene
generator, an HTTP service and a thin CLI client.
"""

__version__ = "0.1.0"
