"""Box geometry, disentangled 3D detection losses and KITTI / nuScenes-style evaluation."""

__version__ = "0.1.0"
