"""Video motion-assessment toolkit.

End-to-end pipeline: dense TV-L1 optical flow, motion-boundary features,
temporal-segment snippet sampling, a shared-weight 3D-convolutional encoder
with attention-weighted consensus, focal-loss training, and subject-level
cross-validated evaluation with multi-stream late fusion.
"""

__version__ = "0.1.0"
