import numpy as np
import pytest

from motionscore.synthetic import SynthConfig, generate_synthetic


@pytest.fixture(scope="session")
def micro_dataset(tmp_path_factory):
    """A tiny rendered dataset shared by I/O, pipeline, and CLI tests."""
    cfg = SynthConfig(n_subjects=4, clips_per_subject=1, frame_size=(32, 32),
                      frame_count=(18, 20), fps=10.0, rng_seed=3)
    root = tmp_path_factory.mktemp("micro_ds")
    manifest = generate_synthetic(cfg, root)
    return manifest
