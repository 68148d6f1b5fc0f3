"""Small shared helpers for the tests."""

import numpy as np


def dyadic(rng: np.random.Generator, shape, scale_bits: int = 8) -> np.ndarray:
    """Random values on a coarse binary grid so sums and differences are exact."""
    return (rng.integers(-2 ** 10, 2 ** 10, size=shape) / 2.0 ** scale_bits).astype(np.float32)


def quick_config(data_dir, workspace, **over) -> dict:
    """Pipeline config with tiny models and a few epochs, for exercising plumbing."""
    cfg = {
        "manifest": str(data_dir / "manifest.json"),
        "workspace": str(workspace),
        "classes": 2,
        "max_bodies": 1,
        "T_fixed": 8,
        "seed": 3,
        "parsemap": {"labels": 20, "input_size": 16, "augment_delta": 0.1},
        "gcn": {"blocks": 2, "channels": [4], "temporal_kernel": 3},
        "cnn": {"blocks": 2, "channels": [4, 4]},
        "train": {
            "gcn": {"learning_rate": 0.02, "schedule": [], "epochs": 2, "batch_size": 4, "clip_norm": 1.0},
            "cnn": {"learning_rate": 0.05, "schedule": [], "epochs": 2, "batch_size": 4, "clip_norm": 1.0},
        },
    }
    cfg.update(over)
    return cfg
