import sys

import numpy as np
import pytest

from gaussfield import ImageBuffer, ModelConfig, bake, init_model, train


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print the acceptance checklist collected by test_acceptance.

    The verdict list lives on the test module (looked up via sys.modules so
    it is the instance pytest actually executed); the terminal summary is
    never captured, unlike in-test stdout.
    """
    results = []
    for mod in list(sys.modules.values()):
        collected = getattr(mod, "ACCEPTANCE_RESULTS", None)
        if isinstance(collected, list) and collected:
            results.extend(collected)
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, verdict in results:
        terminalreporter.write_line(f"[acceptance] {name}: {verdict}")


def tiny_config(**overrides) -> ModelConfig:
    """Small, fast configuration for unit tests."""
    base = dict(
        n_gaussians=120,
        knn_k=8,
        knn_radius=0.15,
        levels=4,
        features_per_level=2,
        min_res=4,
        max_res=32,
        hash_table_log2=10,
        mlp_hidden_layers=1,
        mlp_hidden_width=16,
        batch_size=128,
        iterations=0,
        rng_seed=7,
    )
    base.update(overrides)
    return ModelConfig(**base)


def gradient_image(width=24, height=24) -> ImageBuffer:
    """Smooth two-axis gradient; cheap to fit approximately."""
    x = np.linspace(0.1, 0.9, width)
    y = np.linspace(0.2, 0.8, height)
    gx, gy = np.meshgrid(x, y)
    data = np.stack([gx, gy, 0.5 * (gx + gy)], axis=2)
    return ImageBuffer.from_array(data)


def disk_rgba(width=24, height=24, radius_frac=0.33) -> ImageBuffer:
    """Colored disk on a transparent background."""
    jj, ii = np.meshgrid(np.arange(width), np.arange(height))
    cx, cy = width / 2, height / 2
    inside = (jj - cx) ** 2 + (ii - cy) ** 2 <= (radius_frac * width) ** 2
    data = np.zeros((height, width, 4))
    data[:, :, 0] = np.where(inside, 0.8, 0.0)
    data[:, :, 1] = np.where(inside, 0.3, 0.0)
    data[:, :, 2] = np.where(inside, 0.1, 0.0)
    data[:, :, 3] = inside.astype(float)
    return ImageBuffer.from_array(data)


@pytest.fixture(scope="session")
def toy_trained():
    """A small model trained for a few hundred steps, then baked."""
    image = gradient_image()
    cfg = tiny_config(iterations=200)
    model = init_model(image, cfg)
    train(model, image)
    bake(model)
    return model, image


@pytest.fixture(scope="session")
def toy_trained_rgba():
    """A small RGBA (disk) model with a mask head, trained and baked."""
    image = disk_rgba()
    cfg = tiny_config(iterations=200)
    model = init_model(image, cfg)
    train(model, image)
    bake(model)
    return model, image
