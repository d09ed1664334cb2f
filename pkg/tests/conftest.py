"""Shared scene fixtures for the test suite.

Scene generation is deterministic, so module-scoped fixtures are safe to
share across tests.
"""
import numpy as np
import pytest

from floodbench.synth import SceneSpec, SyntheticScene, generate_scene


def mapping_scene_spec(**overrides) -> SceneSpec:
    """The 256x256 mapping-skill scene: water -18 dB, land -8 dB, L = 4."""
    params = dict(width=256, height=256, looks=4.0, seed=7,
                  permanent_half_width=60.0)
    params.update(overrides)
    return SceneSpec(**params)


def sweep_scene_spec(**overrides) -> SceneSpec:
    """The 128x128 sweep scene used by the determinism/spread criteria."""
    params = dict(width=128, height=128, looks=8.0, seed=37,
                  permanent_half_width=60.0, shore_ramp_cells=8.0,
                  texture_db=1.2)
    params.update(overrides)
    return SceneSpec(**params)


@pytest.fixture(scope="session")
def mapping_scene() -> SyntheticScene:
    return generate_scene(mapping_scene_spec())


@pytest.fixture(scope="session")
def sweep_scene() -> SyntheticScene:
    return generate_scene(sweep_scene_spec())


@pytest.fixture(scope="session")
def smooth_valley() -> SyntheticScene:
    """Noise-free 128x128 valley for analytic depth oracles."""
    return generate_scene(SceneSpec(width=128, height=128, looks=4.0, seed=3))


def random_raster(rng: np.random.Generator, width: int, height: int,
                  low: float = 0.0, high: float = 10.0):
    from floodbench.raster import Raster
    vals = rng.uniform(low, high, size=(height, width))
    return Raster(width, height, 10.0, 0.0, 0.0, -9999.0, vals)


def random_mask(rng: np.random.Generator, width: int, height: int,
                p: float = 0.4):
    from floodbench.raster import BinaryMask
    vals = (rng.random((height, width)) < p).astype(np.uint8)
    return BinaryMask(width, height, 10.0, 0.0, 0.0, vals)
