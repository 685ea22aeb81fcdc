"""Shared fixtures: the default two-reflector scene and signal setups."""

import pytest

from sceneutil import default_config, default_scene
from snaploc import Scene, SignalConfig


@pytest.fixture
def scene() -> Scene:
    return default_scene()


@pytest.fixture
def scene_m1() -> Scene:
    return default_scene(num_ips=1)


@pytest.fixture
def small_config() -> SignalConfig:
    return default_config(num_subcarriers=64, num_symbols=4)
