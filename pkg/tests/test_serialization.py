"""Serialization tests for rsmpc artifacts"""

import json
import os

import numpy as np
import pytest

from rsmpc.model import UncertainLTISystem, system_from_dict
from rsmpc.polytope import Polytope
from rsmpc.rprs.cache import ArtifactCache
from rsmpc.rprs.noise import NoiseModel, ar1_covariance, noise_from_dict
from rsmpc.rprs.variance import VarianceBoundSequence, variance_bounds_load_from_folder
from rsmpc.util._utils import load_json, save_json
from rsmpc.util.custom_exceptions import RSMPCException


def scalar_system() -> UncertainLTISystem:
    return UncertainLTISystem(
        [np.array([[0.5]]), np.array([[0.1]])],
        [np.array([[1.0]]), np.array([[0.0]])],
        Polytope.from_box([-1.0], [1.0]),
        Polytope.from_box([-1.0], [1.0]),
        Polytope.from_box([-1.0], [1.0]),
        0.9,
        0.8,
    )


def test_variance_bounds_serialization(tmp_path):
    """tests variance bound serialization"""
    K = np.array([[-0.5, -1.0]])
    original = VarianceBoundSequence([np.eye(2), 2 * np.eye(2)], K, kind="full")
    folder = str(tmp_path / "variance")
    original.save_to_folder(folder)

    loaded = variance_bounds_load_from_folder(folder)
    assert loaded.T == original.T, "Loaded bounds have a different horizon"
    assert loaded.kind == "full", "Loaded bounds have a different kind"
    assert np.allclose(loaded.bound(2), 2 * np.eye(2)), "Loaded bounds differ"
    assert np.allclose(loaded.input_bound(1), K @ K.T), "Loaded input bounds differ"
    assert np.allclose(loaded.bound(5), loaded.bound(2)), "Indices beyond T should be clamped"


def test_variance_bounds_version(tmp_path):
    """tests that files of another format version are rejected"""
    folder = str(tmp_path / "variance")
    VarianceBoundSequence([np.eye(1)], np.zeros((1, 1))).save_to_folder(folder)
    file_name = os.path.join(folder, os.listdir(folder)[0])
    data = load_json(file_name)
    data["version"] = -1
    save_json(data, file_name)
    with pytest.raises(RSMPCException):
        variance_bounds_load_from_folder(folder)


def test_system_serialization(tmp_path):
    """tests system serialization through a JSON file"""
    original = scalar_system()
    file_name = str(tmp_path / "system.json")
    save_json(original.to_dict(), file_name)

    loaded = system_from_dict(load_json(file_name))
    assert loaded.Theta == original.Theta, "Loaded system has a different Theta"
    assert loaded.p_x == 0.9 and loaded.p_u == 0.8, "Loaded system has different levels"
    assert np.allclose(loaded.A([0.5]), original.A([0.5])), "Loaded system has different dynamics"
    assert np.allclose(loaded.B_w, original.B_w), "Loaded system has a different B_w"


def test_noise_serialization(tmp_path):
    """tests noise model serialization through a JSON file"""
    original = NoiseModel(4, 1, np.arange(4.0), ar1_covariance(np.eye(1), 0.5, 4), "full", "moment_only")
    file_name = str(tmp_path / "noise.json")
    with open(file_name, "w", encoding="utf8") as out_file:
        json.dump(original.to_dict(), out_file)
    with open(file_name, "r", encoding="utf8") as in_file:
        loaded = noise_from_dict(json.load(in_file))
    assert loaded.covariance_kind == "full", "Loaded noise has a different kind"
    assert loaded.family == "moment_only", "Loaded noise has a different family"
    assert np.allclose(loaded.full_covariance(), original.full_covariance()), "Loaded covariance differs"
    assert np.allclose(loaded.mean_sequence()[:, 0], [0.0, 1.0, 2.0, 3.0]), "Loaded mean differs"


def test_cache_entry_lifecycle(tmp_path):
    """tests that only committed entries are hits"""
    cache = ArtifactCache(str(tmp_path / "cache"))
    key = cache.key_for({"alpha": 0.1})
    assert key == cache.key_for({"alpha": 0.1}), "Keys should be deterministic"
    assert key != cache.key_for({"alpha": 0.2}), "Different inputs should give different keys"
    assert not cache.has(key), "Empty cache should miss"
    folder = cache.prepare(key)
    VarianceBoundSequence([np.eye(1)], np.zeros((1, 1))).save_to_folder(folder)
    assert not cache.has(key), "Uncommitted entries should miss"
    cache.commit(key, {"alpha": 0.1})
    assert cache.has(key), "Committed entries should hit"
    assert variance_bounds_load_from_folder(cache.folder(key)).T == 1, "Entry should be readable"
    assert not ArtifactCache(cache.root, enabled=False).has(key), "Disabled cache should always miss"
