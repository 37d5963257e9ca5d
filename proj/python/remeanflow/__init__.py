"""One-step generative transport on 2D Gaussian mixtures.

Thin wrapper over the compiled `_remeanflow` extension. Configurations are
plain dicts mirroring the JSON config schema; they are serialized at the
boundary.
"""

import importlib
import importlib.util
import json
import os
import sys


def _load_extension():
    """Import _remeanflow, honoring RMF_MODULE_DIR for out-of-tree builds."""
    override = os.environ.get("RMF_MODULE_DIR")
    if override:
        for name in os.listdir(override):
            if name.startswith("_remeanflow") and name.endswith(
                (".so", ".pyd", ".dylib")
            ):
                spec = importlib.util.spec_from_file_location(
                    "_remeanflow", os.path.join(override, name)
                )
                mod = importlib.util.module_from_spec(spec)
                sys.modules["_remeanflow"] = mod
                spec.loader.exec_module(mod)
                return mod
        raise ImportError(f"no _remeanflow extension found in {override}")
    try:
        return importlib.import_module("remeanflow._remeanflow")
    except ImportError:
        return importlib.import_module("_remeanflow")


_ext = _load_extension()

Couplings = _ext.Couplings
FlowModel = _ext.FlowModel
MeanFlowModel = _ext.MeanFlowModel
RmfError = _ext.RmfError
angular_error = _ext.angular_error
energy_distance = _ext.energy_distance


def default_config():
    """The default run configuration as a dict."""
    return json.loads(_ext.default_config_json())


def config_hash(config):
    return _ext.config_hash(json.dumps(config))


def sample_prior(config, n, seed):
    return _ext.sample_prior(json.dumps(config), n, seed)


def sample_target(config, n, seed):
    return _ext.sample_target(json.dumps(config), n, seed)


def train_flow(config):
    """Train the stage-1 velocity model on independent couplings."""
    return _ext.train_flow(json.dumps(config))


def reflow(config, flow, workers=1):
    """Generate couplings from a flow; returns (raw, truncated, failed)."""
    return _ext.reflow(json.dumps(config), flow, workers)


def train_meanflow(config, couplings, frozen_flow=None):
    """Train the mean-velocity model on the given couplings."""
    return _ext.train_meanflow(json.dumps(config), couplings, frozen_flow)


def compare(config, seeds, out_dir="", workers=1):
    """Three-method comparison; returns the per-method median summary."""
    return json.loads(_ext.compare(json.dumps(config), list(seeds), out_dir,
                                   workers))


def outlier_rate(samples, config):
    return _ext.outlier_rate(samples, json.dumps(config))


def draw_time_pairs(config, n, seed):
    """Draw (r, t) pairs from the configured time sampler; shape (n, 2)."""
    return _ext.draw_time_pairs(json.dumps(config), n, seed)


__all__ = [
    "Couplings",
    "FlowModel",
    "MeanFlowModel",
    "RmfError",
    "angular_error",
    "compare",
    "config_hash",
    "default_config",
    "draw_time_pairs",
    "energy_distance",
    "outlier_rate",
    "reflow",
    "sample_prior",
    "sample_target",
    "train_flow",
    "train_meanflow",
]
