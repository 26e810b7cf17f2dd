"""HDF5 checkpoints of named parameter blocks.

Layout::

    /                       attrs: format_version, fedctr_version
    /<group>/<layer name>   attrs: kind, config_<key>...
    /<group>/<layer name>/<block>   one dataset per parameter block
"""

import json
from typing import Dict, Iterable, Mapping, Union

import h5py
import numpy as np

from ..nnkit import LayerKind, LayerParams
from ..version import __version__
from .base import Model

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def layers_to_hdf5(h5_group: h5py.Group, layers: Iterable[LayerParams]) -> None:
    """Save layers to an :class:`h5py.Group`, one subgroup per layer.

    Args:
        h5_group: An open :class:`h5py.Group` to which to save the layers.
        layers: The layers to save.
    """
    for layer in layers:
        group = h5_group.create_group(layer.name)
        group.attrs["kind"] = layer.kind.value
        group.attrs["config"] = json.dumps(layer.config, sort_keys=True)
        for key, value in layer.items():
            group.create_dataset(key, data=value)


def layers_from_hdf5(h5_group: h5py.Group) -> Dict[str, LayerParams]:
    """Load every layer stored in an :class:`h5py.Group`.

    Returns:
        A dict of ``{layer name: LayerParams}``.
    """
    layers = {}
    for name, group in h5_group.items():
        blocks = {key: np.array(dataset) for key, dataset in group.items()}
        layers[name] = LayerParams(
            name,
            LayerKind(group.attrs["kind"]),
            blocks,
            config=json.loads(group.attrs["config"]),
        )
    return layers


def load_layers(h5_group: h5py.Group, layers: Iterable[LayerParams]) -> None:
    """Copies the stored parameter values into existing layers in place."""
    stored = layers_from_hdf5(h5_group)
    for layer in layers:
        if layer.name not in stored:
            raise CheckpointError(f"Checkpoint has no layer named {layer.name!r}.")
        other = stored[layer.name]
        if other.kind is not layer.kind:
            raise CheckpointError(
                f"Layer {layer.name!r} has kind {layer.kind.value!r} but the"
                f" checkpoint stores {other.kind.value!r}."
            )
        try:
            layer.load_state(other)
        except ValueError as e:
            raise CheckpointError(str(e)) from e


def save_checkpoint(path: str, models: Mapping[str, Union[Model, Iterable[LayerParams]]]) -> None:
    """Writes models to a new HDF5 file, one top-level group per entry of ``models``."""
    with h5py.File(path, "w") as f:
        f.attrs["format_version"] = FORMAT_VERSION
        f.attrs["fedctr_version"] = __version__
        for group_name, model in models.items():
            layers = model.layers if isinstance(model, Model) else model
            layers_to_hdf5(f.create_group(group_name), layers)


def load_checkpoint(
    path: str, models: Mapping[str, Union[Model, Iterable[LayerParams]]]
) -> None:
    """Loads parameters saved by :func:`save_checkpoint` into ``models`` in place."""
    with h5py.File(path, "r") as f:
        version = f.attrs.get("format_version")
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"Unsupported checkpoint format version {version!r}"
                f" (expected {FORMAT_VERSION})."
            )
        for group_name, model in models.items():
            if group_name not in f:
                raise CheckpointError(f"Checkpoint has no group {group_name!r}.")
            layers = model.layers if isinstance(model, Model) else model
            load_layers(f[group_name], layers)
