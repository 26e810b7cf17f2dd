from typing import Dict, List

import numpy as np

from ..nnkit import LayerParams

State = Dict[str, Dict[str, np.ndarray]]


class Model:
    """Base class for a collection of named layers owned by one party."""

    name: str = "model"

    @property
    def layers(self) -> List[LayerParams]:
        raise NotImplementedError

    @property
    def num_parameters(self) -> int:
        return sum(layer.num_parameters for layer in self.layers)

    def zero_grads(self) -> None:
        for layer in self.layers:
            layer.zero_grads()

    def state(self) -> State:
        """Returns a copy of every parameter block, keyed by layer and block name."""
        return {
            layer.name: {key: value.copy() for key, value in layer.items()}
            for layer in self.layers
        }

    def restore(self, state: State) -> None:
        """Overwrites the parameters in place with values from :meth:`Model.state`."""
        for layer in self.layers:
            for key, value in state[layer.name].items():
                layer.params[key][...] = value

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(name={self.name!r}, "
            f"layers={len(self.layers)}, parameters={self.num_parameters})"
        )
