"""
units.py

Feed-forward building block shared by both cost model kinds: a chain of float64 linear layers, each followed by a
`relu` or `identity` activation.
"""
import math
from typing import List, Optional

import torch
import torch.nn as nn


ACTIVATIONS = {
    "relu": torch.relu,
    "identity": lambda x: x,
}


class MLPUnit(nn.Module):
    def __init__(self, sizes: List[int], activations: Optional[List[str]] = None) -> None:
        """
        :param sizes: Layer widths, input first (`[in, hidden..., out]`).
        :param activations: One tag per layer; defaults to relu on hidden layers and identity on the output layer.
        """
        super().__init__()
        if activations is None:
            activations = ["relu"] * (len(sizes) - 2) + ["identity"]
        assert len(activations) == len(sizes) - 1, "Need exactly one activation per layer!"

        self.activations = list(activations)
        self.layers = nn.ModuleList(
            [nn.Linear(fan_in, fan_out, dtype=torch.float64) for fan_in, fan_out in zip(sizes[:-1], sizes[1:])]
        )

    @property
    def sizes(self) -> List[int]:
        return [self.layers[0].in_features] + [layer.out_features for layer in self.layers]

    def reset_parameters(self, generator: torch.Generator, output_bias: float = 0.0) -> None:
        """Seeded uniform init in +/- sqrt(6 / (fan_in + fan_out)); zero biases except the cost output's."""
        with torch.no_grad():
            for layer in self.layers:
                bound = math.sqrt(6.0 / (layer.in_features + layer.out_features))
                layer.weight.uniform_(-bound, bound, generator=generator)
                layer.bias.zero_()
            self.layers[-1].bias[0] = output_bias

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer, act in zip(self.layers, self.activations):
            x = ACTIVATIONS[act](layer(x))
        return x
