"""Four-layer convolutional digit classifier.

Two 3x3 convolution blocks (each ReLU + 2x2 max-pool) feed a 128-unit
fully connected layer whose ReLU output is the *feature* representation;
a final linear layer maps features to class logits.  The final layer is
exactly the classifier head exported alongside feature dumps, so
``head @ features + bias`` reproduces the model's logits.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

FEATURE_DIM = 128

#: Architecture tag this exporter implements; other tags are stubs.
ARCH_TAG = "mnist-4layer"

#: Feature hook tag: the ReLU output of fc1, i.e. the final layer's input.
FEATURE_LAYER_TAG = "fc1"


class DigitNet(nn.Module):
    """CNN over single-channel 28x28 images with an exposed feature layer."""

    def __init__(self, num_classes: int, channels: tuple[int, int] = (16, 32)) -> None:
        super().__init__()
        c1, c2 = channels
        self.conv1 = nn.Conv2d(1, c1, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(c1, c2, kernel_size=3, padding=1)
        self.pool = nn.MaxPool2d(2)
        self.fc1 = nn.Linear(c2 * 7 * 7, FEATURE_DIM)
        self.fc2 = nn.Linear(FEATURE_DIM, num_classes)

    def layer_description(self) -> list[str]:
        """Human-readable summary of the four weight layers, for manifests."""
        c1, c2 = self.conv1.out_channels, self.conv2.out_channels
        return [
            f"conv3x3(1->{c1}) + relu + maxpool2",
            f"conv3x3({c1}->{c2}) + relu + maxpool2",
            f"fc({self.fc1.in_features}->{self.fc1.out_features}) + relu",
            f"fc({self.fc2.in_features}->{self.fc2.out_features})",
        ]

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Penultimate activations, shape ``(N, 128)``, non-negative."""
        x = self.pool(torch.relu(self.conv1(x)))
        x = self.pool(torch.relu(self.conv2(x)))
        return torch.relu(self.fc1(torch.flatten(x, 1)))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.features(x))

    def head_arrays(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Final-layer ``(weight, bias)`` as float32 numpy arrays."""
        weight = self.fc2.weight.detach().cpu().numpy().astype(np.float32)
        bias = self.fc2.bias.detach().cpu().numpy().astype(np.float32)
        return [(weight, bias)]
