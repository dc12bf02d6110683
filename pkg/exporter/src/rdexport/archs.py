"""Supported torch architectures.

Each entry maps an --arch name to a constructor returning a fresh module.
Weight init is torch's default; checkpoints carry the actual values, so the
constructors only have to produce the right shapes and wiring.
"""

import torch
from torch import nn


class ResidualBlock(nn.Module):
    """conv-bn-relu-conv-bn plus identity skip, relu after the add.

    Identity skips only (same channels, stride 1): the exported graph adds
    the block input back with an add-skip layer, which cannot express a
    projection on the skip path.
    """

    def __init__(self, channels):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(channels)
        self.relu1 = nn.ReLU()
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(channels)
        self.relu_out = nn.ReLU()

    def forward(self, x):
        y = self.bn1(self.conv1(x))
        y = self.relu1(y)
        y = self.bn2(self.conv2(y))
        return self.relu_out(x + y)


class MlpToy(nn.Module):
    input_shape = (16,)

    def __init__(self):
        super().__init__()
        self.body = nn.Sequential(
            nn.Linear(16, 32), nn.ReLU(),
            nn.Linear(32, 24), nn.ReLU(),
            nn.Linear(24, 10),
        )

    def forward(self, x):
        return self.body(x)


class LeNet(nn.Module):
    input_shape = (1, 8, 8)

    def __init__(self):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(1, 4, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(4, 8, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Flatten(),
            nn.Linear(8 * 2 * 2, 16), nn.ReLU(),
            nn.Linear(16, 10),
        )

    def forward(self, x):
        return self.body(x)


class ResNetTiny(nn.Module):
    input_shape = (3, 8, 8)

    def __init__(self):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(3, 8, 3, padding=1), nn.BatchNorm2d(8), nn.ReLU(),
            ResidualBlock(8),
            nn.AvgPool2d(2),
            nn.Flatten(),
            nn.Linear(8 * 4 * 4, 10),
        )

    def forward(self, x):
        return self.body(x)


ARCHS = {
    "mlp_toy": MlpToy,
    "lenet": LeNet,
    "resnet_tiny": ResNetTiny,
}


def build_arch(name: str) -> nn.Module:
    if name not in ARCHS:
        raise ValueError(f"unknown arch {name!r}; choose from {sorted(ARCHS)}")
    model = ARCHS[name]()
    model.eval()
    return model


def load_checkpoint(model: nn.Module, ckpt_path) -> nn.Module:
    state = torch.load(ckpt_path, map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return model
