"""Generator and discriminator architectures.

Generators are U-Nets with skip connections between mirrored encoder and
decoder stages; discriminators judge realism per local patch (a stack of
stride-2 convolutions ending in a 1-channel logit map over patches).
"""

from __future__ import annotations

import torch
from torch import nn


def _down(cin, cout, norm=True):
    layers = [nn.Conv2d(cin, cout, 4, stride=2, padding=1, bias=not norm)]
    if norm:
        layers.append(nn.InstanceNorm2d(cout))
    layers.append(nn.LeakyReLU(0.2, inplace=True))
    return nn.Sequential(*layers)


def _up(cin, cout, norm=True):
    layers = [nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1, bias=not norm)]
    if norm:
        layers.append(nn.InstanceNorm2d(cout))
    layers.append(nn.ReLU(inplace=True))
    return nn.Sequential(*layers)


class UNetGenerator(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, base: int = 16, depth: int = 4):
        super().__init__()
        self.config = {
            "in_channels": in_channels,
            "out_channels": out_channels,
            "base": base,
            "depth": depth,
        }
        downs = []
        cin = in_channels
        chans = []
        for d in range(depth):
            cout = base * 2**d
            downs.append(_down(cin, cout, norm=d > 0))
            chans.append(cout)
            cin = cout
        self.downs = nn.ModuleList(downs)
        ups = []
        for d in reversed(range(depth - 1)):
            cout = chans[d]
            ups.append(_up(cin, cout))
            cin = cout * 2  # skip concat
        self.ups = nn.ModuleList(ups)
        self.head = nn.Sequential(
            nn.ConvTranspose2d(cin, out_channels, 4, stride=2, padding=1), nn.Tanh()
        )

    def forward(self, x):
        skips = []
        for down in self.downs:
            x = down(x)
            skips.append(x)
        x = skips.pop()
        for up in self.ups:
            x = up(x)
            x = torch.cat([x, skips.pop()], dim=1)
        return self.head(x)


class PatchDiscriminator(nn.Module):
    """Conditional patch critic: judges (condition, image) pairs per patch."""

    def __init__(self, in_channels: int, base: int = 16, layers: int = 3):
        super().__init__()
        self.config = {"in_channels": in_channels, "base": base, "layers": layers}
        seq = [_down(in_channels, base, norm=False)]
        c = base
        for k in range(1, layers):
            seq.append(_down(c, c * 2))
            c *= 2
        seq.append(nn.Conv2d(c, 1, 4, stride=1, padding=1))
        self.net = nn.Sequential(*seq)

    def forward(self, condition, image):
        return self.net(torch.cat([condition, image], dim=1))
