"""U-Net that maps a reconstruction to a two-channel TV weight map.

The output passes through softplus and a fixed positive scale, so the weights
are nonnegative for every input and every weight state (positive up to
float32 underflow of softplus for very negative pre-activations).  The scale sets
the working range of the map; near initialization the output sits around
``out_scale * log(2)``, so choosing ``out_scale`` near the useful TV-weight
magnitude lets short trainings adjust the map instead of first having to grow
the head output by orders of magnitude.  Spatial size must be divisible by
2**depth because each encoder level halves the resolution.
"""

from __future__ import annotations

import torch
import torch.nn as nn


class _ConvBlock(nn.Module):
    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.body(x)


class ParamMapNet(nn.Module):
    """Encoder-decoder with skip connections and a softplus output head.

    ``depth`` counts the pooling steps; channel width doubles per level from
    ``base_channels``.  Input is a single-channel image batch, output a
    nonnegative two-channel weight map of the same spatial size, equal to
    ``out_scale * softplus(head)``.
    """

    def __init__(self, depth=3, base_channels=32, in_channels=1, out_channels=2, out_scale=1.0):
        super().__init__()
        if depth < 1:
            raise ValueError("depth must be >= 1")
        if base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if not out_scale > 0:
            raise ValueError("out_scale must be positive")
        self.depth = depth
        self.out_scale = float(out_scale)

        chans = [base_channels * 2**i for i in range(depth + 1)]
        self.encoders = nn.ModuleList()
        prev = in_channels
        for ch in chans[:-1]:
            self.encoders.append(_ConvBlock(prev, ch))
            prev = ch
        self.pool = nn.MaxPool2d(2)
        self.bottleneck = _ConvBlock(chans[-2], chans[-1])

        self.upsamplers = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for ch in reversed(chans[:-1]):
            self.upsamplers.append(nn.ConvTranspose2d(ch * 2, ch, 2, stride=2))
            self.decoders.append(_ConvBlock(ch * 2, ch))
        self.head = nn.Conv2d(base_channels, out_channels, 1)

    def forward(self, x):
        if x.ndim == 3:
            x = x.unsqueeze(1)
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError("expected a (B, 1, H, W) or (B, H, W) batch")
        if x.shape[-2] % 2**self.depth or x.shape[-1] % 2**self.depth:
            raise ValueError(
                "spatial size %s not divisible by %d" % (tuple(x.shape[-2:]), 2**self.depth)
            )

        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for up, dec, skip in zip(self.upsamplers, self.decoders, reversed(skips)):
            x = up(x)
            x = dec(torch.cat([x, skip], dim=1))
        return self.out_scale * torch.nn.functional.softplus(self.head(x))
