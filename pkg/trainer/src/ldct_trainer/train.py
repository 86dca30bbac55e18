"""Supervised training of the weight-map network through the unrolled solver.

The loss is the mean squared error between the unrolled output and the
ground-truth image; no weight-map labels are involved.  Checkpoints keep the
best-validation weights (written atomically), and the validation weight maps
of the final best model are exported in the PMAP container so the core
package can consume them directly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ldct.metrics import psnr
from ldct.parammap import write_pmap

from .data import make_datasets
from .unet import ParamMapNet
from .unrolled import estimate_param_map, unrolled_forward


@dataclass
class TrainReport:
    """Per-epoch losses and artifacts of a training run.

    ``val_losses[0]`` is measured before the first update, so a run that
    learns anything satisfies ``val_losses[-1] < val_losses[0]``.  A
    non-finite training or validation loss stops the run and sets
    ``diverged``; only finite values are recorded.
    """

    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    val_psnrs: list = field(default_factory=list)
    checkpoint_path: str | None = None
    lambda_map_paths: list = field(default_factory=list)
    diverged: bool = False

    def __post_init__(self):
        for v in self.train_losses + self.val_losses + self.val_psnrs:
            if not np.isfinite(v):
                raise ValueError("recorded losses must be finite")

    def to_json_dict(self):
        return {
            "train_losses": list(self.train_losses),
            "val_losses": list(self.val_losses),
            "val_psnrs": list(self.val_psnrs),
            "checkpoint_path": self.checkpoint_path,
            "lambda_map_paths": list(self.lambda_map_paths),
            "diverged": self.diverged,
        }


def _atomic_save(state_dict, path):
    tmp = str(path) + ".tmp"
    torch.save(state_dict, tmp)
    os.replace(tmp, path)


def _validate(net, val, config):
    net.eval()
    with torch.no_grad():
        out = unrolled_forward(val["x0"], val["z"], net, config)
        loss = float(torch.mean((out - val["truth"]) ** 2))
    net.train()
    scores = [
        psnr(out[i].numpy().astype(np.float64), val["truth"][i].numpy().astype(np.float64))
        for i in range(out.shape[0])
    ]
    return loss, float(np.mean(scores)), out


def train(config):
    """Run the configured training and return its TrainReport."""
    torch.manual_seed(config.seed)
    net = ParamMapNet(
        depth=config.depth,
        base_channels=config.base_channels,
        out_scale=config.lam_scale,
    )
    opt = torch.optim.Adam(net.parameters(), lr=config.lr)
    train_set, val_set = make_datasets(config)
    n_train = train_set["truth"].shape[0]

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "best.pt"

    report = TrainReport()
    val_loss, val_psnr, _ = _validate(net, val_set, config)
    if not (np.isfinite(val_loss) and np.isfinite(val_psnr)):
        report.diverged = True
        return report
    report.val_losses.append(val_loss)
    report.val_psnrs.append(val_psnr)
    best_loss = val_loss
    _atomic_save(net.state_dict(), ckpt_path)
    report.checkpoint_path = str(ckpt_path)

    order_gen = torch.Generator().manual_seed(config.seed)
    for _ in range(config.epochs):
        perm = torch.randperm(n_train, generator=order_gen)
        epoch_losses = []
        for start in range(0, n_train, config.batch_size):
            idx = perm[start : start + config.batch_size]
            out = unrolled_forward(
                train_set["x0"][idx], train_set["z"][idx], net, config
            )
            loss = torch.mean((out - train_set["truth"][idx]) ** 2)
            if not torch.isfinite(loss):
                report.diverged = True
                return report
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.detach()))
        report.train_losses.append(float(np.mean(epoch_losses)))

        val_loss, val_psnr, _ = _validate(net, val_set, config)
        if not (np.isfinite(val_loss) and np.isfinite(val_psnr)):
            report.diverged = True
            return report
        report.val_losses.append(val_loss)
        report.val_psnrs.append(val_psnr)
        if val_loss < best_loss:
            best_loss = val_loss
            _atomic_save(net.state_dict(), ckpt_path)

    net.load_state_dict(torch.load(ckpt_path, weights_only=True))
    lam = estimate_param_map(val_set["x0"], net)
    for i in range(lam.shape[0]):
        path = out_dir / ("lambda_val_%03d.pmap" % i)
        write_pmap(lam[i].numpy().astype(np.float64), path)
        report.lambda_map_paths.append(str(path))
    with open(out_dir / "train_report.json", "w") as f:
        json.dump(report.to_json_dict(), f, indent=2, sort_keys=True)
    return report
