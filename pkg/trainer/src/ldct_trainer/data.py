"""Training data: seeded synthetic phantoms or an HDF5 image archive.

Each sample is a (ground truth, noisy log-sinogram, FBP start) triple built
with the core package's simulation pipeline.  Synthetic phantom seeds for the
train and validation splits are disjoint by construction, so the validation
images are genuinely held out.
"""

from __future__ import annotations

import numpy as np
import torch

from ldct.operators import forward_project
from ldct.physics import simulate_lowdose
from ldct.solvers import fbp_reconstruct
from ldct.testdata import random_ellipses

_TRAIN_PHANTOM_BASE = 0
_VAL_PHANTOM_BASE = 50_000
_TRAIN_NOISE_BASE = 100_000
_VAL_NOISE_BASE = 150_000
_N_ELLIPSES = 6


def pairs_from_images(images, config, noise_seed_base):
    """Project, corrupt, and FBP-start a stack of ground-truth images."""
    geom = config.geometry()
    params = config.physics()
    truths, sinos, starts = [], [], []
    for i, truth in enumerate(images):
        truth = np.asarray(truth, dtype=np.float64)
        if truth.shape != geom.image_shape:
            raise ValueError("image shape %s does not match geometry" % (truth.shape,))
        z = simulate_lowdose(forward_project(truth, geom), params, seed=noise_seed_base + i)
        x0 = np.maximum(fbp_reconstruct(z, geom), 0.0)
        truths.append(truth)
        sinos.append(z)
        starts.append(x0)

    def stack(arrs):
        return torch.from_numpy(np.stack(arrs).astype(np.float32))

    return {"truth": stack(truths), "z": stack(sinos), "x0": stack(starts)}


def synthetic_images(size, count, phantom_seed_base):
    return [
        random_ellipses(size, _N_ELLIPSES, seed=phantom_seed_base + i)
        for i in range(count)
    ]


def load_hdf5_images(path, count, size):
    """First ``count`` images from an HDF5 archive's "data" dataset.

    Larger images are reduced by integer block averaging; the source side
    must be a multiple of the target side.
    """
    try:
        import h5py
    except ImportError as e:
        raise RuntimeError("reading HDF5 datasets requires the h5py package") from e
    with h5py.File(path, "r") as f:
        if "data" not in f:
            raise ValueError("HDF5 archive has no 'data' dataset")
        raw = np.asarray(f["data"][:count], dtype=np.float64)
    if raw.ndim != 3 or raw.shape[0] < count:
        raise ValueError("archive holds %s, need %d images" % (raw.shape, count))
    side = raw.shape[1]
    if raw.shape[2] != side or side % size:
        raise ValueError("cannot reduce %s images to side %d" % (raw.shape[1:], size))
    f_factor = side // size
    out = raw.reshape(count, size, f_factor, size, f_factor).mean(axis=(2, 4))
    return [np.clip(img, 0.0, 1.0) for img in out]


def make_datasets(config):
    """(train, val) sample dicts for a config; raises if the source is missing."""
    if config.dataset == "synthetic":
        train_imgs = synthetic_images(config.size, config.n_train, _TRAIN_PHANTOM_BASE)
        val_imgs = synthetic_images(config.size, config.n_val, _VAL_PHANTOM_BASE)
    else:
        imgs = load_hdf5_images(config.dataset, config.n_train + config.n_val, config.size)
        train_imgs = imgs[: config.n_train]
        val_imgs = imgs[config.n_train :]
    train = pairs_from_images(train_imgs, config, _TRAIN_NOISE_BASE)
    val = pairs_from_images(val_imgs, config, _VAL_NOISE_BASE)
    return train, val
