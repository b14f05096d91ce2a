"""Depth-image autoencoder: training, encoding, reconstruction.

The encoder compresses a normalized depth image to a short latent vector;
the policy consumes latents of the current and desired views instead of
raw pixels.  Architecture is pixels -> 256 -> 64 -> L with tanh hidden
layers and a mirrored decoder; the loss is the plain mean squared error
over normalized pixels.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .config import RunConfig, substream
from .scene import DepthImage, load_dataset


@dataclass
class AeModel:
    """Encoder/decoder pair plus the image normalization constants."""

    encoder: nn.MlpNet
    decoder: nn.MlpNet
    near: float
    far: float
    width: int
    height: int

    def __post_init__(self) -> None:
        pixels = self.width * self.height
        if self.encoder.out_dim != self.decoder.in_dim:
            raise nn.DimensionError("encoder output dim must equal decoder input dim")
        if self.encoder.in_dim != pixels or self.decoder.out_dim != pixels:
            raise nn.DimensionError("encoder/decoder pixel dims must match the image size")
        if self.latent_dim >= pixels:
            raise ValueError("latent dimension must be smaller than the pixel count")

    @property
    def latent_dim(self) -> int:
        return self.encoder.out_dim

    def normalize(self, depth_m: np.ndarray) -> np.ndarray:
        d = (np.asarray(depth_m, dtype=np.float64) - self.near) / (self.far - self.near)
        return d.astype(np.float32)


def build_ae_model(width: int, height: int, latent: int, hidden1: int, hidden2: int,
                   near: float, far: float, rng: np.random.Generator) -> AeModel:
    pixels = width * height
    encoder = nn.make_mlp([pixels, hidden1, hidden2, latent], rng, "tanh", "identity")
    decoder = nn.make_mlp([latent, hidden2, hidden1, pixels], rng, "tanh", "identity")
    return AeModel(encoder, decoder, near, far, width, height)


def encode_normalized(model: AeModel, pixels: np.ndarray) -> np.ndarray:
    """Latent code of an already-normalized float32 image (flat or 2-D)."""
    x = np.asarray(pixels, dtype=np.float64).reshape(1, -1)
    return nn.forward(model.encoder, x)[0]


def encode(model: AeModel, image: DepthImage) -> np.ndarray:
    """Latent code of a metric depth image."""
    return encode_normalized(model, model.normalize(image.data))


def reconstruct(model: AeModel, image: DepthImage) -> tuple[DepthImage, float]:
    """Decode(encode(image)) and the reconstruction MSE in normalized units."""
    x = np.asarray(model.normalize(image.data), dtype=np.float64).reshape(1, -1)
    code = nn.forward(model.encoder, x)
    y = nn.forward(model.decoder, code)
    mse = float(np.mean((y - x) ** 2))
    depth = (y[0] * (model.far - model.near) + model.near).reshape(image.data.shape)
    depth = np.clip(depth, model.near, model.far).astype(np.float32)
    return DepthImage(depth), mse


def batch_mse(model: AeModel, batch: np.ndarray) -> float:
    """Mean squared reconstruction error over a (N, pixels) float batch."""
    x = np.asarray(batch, dtype=np.float64)
    y = nn.forward(model.decoder, nn.forward(model.encoder, x))
    return float(np.mean((y - x) ** 2))


def save_ae(model: AeModel, base: str | Path) -> None:
    nn.save_checkpoint(base, {"encoder": model.encoder, "decoder": model.decoder},
                       scalars={"near": model.near, "far": model.far,
                                "width": model.width, "height": model.height})


def load_ae(base: str | Path) -> AeModel:
    nets, _, scalars = nn.load_checkpoint(base)
    return AeModel(nets["encoder"], nets["decoder"], scalars["near"], scalars["far"],
                   int(scalars["width"]), int(scalars["height"]))


def train_autoencoder(
    dataset_path: str | Path,
    cfg: RunConfig,
    out_dir: str | Path | None = None,
) -> tuple[AeModel, list[dict]]:
    """Train on a rendered dataset; returns the model and the curve rows.

    The split is a deterministic 90/10 shuffle from the run seed.  Training
    stops early once the validation MSE stops improving by more than
    ae.early_stop_delta over ae.early_stop_window epochs.  If out_dir is
    given, writes autoencoder.{json,bin} and curve.csv there.
    """
    images, manifest = load_dataset(dataset_path)
    n = images.shape[0]
    if n < 100:
        raise ValueError(f"dataset has {n} samples; need at least 100")
    flat = images.reshape(n, -1).astype(np.float64)

    seed = cfg.seed
    order = substream(seed, "ae-split").permutation(n)
    n_val = max(1, int(round(n * cfg.get_float("ae.val_fraction"))))
    val = flat[order[:n_val]]
    train = flat[order[n_val:]]

    model = build_ae_model(
        manifest["width"], manifest["height"],
        cfg.get_int("ae.latent"), cfg.get_int("ae.hidden1"), cfg.get_int("ae.hidden2"),
        manifest["normalization"]["near"], manifest["normalization"]["far"],
        substream(seed, "ae-init"),
    )
    opt_enc = nn.adam_init(model.encoder, cfg.get_float("ae.learning_rate"))
    opt_dec = nn.adam_init(model.decoder, cfg.get_float("ae.learning_rate"))

    batch_size = cfg.get_int("ae.batch")
    epochs = cfg.get_int("ae.epochs")
    window = cfg.get_int("ae.early_stop_window")
    delta = cfg.get_float("ae.early_stop_delta")

    rows: list[dict] = []
    best_val = np.inf
    best_epoch = -1
    t0 = time.monotonic()
    for epoch in range(epochs):
        perm = substream(seed, "ae-epoch", epoch).permutation(train.shape[0])
        losses = []
        for start in range(0, train.shape[0], batch_size):
            x = train[perm[start:start + batch_size]]
            code = nn.forward(model.encoder, x)
            y = nn.forward(model.decoder, code)
            err = y - x
            loss = float(np.mean(err * err))
            if not np.isfinite(loss):
                raise nn.NonFiniteError(
                    f"autoencoder loss became non-finite at epoch {epoch}")
            losses.append(loss)
            grad_y = 2.0 * err / err.size
            dec_grads, grad_code = nn.backward(model.decoder, grad_y)
            enc_grads, _ = nn.backward(model.encoder, grad_code)
            nn.adam_step(model.decoder, dec_grads, opt_dec)
            nn.adam_step(model.encoder, enc_grads, opt_enc)
        val_mse = batch_mse(model, val)
        rows.append({
            "epoch": epoch,
            "train_mse": float(np.mean(losses)),
            "val_mse": val_mse,
            "wall_seconds": time.monotonic() - t0,
        })
        if val_mse < best_val - delta:
            best_val = val_mse
            best_epoch = epoch
        elif epoch - best_epoch >= window:
            break

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_ae(model, out_dir / "autoencoder")
        write_curve(rows, out_dir / "curve.csv")
    return model, rows


def write_curve(rows: list[dict], path: str | Path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_mse", "val_mse", "wall_seconds"])
        for row in rows:
            writer.writerow([row["epoch"], f"{row['train_mse']:.17g}",
                             f"{row['val_mse']:.17g}", f"{row['wall_seconds']:.3f}"])
