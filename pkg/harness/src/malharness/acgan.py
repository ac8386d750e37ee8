"""Auxiliary-classifier GAN for 128x128 color malware images.

The generator consumes a 1000-dim noise vector (the larger noise size
pays off at 64x64 and above) conditioned on a class label; the
discriminator has exactly two heads, one scoring image validity and
one predicting the class, trained with two losses.  The discriminator
is the multiclass classifier of interest and saturates around 30
epochs; the generator keeps improving far longer, so checkpoints are
written every 10 epochs up to 200 when a checkpoint directory is given.
"""

import os
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .io import label_map_for, load_images

ACGAN_NOISE_DIM = 1000
DISCRIMINATOR_DEFAULT_EPOCHS = 30
GENERATOR_MAX_EPOCHS = 200
CHECKPOINT_EVERY = 10


@dataclass
class GanSpec:
    kind: str = "acgan"
    noise_dim: int = ACGAN_NOISE_DIM
    image_shape: tuple = (128, 128, 3)
    class_count: int = 0
    epochs: int = DISCRIMINATOR_DEFAULT_EPOCHS
    batch_size: int = 16
    seed: int = 0
    validity_weight: float = 0.5  # class weight is 1 - validity_weight

    def __post_init__(self):
        if self.kind == "acgan" and self.image_shape == (128, 128, 3):
            if self.noise_dim != ACGAN_NOISE_DIM:
                raise ValueError(
                    f"128x128 color AC-GAN uses noise_dim={ACGAN_NOISE_DIM}")
        if self.kind == "acgan" and self.class_count < 2:
            raise ValueError("AC-GAN needs class_count >= 2")


class Generator(nn.Module):
    """Noise x class label -> image in [-1, 1], four upsampling stages."""

    def __init__(self, spec: GanSpec):
        super().__init__()
        self.spec = spec
        w, h, c = spec.image_shape
        if w % 16 or h % 16:
            raise ValueError("image sides must be multiples of 16")
        self.init_w, self.init_h = w // 16, h // 16
        self.label_embedding = nn.Embedding(spec.class_count, spec.noise_dim)
        self.project = nn.Linear(spec.noise_dim, 128 * self.init_w * self.init_h)
        self.blocks = nn.Sequential(
            nn.BatchNorm2d(128),
            nn.Upsample(scale_factor=2), nn.Conv2d(128, 128, 3, padding=1),
            nn.BatchNorm2d(128), nn.ReLU(inplace=True),
            nn.Upsample(scale_factor=2), nn.Conv2d(128, 64, 3, padding=1),
            nn.BatchNorm2d(64), nn.ReLU(inplace=True),
            nn.Upsample(scale_factor=2), nn.Conv2d(64, 32, 3, padding=1),
            nn.BatchNorm2d(32), nn.ReLU(inplace=True),
            nn.Upsample(scale_factor=2), nn.Conv2d(32, 16, 3, padding=1),
            nn.BatchNorm2d(16), nn.ReLU(inplace=True),
            nn.Conv2d(16, c, 3, padding=1), nn.Tanh(),
        )

    def forward(self, noise, labels):
        x = noise * self.label_embedding(labels)
        x = self.project(x).view(-1, 128, self.init_h, self.init_w)
        return self.blocks(x)


class Discriminator(nn.Module):
    """Strided conv stack with two heads: validity (sigmoid) and class."""

    def __init__(self, spec: GanSpec):
        super().__init__()
        w, h, c = spec.image_shape
        self.features = nn.Sequential(
            nn.Conv2d(c, 16, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True), nn.Dropout2d(0.25),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.BatchNorm2d(32),
            nn.LeakyReLU(0.2, inplace=True), nn.Dropout2d(0.25),
            nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.BatchNorm2d(64),
            nn.LeakyReLU(0.2, inplace=True), nn.Dropout2d(0.25),
            nn.Conv2d(64, 128, 3, stride=2, padding=1), nn.BatchNorm2d(128),
            nn.LeakyReLU(0.2, inplace=True), nn.Dropout2d(0.25),
            nn.Flatten(),
        )
        feat = 128 * (w // 16) * (h // 16)
        self.validity_head = nn.Linear(feat, 1)
        self.class_head = nn.Linear(feat, spec.class_count)

    def forward(self, images):
        feats = self.features(images)
        validity = torch.sigmoid(self.validity_head(feats)).squeeze(1)
        class_probs = torch.softmax(self.class_head(feats), dim=1)
        return validity, class_probs

    def class_logits(self, images):
        return self.class_head(self.features(images))


def parameter_count(module):
    return sum(p.numel() for p in module.parameters())


def _to_tensor(images):
    # NHWC [0,1] -> NCHW [-1,1]
    return torch.from_numpy(images.transpose(0, 3, 1, 2) * 2.0 - 1.0)


def acgan_train(manifest_records, spec: GanSpec, checkpoint_dir=None, log_every=0):
    """Train on manifest images; returns (generator, discriminator).

    Two discriminator losses per the architecture: binary cross-entropy
    on validity and cross-entropy on the class label, mixed by
    spec.validity_weight (0.5 = equal weights).
    """
    label_map = label_map_for(manifest_records)
    if spec.class_count != len(label_map):
        raise ValueError(f"spec.class_count={spec.class_count} but manifest has "
                         f"{len(label_map)} families")
    images = load_images(manifest_records)
    if images.shape[1:] != (spec.image_shape[1], spec.image_shape[0], spec.image_shape[2]):
        raise ValueError(f"manifest images {images.shape[1:]} do not match spec "
                         f"{spec.image_shape}")
    labels = np.array([label_map[r["family"]] for r in manifest_records])

    torch.manual_seed(spec.seed)
    rng = np.random.default_rng(spec.seed)
    generator = Generator(spec)
    discriminator = Discriminator(spec)
    opt_g = torch.optim.Adam(generator.parameters(), lr=2e-4, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(discriminator.parameters(), lr=2e-4, betas=(0.5, 0.999))
    bce = nn.BCELoss()
    ce = nn.NLLLoss()
    w_valid = spec.validity_weight
    w_class = 1.0 - spec.validity_weight

    X = _to_tensor(images)
    y = torch.from_numpy(labels).long()
    n = X.shape[0]

    def d_loss_on(batch_images, validity_target, class_target):
        validity, class_probs = discriminator(batch_images)
        loss_v = bce(validity, validity_target)
        loss_c = ce(torch.log(class_probs.clamp_min(1e-12)), class_target)
        return w_valid * loss_v + w_class * loss_c

    for epoch in range(spec.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, spec.batch_size):
            idx = perm[start : start + spec.batch_size]
            real = X[idx]
            real_y = y[idx]
            b = real.shape[0]

            noise = torch.randn(b, spec.noise_dim)
            fake_y = torch.from_numpy(rng.integers(0, spec.class_count, size=b)).long()
            fake = generator(noise, fake_y)

            opt_d.zero_grad()
            loss_d = d_loss_on(real, torch.ones(b), real_y) \
                + d_loss_on(fake.detach(), torch.zeros(b), fake_y)
            loss_d.backward()
            opt_d.step()

            opt_g.zero_grad()
            validity, class_probs = discriminator(fake)
            loss_g = w_valid * bce(validity, torch.ones(b)) \
                + w_class * ce(torch.log(class_probs.clamp_min(1e-12)), fake_y)
            loss_g.backward()
            opt_g.step()

        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1}/{spec.epochs}  d={loss_d.item():.4f} "
                  f"g={loss_g.item():.4f}", flush=True)
        if checkpoint_dir and (epoch + 1) % CHECKPOINT_EVERY == 0 \
                and epoch + 1 <= GENERATOR_MAX_EPOCHS:
            os.makedirs(checkpoint_dir, exist_ok=True)
            torch.save(generator.state_dict(),
                       os.path.join(checkpoint_dir, f"generator_epoch{epoch + 1:03d}.pt"))

    generator.eval()
    discriminator.eval()
    return generator, discriminator


def discriminator_predict(discriminator, images):
    """Class probabilities from the class head, row-normalized."""
    discriminator.eval()
    with torch.no_grad():
        _, class_probs = discriminator(_to_tensor(images))
    return class_probs.numpy()
