"""Unsupervised DC-GAN: a four-transposed-convolution generator.

The base design targets 64x64x3 output from a 100-number noise vector;
the stage count stays at four and the initial projection adapts to the
configured geometry (128x128 projects to 8x8).  Defaults train for 300
epochs; desk runs pass something much smaller.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .io import load_images

DCGAN_NOISE_DIM = 100
DCGAN_DEFAULT_EPOCHS = 300


@dataclass
class DcganSpec:
    noise_dim: int = DCGAN_NOISE_DIM
    image_shape: tuple = (128, 128, 3)
    epochs: int = DCGAN_DEFAULT_EPOCHS
    batch_size: int = 16
    seed: int = 0


class DcganGenerator(nn.Module):
    def __init__(self, spec: DcganSpec):
        super().__init__()
        w, h, c = spec.image_shape
        if w % 16 or h % 16:
            raise ValueError("image sides must be multiples of 16")
        self.init_w, self.init_h = w // 16, h // 16
        self.project = nn.Linear(spec.noise_dim, 256 * self.init_w * self.init_h)
        self.deconvs = nn.Sequential(
            nn.BatchNorm2d(256), nn.ReLU(inplace=True),
            nn.ConvTranspose2d(256, 128, 4, stride=2, padding=1),
            nn.BatchNorm2d(128), nn.ReLU(inplace=True),
            nn.ConvTranspose2d(128, 64, 4, stride=2, padding=1),
            nn.BatchNorm2d(64), nn.ReLU(inplace=True),
            nn.ConvTranspose2d(64, 32, 4, stride=2, padding=1),
            nn.BatchNorm2d(32), nn.ReLU(inplace=True),
            nn.ConvTranspose2d(32, c, 4, stride=2, padding=1),
            nn.Tanh(),
        )

    def forward(self, noise):
        x = self.project(noise).view(-1, 256, self.init_h, self.init_w)
        return self.deconvs(x)


class DcganDiscriminator(nn.Module):
    def __init__(self, spec: DcganSpec):
        super().__init__()
        w, h, c = spec.image_shape
        self.net = nn.Sequential(
            nn.Conv2d(c, 32, 4, stride=2, padding=1), nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(32, 64, 4, stride=2, padding=1), nn.BatchNorm2d(64),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(64, 128, 4, stride=2, padding=1), nn.BatchNorm2d(128),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(128, 256, 4, stride=2, padding=1), nn.BatchNorm2d(256),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Flatten(),
            nn.Linear(256 * (w // 16) * (h // 16), 1),
            nn.Sigmoid(),
        )

    def forward(self, images):
        return self.net(images).squeeze(1)


def dcgan_train(manifest_records, spec: DcganSpec, log_every=0):
    """Train on an unlabeled image set; returns the generator."""
    images = load_images(manifest_records)
    if images.shape[1:] != (spec.image_shape[1], spec.image_shape[0], spec.image_shape[2]):
        raise ValueError(f"manifest images {images.shape[1:]} do not match spec "
                         f"{spec.image_shape}")
    torch.manual_seed(spec.seed)
    rng = np.random.default_rng(spec.seed)
    generator = DcganGenerator(spec)
    discriminator = DcganDiscriminator(spec)
    opt_g = torch.optim.Adam(generator.parameters(), lr=2e-4, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(discriminator.parameters(), lr=2e-4, betas=(0.5, 0.999))
    bce = nn.BCELoss()

    X = torch.from_numpy(images.transpose(0, 3, 1, 2) * 2.0 - 1.0)
    n = X.shape[0]
    for epoch in range(spec.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, spec.batch_size):
            idx = perm[start : start + spec.batch_size]
            real = X[idx]
            b = real.shape[0]
            fake = generator(torch.randn(b, spec.noise_dim))

            opt_d.zero_grad()
            loss_d = bce(discriminator(real), torch.ones(b)) \
                + bce(discriminator(fake.detach()), torch.zeros(b))
            loss_d.backward()
            opt_d.step()

            opt_g.zero_grad()
            loss_g = bce(discriminator(fake), torch.ones(b))
            loss_g.backward()
            opt_g.step()
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1}/{spec.epochs}  d={loss_d.item():.4f} "
                  f"g={loss_g.item():.4f}", flush=True)
    generator.eval()
    return generator
