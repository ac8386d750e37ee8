import numpy as np
import pytest
import torch
import torch.nn as nn

from malharness.dcgan import DCGAN_NOISE_DIM, DcganGenerator, DcganSpec, dcgan_train
from malharness.io import read_manifest

EXPECTED_DCGAN_G_PARAMS = 2_345_635


def test_generator_shape_and_noise_dim():
    spec = DcganSpec(seed=1)
    assert spec.noise_dim == DCGAN_NOISE_DIM == 100
    torch.manual_seed(spec.seed)
    g = DcganGenerator(spec)
    out = g(torch.randn(2, 100))
    assert tuple(out.shape) == (2, 3, 128, 128)


def test_four_transposed_convolutions():
    g = DcganGenerator(DcganSpec())
    deconvs = [m for m in g.modules() if isinstance(m, nn.ConvTranspose2d)]
    assert len(deconvs) == 4
    assert sum(p.numel() for p in g.parameters()) == EXPECTED_DCGAN_G_PARAMS


def test_generator_adapts_geometry():
    g = DcganGenerator(DcganSpec(image_shape=(64, 64, 1)))
    out = g(torch.randn(1, 100))
    assert tuple(out.shape) == (1, 1, 64, 64)


def test_fixed_seed_fixed_noise_identical():
    outs = []
    for _ in range(2):
        torch.manual_seed(7)
        g = DcganGenerator(DcganSpec(seed=7))
        g.eval()
        with torch.no_grad():
            outs.append(g(torch.full((1, 100), 0.25)))
    assert torch.equal(outs[0], outs[1])


def _hist(pixels):
    h, _ = np.histogram(pixels, bins=64, range=(0, 256), density=True)
    return h


@pytest.mark.slow
def test_training_moves_histogram_toward_corpus(toy_manifest):
    # solid-value corpus: training must pull the generated pixel histogram
    # toward the training histogram relative to the untrained generator
    records = [r for r in read_manifest(toy_manifest) if r["family"] == "famB"]
    from malharness.io import load_images

    train_hist = _hist(load_images(records) * 255.0)
    spec = DcganSpec(image_shape=(128, 128, 3), epochs=12, batch_size=8, seed=5)

    def sample_pixels(generator):
        generator.eval()
        torch.manual_seed(123)
        with torch.no_grad():
            fake = generator(torch.randn(8, 100))
        return ((fake.numpy().transpose(0, 2, 3, 1) + 1) * 127.5).clip(0, 255)

    torch.manual_seed(spec.seed)
    untrained = DcganGenerator(spec)
    dist_before = np.abs(_hist(sample_pixels(untrained)) - train_hist).sum()

    generator = dcgan_train(records, spec)
    pixels = sample_pixels(generator)
    dist_after = np.abs(_hist(pixels) - train_hist).sum()

    assert dist_after < dist_before
    # and the central value must have moved toward the corpus mode (215)
    assert np.median(pixels) > 135.0
