import numpy as np
import pytest
import torch

from malharness.acgan import (
    ACGAN_NOISE_DIM,
    Discriminator,
    GanSpec,
    Generator,
    acgan_train,
    discriminator_predict,
    parameter_count,
)
from malharness.io import load_images, read_manifest

# frozen from the default architecture at class_count=10, noise_dim=1000
EXPECTED_G_PARAMS = 8_455_827
EXPECTED_D_PARAMS = 188_011


def test_spec_invariants():
    with pytest.raises(ValueError):
        GanSpec(kind="acgan", noise_dim=100, image_shape=(128, 128, 3), class_count=5)
    with pytest.raises(ValueError):
        GanSpec(kind="acgan", class_count=1)
    spec = GanSpec(class_count=10)
    assert spec.noise_dim == ACGAN_NOISE_DIM == 1000


def test_generator_shape_contract():
    spec = GanSpec(class_count=10, seed=1)
    torch.manual_seed(spec.seed)
    g = Generator(spec)
    out = g(torch.randn(4, 1000), torch.tensor([0, 3, 7, 9]))
    assert tuple(out.shape) == (4, 3, 128, 128)
    assert out.min().item() >= -1.0 and out.max().item() <= 1.0


def test_discriminator_two_heads():
    spec = GanSpec(class_count=10, seed=1)
    torch.manual_seed(spec.seed)
    d = Discriminator(spec)
    d.eval()
    v, c = d(torch.rand(3, 3, 128, 128) * 2 - 1)
    assert tuple(v.shape) == (3,)
    assert tuple(c.shape) == (3, 10)
    assert (v >= 0).all() and (v <= 1).all()
    assert torch.allclose(c.sum(dim=1), torch.ones(3), atol=1e-6)


def test_parameter_counts_frozen():
    spec = GanSpec(class_count=10)
    assert parameter_count(Generator(spec)) == EXPECTED_G_PARAMS
    assert parameter_count(Discriminator(spec)) == EXPECTED_D_PARAMS


def test_generator_deterministic_given_seed():
    spec = GanSpec(class_count=4, seed=9)
    outs = []
    for _ in range(2):
        torch.manual_seed(spec.seed)
        g = Generator(spec)
        g.eval()
        noise = torch.zeros(1, 1000) + 0.5
        with torch.no_grad():
            outs.append(g(noise, torch.tensor([2])))
    assert torch.equal(outs[0], outs[1])


def test_class_count_mismatch_rejected(toy_manifest):
    records = read_manifest(toy_manifest)
    spec = GanSpec(class_count=7, epochs=1, batch_size=4, seed=0)
    with pytest.raises(ValueError):
        acgan_train(records, spec)


@pytest.mark.slow
def test_generator_checkpoints_every_ten_epochs(toy_manifest, tmp_path):
    import os

    records = [r for r in read_manifest(toy_manifest) if r["split"] == "train"][:16]
    spec = GanSpec(class_count=2, epochs=10, batch_size=16, seed=1)
    acgan_train(records, spec, checkpoint_dir=str(tmp_path / "ckpt"))
    assert sorted(os.listdir(tmp_path / "ckpt")) == ["generator_epoch010.pt"]


@pytest.mark.slow
def test_discriminator_learns_separable_toys(toy_manifest):
    records = read_manifest(toy_manifest)
    train = [r for r in records if r["split"] == "train"]
    test = [r for r in records if r["split"] == "test"]
    spec = GanSpec(class_count=2, epochs=5, batch_size=8, seed=3)
    _, discriminator = acgan_train(train, spec)
    probs = discriminator_predict(discriminator, load_images(test))
    label_map = {"famA": 0, "famB": 1}
    truth = np.array([label_map[r["family"]] for r in test])
    accuracy = float(np.mean(probs.argmax(axis=1) == truth))
    assert accuracy > 0.9
