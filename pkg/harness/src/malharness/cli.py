"""Harness CLI: GAN training, fake generation, ResNet, baselines.

All inputs and outputs go through the pipeline's file formats (PNG,
manifest JSONL, predictions JSONL), so every artifact produced here is
directly consumable by the `malvis` commands and vice versa.
"""

import argparse
import json
import os
import sys

import numpy as np
import torch

from .acgan import GanSpec, Generator, acgan_train, discriminator_predict
from .baselines import baseline_adapter
from .dcgan import DcganGenerator, DcganSpec, dcgan_train
from .errors import HarnessError, MissingDependencyError
from .fakes import generate_fakes
from .io import label_map_for, load_images, read_manifest, write_predictions, write_runlog
from .resnet import resnet_finetune


def _manifest_image_shape(records):
    from PIL import Image

    with Image.open(records[0]["image_path"]) as im:
        w, h = im.size
        c = 1 if im.mode == "L" else 3
    return (w, h, c)


def cmd_acgan_train(args):
    records = read_manifest(args.manifest)
    label_map = label_map_for(records)
    shape = (args.size, args.size, 3) if args.size else _manifest_image_shape(records)
    spec = GanSpec(kind="acgan", noise_dim=args.noise_dim,
                   image_shape=shape,
                   class_count=len(label_map), epochs=args.epochs,
                   batch_size=args.batch_size, seed=args.seed,
                   validity_weight=args.validity_weight)
    train_records = [r for r in records if r.get("split") in ("train", "")]
    checkpoints = os.path.join(args.out, "checkpoints") if args.checkpoints else None
    generator, discriminator = acgan_train(train_records, spec,
                                           checkpoint_dir=checkpoints,
                                           log_every=args.log_every)
    os.makedirs(args.out, exist_ok=True)
    torch.save(generator.state_dict(), os.path.join(args.out, "generator.pt"))
    torch.save(discriminator.state_dict(), os.path.join(args.out, "discriminator.pt"))
    with open(os.path.join(args.out, "acgan_spec.json"), "w") as f:
        json.dump({"noise_dim": spec.noise_dim, "image_shape": list(spec.image_shape),
                   "class_count": spec.class_count, "families": sorted(label_map),
                   "seed": spec.seed, "epochs": spec.epochs,
                   "validity_weight": spec.validity_weight}, f, indent=2, sort_keys=True)
        f.write("\n")
    write_runlog(args.out, "acgan-train", vars(args))

    test_records = [r for r in records if r.get("split") == "test"]
    if test_records:
        probs = discriminator_predict(discriminator, load_images(test_records))
        write_predictions(os.path.join(args.out, "predictions.jsonl"),
                          [r["sample_id"] for r in test_records],
                          probs.argmax(axis=1), probs)
        print(f"wrote discriminator predictions for {len(test_records)} test samples")
    print(f"AC-GAN trained ({spec.epochs} epochs, {spec.class_count} classes) -> {args.out}")
    return 0


def cmd_dcgan_train(args):
    records = read_manifest(args.manifest)
    shape = (args.size, args.size, 3) if args.size else _manifest_image_shape(records)
    spec = DcganSpec(image_shape=shape, epochs=args.epochs,
                     batch_size=args.batch_size, seed=args.seed)
    generator = dcgan_train(records, spec, log_every=args.log_every)
    os.makedirs(args.out, exist_ok=True)
    torch.save(generator.state_dict(), os.path.join(args.out, "generator.pt"))
    with open(os.path.join(args.out, "dcgan_spec.json"), "w") as f:
        json.dump({"noise_dim": spec.noise_dim, "image_shape": list(spec.image_shape),
                   "seed": spec.seed, "epochs": spec.epochs}, f, indent=2, sort_keys=True)
        f.write("\n")
    write_runlog(args.out, "dcgan-train", vars(args))
    print(f"DC-GAN trained ({spec.epochs} epochs) -> {args.out}")
    return 0


def _load_generator(model_dir):
    acgan_spec = os.path.join(model_dir, "acgan_spec.json")
    dcgan_spec = os.path.join(model_dir, "dcgan_spec.json")
    if os.path.exists(acgan_spec):
        with open(acgan_spec) as f:
            meta = json.load(f)
        spec = GanSpec(kind="acgan", noise_dim=meta["noise_dim"],
                       image_shape=tuple(meta["image_shape"]),
                       class_count=meta["class_count"], seed=meta["seed"])
        generator = Generator(spec)
        families = meta["families"]
    elif os.path.exists(dcgan_spec):
        with open(dcgan_spec) as f:
            meta = json.load(f)
        spec = DcganSpec(noise_dim=meta["noise_dim"],
                         image_shape=tuple(meta["image_shape"]), seed=meta["seed"])
        generator = DcganGenerator(spec)
        families = None
    else:
        raise HarnessError(f"no *_spec.json found in {model_dir!r}")
    generator.load_state_dict(
        torch.load(os.path.join(model_dir, "generator.pt"), weights_only=True))
    generator.eval()
    return generator, families


def cmd_generate_fakes(args):
    generator, trained_families = _load_generator(args.model_dir)
    if args.families:
        families = args.families.split(",")
    elif trained_families:
        families = trained_families
    else:
        families = ["unlabeled"]
    counts = {fam: args.per_family for fam in families}
    records = generate_fakes(generator, counts, args.out, seed=args.seed)
    write_runlog(args.out + ".meta", "generate-fakes", vars(args))
    print(f"wrote {len(records)} fake images under {args.out}")
    return 0


def cmd_baseline(args):
    records = read_manifest(args.manifest)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)) or ".", exist_ok=True)
    sample_ids, _, _ = baseline_adapter(records, args.model, args.out, seed=args.seed)
    print(f"{args.model}: wrote predictions for {len(sample_ids)} test samples -> {args.out}")
    return 0


def cmd_resnet(args):
    records = read_manifest(args.manifest)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)) or ".", exist_ok=True)
    _, sample_ids, _, _ = resnet_finetune(
        records, args.out, phase1_epochs=args.phase1_epochs,
        phase2_epochs=args.phase2_epochs, batch_size=args.batch_size,
        seed=args.seed, phase2=not args.phase1_only)
    print(f"resnet152: wrote predictions for {len(sample_ids)} test samples -> {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="malharness",
                                     description="Deep-learning side of the malvis pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("acgan-train", help="train AC-GAN; saves models + test predictions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--size", type=int,
                   help="square image size; default: inferred from the manifest")
    p.add_argument("--noise-dim", type=int, default=1000)
    p.add_argument("--epochs", type=int, default=30,
                   help="discriminator saturates around 30; generators want 200")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--validity-weight", type=float, default=0.5,
                   help="weight of the validity loss; class loss gets 1 - this")
    p.add_argument("--checkpoints", action="store_true",
                   help="save generator checkpoints every 10 epochs")
    p.add_argument("--log-every", type=int, default=0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)

    p = sub.add_parser("dcgan-train", help="train unsupervised DC-GAN")
    p.add_argument("--manifest", required=True)
    p.add_argument("--size", type=int,
                   help="square image size; default: inferred from the manifest")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--log-every", type=int, default=0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)

    p = sub.add_parser("generate-fakes", help="sample a trained generator into a fake corpus")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--per-family", type=int, default=10)
    p.add_argument("--families", help="comma list; defaults to the trained families")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)

    p = sub.add_parser("baseline", help="SVM / XGBoost / RBM baseline predictions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", choices=("svm", "xgboost", "rbm"), required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True, help="predictions JSONL path")

    p = sub.add_parser("resnet", help="fine-tune pre-trained ResNet152")
    p.add_argument("--manifest", required=True)
    p.add_argument("--phase1-epochs", type=int, default=3)
    p.add_argument("--phase2-epochs", type=int, default=2)
    p.add_argument("--phase1-only", action="store_true")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True, help="predictions JSONL path")

    return parser


COMMANDS = {
    "acgan-train": cmd_acgan_train,
    "dcgan-train": cmd_dcgan_train,
    "generate-fakes": cmd_generate_fakes,
    "baseline": cmd_baseline,
    "resnet": cmd_resnet,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except MissingDependencyError as exc:
        print(f"environment error: {exc}", file=sys.stderr)
        return 3
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
