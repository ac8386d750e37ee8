"""ResNet152 transfer learning with a two-phase schedule.

Phase 1 trains only a new dense head on top of the frozen ImageNet
base; phase 2 unfreezes the deepest half of the base's top-level
layers and continues.  The pre-trained weights are an external
artifact fetched at runtime; when they cannot be obtained the adapter
raises MissingDependencyError with a remediation hint.
"""

import numpy as np
import torch
import torch.nn as nn

from .errors import MissingDependencyError
from .io import label_map_for, load_images, write_predictions


def _load_pretrained_base():
    import torchvision

    try:
        weights = torchvision.models.ResNet152_Weights.IMAGENET1K_V2
        return torchvision.models.resnet152(weights=weights)
    except Exception as exc:
        raise MissingDependencyError(
            "pre-trained ResNet152 weights are unavailable; allow network "
            "access to download.pytorch.org or pre-populate TORCH_HOME with "
            "resnet152 weights") from exc


def resnet_finetune(manifest_records, out_path, phase1_epochs=3, phase2_epochs=2,
                    batch_size=16, lr=1e-3, seed=0, phase2=True):
    """Fine-tune on the manifest's train split; write test predictions.

    Returns (model, sample_ids, labels, probabilities).
    """
    label_map = label_map_for(manifest_records)
    n_classes = len(label_map)
    model = _load_pretrained_base()
    torch.manual_seed(seed)

    for param in model.parameters():
        param.requires_grad = False
    model.fc = nn.Linear(model.fc.in_features, n_classes)  # trainable head

    train_recs = [r for r in manifest_records if r.get("split") == "train"]
    test_recs = [r for r in manifest_records if r.get("split") == "test"]
    if not train_recs or not test_recs:
        raise ValueError("manifest needs train and test splits")

    def tensor_for(recs):
        images = load_images(recs)
        if images.shape[3] == 1:
            images = np.repeat(images, 3, axis=3)
        x = torch.from_numpy(images.transpose(0, 3, 1, 2))
        mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
        std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)
        y = torch.tensor([label_map[r["family"]] for r in recs])
        return (x - mean) / std, y

    X_train, y_train = tensor_for(train_recs)
    X_test, _ = tensor_for(test_recs)
    ce = nn.CrossEntropyLoss()

    def train_phase(epochs):
        params = [p for p in model.parameters() if p.requires_grad]
        opt = torch.optim.Adam(params, lr=lr)
        model.train()
        rng = np.random.default_rng(seed)
        for _ in range(epochs):
            perm = rng.permutation(X_train.shape[0])
            for start in range(0, X_train.shape[0], batch_size):
                idx = perm[start : start + batch_size]
                opt.zero_grad()
                loss = ce(model(X_train[idx]), y_train[idx])
                loss.backward()
                opt.step()

    train_phase(phase1_epochs)

    if phase2:
        # unfreeze the deepest half of the base's top-level layers
        layers = [model.conv1, model.bn1, model.layer1, model.layer2,
                  model.layer3, model.layer4]
        for layer in layers[len(layers) // 2 :]:
            for param in layer.parameters():
                param.requires_grad = True
        train_phase(phase2_epochs)

    model.eval()
    with torch.no_grad():
        probs = torch.softmax(model(X_test), dim=1).numpy()
    labels = probs.argmax(axis=1)
    sample_ids = [r["sample_id"] for r in test_recs]
    write_predictions(out_path, sample_ids, labels, probs)
    return model, sample_ids, labels, probs
