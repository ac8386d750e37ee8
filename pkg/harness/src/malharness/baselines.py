"""Classical baseline adapters: SVM, XGBoost, and the RBM stack.

Each adapter trains on the manifest's train split with the tuned
hyperparameters (SVM: rbf kernel, C=1; XGBoost: depth 6, learning rate
0.02, 600 estimators) and writes test-split predictions in the
pipeline's exchange format.  The RBM stack is autoencoder -> Bernoulli
RBM -> logistic regression, with inputs scaled to [0, 1] as that keeps
RBM training stable.
"""

import numpy as np
import torch
import torch.nn as nn

from .errors import MissingDependencyError
from .io import label_map_for, load_images, write_predictions

SVM_KERNEL = "rbf"
SVM_C = 1.0
XGB_MAX_DEPTH = 6
XGB_LEARNING_RATE = 0.02
XGB_N_ESTIMATORS = 600


def _split_features(manifest_records, flat=True):
    label_map = label_map_for(manifest_records)
    out = {}
    for split in ("train", "test"):
        recs = [r for r in manifest_records if r.get("split") == split and r.get("image_path")]
        if not recs:
            raise ValueError(f"manifest has no {split!r} records with images; "
                             "run the pipeline's dataset stage first")
        images = load_images(recs)  # [0, 1]
        X = images.reshape(images.shape[0], -1) if flat else images
        y = np.array([label_map[r["family"]] for r in recs])
        out[split] = (recs, X, y)
    return out, label_map


def _standardize(train_X, test_X):
    mu = train_X.mean(axis=0)
    sigma = train_X.std(axis=0)
    sigma[sigma == 0] = 1.0
    return (train_X - mu) / sigma, (test_X - mu) / sigma


def _fit_svm(X_train, y_train, seed):
    from sklearn.svm import SVC

    model = SVC(kernel=SVM_KERNEL, C=SVM_C, probability=True, random_state=seed)
    model.fit(X_train, y_train)
    return model


def _fit_xgboost(X_train, y_train, seed):
    try:
        from xgboost import XGBClassifier
    except ImportError as exc:
        raise MissingDependencyError(
            "xgboost is not installed; `pip install xgboost` to enable this "
            "adapter") from exc
    model = XGBClassifier(max_depth=XGB_MAX_DEPTH, learning_rate=XGB_LEARNING_RATE,
                          n_estimators=XGB_N_ESTIMATORS, random_state=seed)
    model.fit(X_train, y_train)
    return model


class _DenoisingAutoencoder(nn.Module):
    """Linear bottleneck autoencoder; its reconstruction is the denoised image."""

    def __init__(self, n_features, hidden=256):
        super().__init__()
        self.encoder = nn.Sequential(nn.Linear(n_features, hidden), nn.ReLU(inplace=True))
        self.decoder = nn.Sequential(nn.Linear(hidden, n_features), nn.Sigmoid())

    def forward(self, x):
        return self.decoder(self.encoder(x))


class _RbmStack:
    """Autoencoder front end, Bernoulli RBM features, logistic regression."""

    def __init__(self, seed, ae_hidden=256, ae_epochs=5, rbm_components=128,
                 rbm_iter=10):
        self.seed = seed
        self.ae_hidden = ae_hidden
        self.ae_epochs = ae_epochs
        self.rbm_components = rbm_components
        self.rbm_iter = rbm_iter

    def fit(self, X_train, y_train):
        from sklearn.linear_model import LogisticRegression
        from sklearn.neural_network import BernoulliRBM

        torch.manual_seed(self.seed)
        self.ae = _DenoisingAutoencoder(X_train.shape[1], self.ae_hidden)
        opt = torch.optim.Adam(self.ae.parameters(), lr=1e-3)
        loss_fn = nn.MSELoss()
        X = torch.from_numpy(X_train.astype(np.float32))
        for _ in range(self.ae_epochs):
            for start in range(0, X.shape[0], 64):
                batch = X[start : start + 64]
                opt.zero_grad()
                loss = loss_fn(self.ae(batch), batch)
                loss.backward()
                opt.step()
        self.ae.eval()
        self.rbm = BernoulliRBM(n_components=self.rbm_components,
                                n_iter=self.rbm_iter, random_state=self.seed)
        hidden = self.rbm.fit_transform(self._denoise(X_train))
        self.lr = LogisticRegression(max_iter=500, random_state=self.seed)
        self.lr.fit(hidden, y_train)
        return self

    def _denoise(self, X):
        with torch.no_grad():
            out = self.ae(torch.from_numpy(X.astype(np.float32))).numpy()
        return np.clip(out, 0.0, 1.0)

    def predict_proba(self, X):
        return self.lr.predict_proba(self.rbm.transform(self._denoise(X)))


def baseline_adapter(manifest_records, model, out_path, seed=0):
    """Train one baseline and write test-split predictions to out_path.

    model is one of "svm", "xgboost", "rbm".  Returns the rows written.
    """
    splits, label_map = _split_features(manifest_records)
    _, X_train, y_train = splits["train"]
    test_recs, X_test, _ = splits["test"]

    if model == "svm":
        X_train, X_test = _standardize(X_train, X_test)
        fitted = _fit_svm(X_train, y_train, seed)
        probs = fitted.predict_proba(X_test)
    elif model == "xgboost":
        fitted = _fit_xgboost(X_train, y_train, seed)  # [0,1] inputs as-is
        probs = fitted.predict_proba(X_test)
    elif model == "rbm":
        fitted = _RbmStack(seed).fit(X_train, y_train)
        probs = fitted.predict_proba(X_test)
    else:
        raise ValueError(f"unknown baseline {model!r}")

    # probability columns follow the fitted class order; expand to all classes
    class_order = getattr(fitted, "classes_", None)
    if class_order is None:
        class_order = fitted.lr.classes_
    full = np.zeros((probs.shape[0], len(label_map)))
    for col, cls in enumerate(class_order):
        full[:, int(cls)] = probs[:, col]
    labels = full.argmax(axis=1)
    write_predictions(out_path, [r["sample_id"] for r in test_recs], labels, full)
    return [r["sample_id"] for r in test_recs], labels, full
