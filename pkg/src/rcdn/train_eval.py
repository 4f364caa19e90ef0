"""Training loop, evaluation, and the cross-domain generalization protocol:
per-domain accuracy, the train x test accuracy matrix, and the summary
statistics (in-domain average, cross average, gap, ratio).
"""

import csv
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import data as data_mod
from .autodiff import Adam, Tape, Tensor, backward
from .errors import NanAbortError, NumericsError, ValidationError
from .losses import BatchPartition, total_loss
from .model import ModelConfig, model_init, save_checkpoint
from .spectral import spectral_preprocess

TRAIN_DOMAINS = ("FE", "I2I", "T2I")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_every: int = 0          # 0 disables mid-training eval logging
    checkpoint_path: str = ""
    log_path: str = ""
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    dataset: "data_mod.DatasetSpec" = field(default_factory=lambda: data_mod.DatasetSpec())

    def validate(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_size < 4 or self.batch_size % 2:
            raise ValidationError("batch_size must be even and >= 4")
        self.model.validate()
        self.dataset.validate()
        return self


@dataclass
class ResultMatrix:
    """Rows = training domain, columns = testing domain, cells = accuracy."""

    domains: tuple
    cells: np.ndarray  # (3, 3) in [0, 1]


@dataclass
class GeneralizationSummary:
    in_domain_avg: float
    cross_avg: float
    gap: float
    ratio: float


@dataclass
class EvalResult:
    accuracy: float
    tp: int
    tn: int
    fp: int
    fn: int
    records: list  # per-sample dicts: id, domain, label, score, prediction

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn


# spectral maps are a fixed transform of the stored images; cache per split
_spectral_cache = {}


def _split_arrays(root, domain, split):
    """(images NCHW, spectral NCHW, ids) for one domain/split, cached."""
    key = (os.path.abspath(root), domain, split)
    if key not in _spectral_cache:
        samples = data_mod.load_split(root, domain, split)
        images = np.stack([s.pixels for s in samples]).transpose(0, 3, 1, 2)
        spectral = np.stack([spectral_preprocess(s.pixels).data for s in samples]) \
            .transpose(0, 3, 1, 2)
        ids = np.array([s.id for s in samples])
        _spectral_cache[key] = (images, spectral, ids)
    return _spectral_cache[key]


def clear_cache():
    _spectral_cache.clear()


def fit_arrays(images, spectral, labels, cfg):
    """Core loop over in-memory arrays; returns (model, per-epoch trace).

    ``images``/``spectral`` are NCHW float64, labels 0/1.  Deterministic per
    cfg.seed.  Raises NanAbortError with a diagnostic snapshot if the loss
    leaves the finite range.
    """
    cfg = cfg.validate()
    model = model_init(cfg.model)
    opt = Adam(model.parameters(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
               eps=cfg.adam_eps)
    labels = np.asarray(labels)
    index_samples = [_IndexSample(i, int(labels[i])) for i in range(len(labels))]
    trace = []
    for epoch in range(cfg.epochs):
        batches = data_mod.stratified_batches(index_samples, cfg.batch_size,
                                              seed=_epoch_seed(cfg.seed, epoch))
        stats = _run_epoch(model, opt, batches,
                           lambda idxs: (images[idxs], spectral[idxs], labels[idxs]),
                           cfg, epoch)
        stats["epoch"] = epoch
        trace.append(stats)
    return model, trace


class _IndexSample:
    """Lightweight stand-in so stratified_batches can shuffle array indices."""

    __slots__ = ("index", "label")

    def __init__(self, index, label):
        self.index = index
        self.label = label


def _epoch_seed(seed, epoch):
    return (seed * 1_000_003 + epoch) % (2 ** 31)


def _run_epoch(model, opt, batches, fetch, cfg, epoch):
    mcfg = cfg.model
    sums = {"l_cls": 0.0, "l_center": 0.0, "l_sep": 0.0, "total": 0.0}
    d_real, d_fake = [], []
    max_norm_dev = 0.0
    for b, batch in enumerate(batches):
        idxs = np.array([s.index for s in batch])
        imgs, specs, labs = fetch(idxs)
        opt.zero_grad()
        try:
            with Tape() as tape:
                emb, logits = model.embed(Tensor(imgs), Tensor(specs), training=True)
                dist = model.distance_to_center(emb.zhat)
                part = BatchPartition.from_labels(labs)
                breakdown = total_loss(logits, labs, dist, part,
                                       mcfg.lambda_c, mcfg.lambda_s, mcfg.margin)
            backward(breakdown.total, tape)
            opt.step()
        except NumericsError as exc:
            raise NanAbortError(f"numerical failure: {exc}", epoch=epoch,
                                batch_index=b,
                                snapshot={"sample_indices": idxs.tolist()}) from exc
        sums["l_cls"] += breakdown.l_cls.item()
        sums["l_center"] += breakdown.l_center.item()
        sums["l_sep"] += breakdown.l_sep.item()
        sums["total"] += breakdown.total.item()
        norms = np.linalg.norm(emb.zhat.data, axis=1)
        max_norm_dev = max(max_norm_dev, float(np.abs(norms - 1.0).max()))
        dd = dist.data
        d_real.extend(dd[labs == 0])
        d_fake.extend(dd[labs == 1])
    n = max(len(batches), 1)
    return {
        "l_cls": sums["l_cls"] / n,
        "l_center": sums["l_center"] / n,
        "l_sep": sums["l_sep"] / n,
        "total": sums["total"] / n,
        "mean_d_real": float(np.mean(d_real)) if d_real else float("nan"),
        "mean_d_fake": float(np.mean(d_fake)) if d_fake else float("nan"),
        "max_norm_dev": max_norm_dev,
    }


def _predict_arrays(model, images, spectral, labels, chunk=64):
    preds = np.empty(len(labels), dtype=int)
    scores = np.empty(len(labels))
    for lo in range(0, len(labels), chunk):
        hi = lo + chunk
        p, s = model.predict(Tensor(images[lo:hi]), Tensor(spectral[lo:hi]))
        preds[lo:hi] = p
        scores[lo:hi] = s
    return preds, scores


def train(cfg, dataset_root, train_domain):
    """Train one detector on REAL vs ``train_domain`` fakes.

    Returns (model, trace).  The trace is one dict per epoch with loss-term
    means, mean real/fake distances to the center, the worst unit-norm
    deviation of the embeddings, and (final epoch) training accuracy.
    """
    cfg = cfg.validate()
    if train_domain not in TRAIN_DOMAINS:
        raise ValidationError(f"train_domain must be one of {TRAIN_DOMAINS}")
    img_r, spec_r, _ = _split_arrays(dataset_root, "REAL", "train")
    img_f, spec_f, _ = _split_arrays(dataset_root, train_domain, "train")
    images = np.concatenate([img_r, img_f])
    spectral = np.concatenate([spec_r, spec_f])
    labels = np.concatenate([np.zeros(len(img_r), dtype=int),
                             np.ones(len(img_f), dtype=int)])
    model, trace = fit_arrays(images, spectral, labels, cfg)

    preds, _ = _predict_arrays(model, images, spectral, labels)
    trace[-1]["train_accuracy"] = float((preds == labels).mean())

    if cfg.log_path:
        with open(cfg.log_path, "w") as fh:
            for rec in trace:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    if cfg.checkpoint_path:
        save_checkpoint(model, cfg.checkpoint_path)
    return model, trace


def evaluate(model, dataset_root, test_domain, split="test"):
    """Accuracy and confusion counts over REAL + ``test_domain`` fakes."""
    img_r, spec_r, ids_r = _split_arrays(dataset_root, "REAL", split)
    img_f, spec_f, ids_f = _split_arrays(dataset_root, test_domain, split)
    if len(img_r) == 0 or len(img_f) == 0:
        raise ValidationError("empty test set")
    images = np.concatenate([img_r, img_f])
    spectral = np.concatenate([spec_r, spec_f])
    labels = np.concatenate([np.zeros(len(img_r), dtype=int),
                             np.ones(len(img_f), dtype=int)])
    domains = ["REAL"] * len(img_r) + [test_domain] * len(img_f)
    ids = np.concatenate([ids_r, ids_f])
    preds, scores = _predict_arrays(model, images, spectral, labels)
    tp = int(((preds == 1) & (labels == 1)).sum())
    tn = int(((preds == 0) & (labels == 0)).sum())
    fp = int(((preds == 1) & (labels == 0)).sum())
    fn = int(((preds == 0) & (labels == 1)).sum())
    records = [
        {"id": int(ids[i]), "domain": domains[i], "label": int(labels[i]),
         "score": float(scores[i]), "prediction": int(preds[i])}
        for i in range(len(labels))
    ]
    return EvalResult(accuracy=(tp + tn) / len(labels), tp=tp, tn=tn, fp=fp, fn=fn,
                      records=records)


def cross_matrix(models, dataset_root):
    """3x3 accuracy grid from one trained model per training domain.

    ``models``: mapping train domain -> RcdnModel.  Diagonal cells are the
    in-domain evaluations.  Also returns the per-cell EvalResults.
    """
    cells = np.zeros((3, 3))
    evals = {}
    for i, train_domain in enumerate(TRAIN_DOMAINS):
        model = models[train_domain]
        for j, test_domain in enumerate(TRAIN_DOMAINS):
            res = evaluate(model, dataset_root, test_domain)
            cells[i, j] = res.accuracy
            evals[(train_domain, test_domain)] = res
    return ResultMatrix(domains=TRAIN_DOMAINS, cells=cells), evals


def summarize(matrix):
    """In-domain average (diagonal mean), cross average (off-diagonal mean),
    gap = in_domain - cross, ratio = cross / in_domain."""
    cells = np.asarray(matrix.cells, dtype=np.float64)
    if cells.shape != (3, 3):
        raise ValidationError(f"expected a 3x3 matrix, got {cells.shape}")
    diag = np.diagonal(cells)
    off = cells[~np.eye(3, dtype=bool)]
    in_domain = float(diag.mean())
    cross = float(off.mean())
    if in_domain == 0.0:
        raise ValidationError("ratio undefined: in-domain average is zero")
    return GeneralizationSummary(in_domain_avg=in_domain, cross_avg=cross,
                                 gap=in_domain - cross, ratio=cross / in_domain)


def summary_from_fixture(diagonal, off_diagonal):
    """Summary for a result grid given as diagonal + row-major off-diagonals."""
    cells = np.zeros((3, 3))
    it = iter(off_diagonal)
    for i in range(3):
        for j in range(3):
            cells[i, j] = diagonal[i] if i == j else next(it)
    return summarize(ResultMatrix(domains=TRAIN_DOMAINS, cells=cells))


def matrix_markdown(matrix, summary):
    """Markdown tables mirroring the published result layout."""
    lines = ["| Train \\ Test | " + " | ".join(matrix.domains) + " | Cross Avg |",
             "|---" * 5 + "|"]
    for i, d in enumerate(matrix.domains):
        row_cells = []
        off = []
        for j in range(3):
            if i == j:
                row_cells.append("---")
            else:
                row_cells.append(f"{matrix.cells[i, j]:.4f}")
                off.append(matrix.cells[i, j])
        lines.append(f"| {d} | " + " | ".join(row_cells) +
                     f" | {np.mean(off):.4f} |")
    lines += [
        "",
        "| In-domain | Cross Avg | Gap | Ratio |",
        "|---|---|---|---|",
        f"| {summary.in_domain_avg:.4f} | {summary.cross_avg:.4f} "
        f"| {summary.gap:.4f} | {summary.ratio:.3f} |",
    ]
    return "\n".join(lines) + "\n"


def report(matrix, summary, out_dir, predictions=None, extra=None):
    """Emit matrix.csv, summary.json, report.md, and predictions.csv.

    ``extra`` (e.g. the loss weights of the run) is merged into summary.json
    under a "config" key.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "matrix.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["train\\test", *matrix.domains])
            for i, d in enumerate(matrix.domains):
                writer.writerow([d, *(f"{matrix.cells[i, j]:.4f}" for j in range(3))])
        payload = asdict(summary)
        if extra:
            payload["config"] = extra
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        with open(os.path.join(out_dir, "report.md"), "w") as fh:
            fh.write(matrix_markdown(matrix, summary))
        if predictions is not None:
            with open(os.path.join(out_dir, "predictions.csv"), "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["id", "domain", "label", "score", "prediction"])
                for rec in predictions:
                    writer.writerow([rec["id"], rec["domain"], rec["label"],
                                     f"{rec['score']:.6f}", rec["prediction"]])
    except OSError as exc:
        raise OSError(f"failed writing report under {out_dir}: {exc}") from exc


def read_matrix_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    domains = tuple(rows[0][1:])
    cells = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
    return ResultMatrix(domains=domains, cells=cells)
