"""Joint emotion predictor: two fully-connected heads on frozen text
embeddings, one for the 4-way emotion class and one for the scalar
emotion strength.

Both heads share the 768-dim embedding input and use a single 256-unit
ReLU hidden layer; the class head ends in a softmax over (neutral,
happiness, sadness, anger) and the strength head in a linear scalar.
Training minimizes

    (strength_raw - target_strength)^2
        + lambda_cls * cross_entropy(probs, target_class)

averaged over a batch, with mini-batch gradient descent and momentum.
The embedding backbone is consumed through a provider and never updated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpusio import AnnotatedRecord, EMOTIONS, ModelArtifact

EMBED_DIM = 768
HIDDEN_DIM = 256
NUM_CLASSES = len(EMOTIONS)
PROB_FLOOR = 1e-12

PARAM_SHAPES = {
    "W1c": (HIDDEN_DIM, EMBED_DIM), "b1c": (HIDDEN_DIM,),
    "W2c": (NUM_CLASSES, HIDDEN_DIM), "b2c": (NUM_CLASSES,),
    "W1s": (HIDDEN_DIM, EMBED_DIM), "b1s": (HIDDEN_DIM,),
    "w2s": (1, HIDDEN_DIM), "b2s": (1,),
}


@dataclass
class PredictorParams:
    """Weights of the class head (W1c, b1c, W2c, b2c) and strength head
    (W1s, b1s, w2s, b2s)."""

    W1c: np.ndarray
    b1c: np.ndarray
    W2c: np.ndarray
    b2c: np.ndarray
    W1s: np.ndarray
    b1s: np.ndarray
    w2s: np.ndarray
    b2s: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_SHAPES}

    def validate(self) -> None:
        for name, shape in PARAM_SHAPES.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")

    def copy(self) -> "PredictorParams":
        return PredictorParams(**{k: v.copy() for k, v in self.as_dict().items()})


@dataclass
class EmotionPrediction:
    """Class distribution and strength for one text."""

    probs: np.ndarray
    label: str
    strength_raw: float
    strength: float

    @property
    def class_index(self) -> int:
        return EMOTIONS.index(self.label)


@dataclass
class TrainConfig:
    lambda_cls: float = 0.01
    learning_rate: float = 0.05
    batch_size: int = 16
    epochs: int = 200
    seed: int = 0
    init_scale: float = 1.0
    momentum: float = 0.9
    lr_decay: float = 0.999

    def validate(self) -> None:
        if self.lambda_cls < 0:
            raise ValueError("lambda_cls must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be at least 1")


def init_params(seed: int = 0, init_scale: float = 1.0) -> PredictorParams:
    """Uniform [-s/sqrt(fan_in), s/sqrt(fan_in)] weights, zero biases.

    Weight tensors are drawn in a fixed order, so parameters are a pure
    function of (seed, init_scale).
    """
    if init_scale < 0:
        raise ValueError("init_scale must be nonnegative")
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in PARAM_SHAPES.items():
        if name.startswith("b"):
            arrays[name] = np.zeros(shape)
        else:
            limit = init_scale / np.sqrt(shape[1])
            arrays[name] = rng.uniform(-limit, limit, size=shape)
    return PredictorParams(**arrays)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_batch(params: PredictorParams, X: np.ndarray):
    """Returns (pre-ReLU class hidden, probs, pre-ReLU strength hidden,
    raw strengths) for a batch of embeddings."""
    h_cls = X @ params.W1c.T + params.b1c
    probs = _softmax_rows(np.maximum(h_cls, 0.0) @ params.W2c.T + params.b2c)
    h_str = X @ params.W1s.T + params.b1s
    raw = np.maximum(h_str, 0.0) @ params.w2s.T + params.b2s
    return h_cls, probs, h_str, raw[:, 0]


def forward(params: PredictorParams, x: np.ndarray) -> EmotionPrediction:
    """Run both heads on one embedding.

    Softmax is computed with max subtraction; argmax ties break to the
    lowest class index; strength is the raw value clamped to [0, 1].
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (EMBED_DIM,):
        raise ValueError(f"embedding shape {x.shape}, expected ({EMBED_DIM},)")
    _, probs, _, raw = _forward_batch(params, x[None, :])
    probs = probs[0]
    raw_value = float(raw[0])
    return EmotionPrediction(
        probs=probs,
        label=EMOTIONS[int(np.argmax(probs))],
        strength_raw=raw_value,
        strength=float(np.clip(raw_value, 0.0, 1.0)),
    )


def loss(pred: EmotionPrediction, target_class: np.ndarray,
         target_strength: float, lambda_cls: float = 0.01) -> float:
    """Strength L2 plus lambda-weighted cross entropy for one example.

    The squared error uses the unclamped raw strength; the log is
    floored at probability 1e-12.
    """
    target_class = np.asarray(target_class, dtype=np.float64)
    if target_class.shape != (NUM_CLASSES,):
        raise ValueError("target_class must be a one-hot vector of length 4")
    ones = np.flatnonzero(target_class == 1.0)
    if len(ones) != 1 or target_class.sum() != 1.0:
        raise ValueError("target_class must be one-hot")
    if not (0.0 <= target_strength <= 1.0):
        raise ValueError("target_strength must lie in [0, 1]")
    ce = -np.log(max(float(pred.probs[ones[0]]), PROB_FLOOR))
    return float((pred.strength_raw - target_strength) ** 2 + lambda_cls * ce)


def gradients(
    params: PredictorParams,
    X: np.ndarray,
    class_idx: np.ndarray,
    strengths: np.ndarray,
    lambda_cls: float = 0.01,
) -> PredictorParams:
    """Mean gradient of the joint loss over a batch.

    The ReLU subgradient at exactly 0 is taken as 0.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    class_idx = np.asarray(class_idx, dtype=np.int64).ravel()
    strengths = np.asarray(strengths, dtype=np.float64).ravel()
    m = X.shape[0]
    if m == 0:
        raise ValueError("empty batch")
    if len(class_idx) != m or len(strengths) != m:
        raise ValueError("batch components must have equal lengths")

    h_cls, probs, h_str, raw = _forward_batch(params, X)
    a_cls = np.maximum(h_cls, 0.0)
    a_str = np.maximum(h_str, 0.0)

    d_logits = probs.copy()
    d_logits[np.arange(m), class_idx] -= 1.0
    d_logits *= lambda_cls / m
    gW2c = d_logits.T @ a_cls
    gb2c = d_logits.sum(axis=0)
    d_hidden_c = (d_logits @ params.W2c) * (h_cls > 0.0)
    gW1c = d_hidden_c.T @ X
    gb1c = d_hidden_c.sum(axis=0)

    d_raw = 2.0 * (raw - strengths) / m
    gw2s = (d_raw[:, None] * a_str).sum(axis=0)[None, :]
    gb2s = np.array([d_raw.sum()])
    d_hidden_s = (d_raw[:, None] * params.w2s) * (h_str > 0.0)
    gW1s = d_hidden_s.T @ X
    gb1s = d_hidden_s.sum(axis=0)

    return PredictorParams(W1c=gW1c, b1c=gb1c, W2c=gW2c, b2c=gb2c,
                           W1s=gW1s, b1s=gb1s, w2s=gw2s, b2s=gb2s)


def batch_loss(params: PredictorParams, X: np.ndarray, class_idx: np.ndarray,
               strengths: np.ndarray, lambda_cls: float = 0.01) -> float:
    """Mean joint loss over a batch (same floor rules as loss())."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    class_idx = np.asarray(class_idx, dtype=np.int64).ravel()
    strengths = np.asarray(strengths, dtype=np.float64).ravel()
    _, probs, _, raw = _forward_batch(params, X)
    picked = np.maximum(probs[np.arange(len(X)), class_idx], PROB_FLOOR)
    return float(np.mean((raw - strengths) ** 2)
                 + lambda_cls * np.mean(-np.log(picked)))


def train(
    records: Sequence[AnnotatedRecord],
    provider,
    config: TrainConfig | None = None,
) -> tuple[PredictorParams, list[float]]:
    """Train both heads on an annotated corpus.

    Embeds every text once up front (the backbone is frozen), then runs
    mini-batch gradient descent with momentum and per-epoch learning
    rate decay. Returns the final parameters and a non-increasing
    (best-so-far) loss trace whose first entry is the pre-training
    loss. Deterministic for fixed (seed, config, provider).
    """
    config = config or TrainConfig()
    config.validate()
    if not records:
        raise ValueError("empty corpus")
    texts = [r.text for r in records]
    X = np.asarray(provider.embed(texts), dtype=np.float64)
    if X.shape != (len(records), EMBED_DIM):
        raise ValueError(f"provider returned shape {X.shape}")
    class_idx = np.array([EMOTIONS.index(r.emotion) for r in records])
    strengths = np.array([r.strength for r in records])

    params = init_params(config.seed, config.init_scale)
    velocity = {k: np.zeros_like(v) for k, v in params.as_dict().items()}
    shuffle_rng = np.random.default_rng([config.seed, 1])
    n = len(records)
    lr = config.learning_rate
    best = batch_loss(params, X, class_idx, strengths, config.lambda_cls)
    trace: list[float] = [best]
    for _ in range(config.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            grads = gradients(params, X[idx], class_idx[idx], strengths[idx],
                              config.lambda_cls)
            for name, g in grads.as_dict().items():
                velocity[name] = config.momentum * velocity[name] - lr * g
                setattr(params, name, getattr(params, name) + velocity[name])
        lr *= config.lr_decay
        epoch_loss = batch_loss(params, X, class_idx, strengths,
                                config.lambda_cls)
        best = min(best, epoch_loss)
        trace.append(best)
    params.validate()
    return params, trace


def predict(
    texts: Sequence[str],
    params: PredictorParams,
    provider,
    mode: str = "single",
    context_window: int | None = None,
) -> list[EmotionPrediction]:
    """Predict per sentence, optionally with preceding-sentence context.

    In single mode each sentence is embedded alone. In paragraph mode
    sentence i is embedded as the space-joined concatenation of
    sentences max(0, i-window+1)..i (window=None means the whole
    preceding paragraph); one prediction is still emitted per sentence.
    """
    if not texts:
        raise ValueError("texts must be nonempty")
    if mode not in ("single", "paragraph"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "single":
        inputs = list(texts)
    else:
        window = len(texts) if context_window is None else int(context_window)
        if window < 1:
            raise ValueError("context_window must be at least 1")
        inputs = [" ".join(texts[max(0, i - window + 1):i + 1])
                  for i in range(len(texts))]
    X = np.asarray(provider.embed(inputs), dtype=np.float64)
    if X.shape != (len(inputs), EMBED_DIM):
        raise ValueError(f"provider returned shape {X.shape}")
    return [forward(params, X[i]) for i in range(len(inputs))]


# ---------------------------------------------------------------------------
# Evaluation


def _rankdata(values: np.ndarray) -> np.ndarray:
    """Ranks starting at 1, ties replaced by their average rank."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    i = 0
    sorted_values = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_values[j + 1] == sorted_values[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _spearman(a: np.ndarray, b: np.ndarray) -> float:
    ra, rb = _rankdata(a), _rankdata(b)
    sa, sb = ra.std(), rb.std()
    if sa == 0.0 or sb == 0.0:
        return 0.0
    return float(np.mean((ra - ra.mean()) * (rb - rb.mean())) / (sa * sb))


def _as_label_strength(item) -> tuple[str, float]:
    if isinstance(item, EmotionPrediction):
        return item.label, item.strength
    if isinstance(item, AnnotatedRecord):
        return item.emotion, item.strength
    label, strength = item
    return str(label), float(strength)


def evaluate(predictions: Sequence, references: Sequence) -> dict:
    """Classification and strength metrics against references.

    Accepts EmotionPrediction objects, AnnotatedRecord objects, or
    (label, strength) pairs on either side. Returns the 4x4 confusion
    matrix indexed [reference][prediction], per-class accuracies
    (diagonal over row sum; 0 for absent classes), macro accuracy (mean
    over classes with support), strength MSE, and Spearman rank
    correlation of strengths (0 when either side is constant).
    """
    if len(predictions) != len(references):
        raise ValueError(
            f"length mismatch: {len(predictions)} predictions vs "
            f"{len(references)} references"
        )
    if not predictions:
        raise ValueError("empty input")
    pred = [_as_label_strength(p) for p in predictions]
    ref = [_as_label_strength(r) for r in references]

    confusion = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    for (p_label, _), (r_label, _) in zip(pred, ref):
        confusion[EMOTIONS.index(r_label), EMOTIONS.index(p_label)] += 1
    support = confusion.sum(axis=1)
    per_class = np.where(support > 0, np.diag(confusion) / np.maximum(support, 1),
                         0.0)
    macro = float(per_class[support > 0].mean())

    p_strength = np.array([s for _, s in pred])
    r_strength = np.array([s for _, s in ref])
    return {
        "confusion_matrix": confusion.tolist(),
        "per_class_accuracy": per_class.tolist(),
        "macro_accuracy": macro,
        "strength_mse": float(np.mean((p_strength - r_strength) ** 2)),
        "strength_spearman": _spearman(p_strength, r_strength),
    }


# ---------------------------------------------------------------------------
# Serialization


def predictions_to_jsonl(ids: Sequence[str],
                         predictions: Sequence[EmotionPrediction]) -> str:
    """Line-delimited JSON: {"id", "probs", "class", "strength"}."""
    if len(ids) != len(predictions):
        raise ValueError("ids and predictions must have equal lengths")
    lines = []
    for uid, pred in zip(ids, predictions):
        lines.append(json.dumps({
            "id": uid,
            "probs": [float(p) for p in pred.probs],
            "class": pred.label,
            "strength": pred.strength,
        }))
    return "\n".join(lines) + ("\n" if lines else "")


def predictions_from_jsonl(text: str) -> list[tuple[str, EmotionPrediction]]:
    """Parse the predictions JSONL format back into objects."""
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: invalid JSON: {exc}") from exc
        probs = np.asarray(obj["probs"], dtype=np.float64)
        label = str(obj["class"])
        if label not in EMOTIONS:
            raise ValueError(f"line {lineno}: unknown class {label!r}")
        strength = float(obj["strength"])
        out.append((str(obj["id"]), EmotionPrediction(
            probs=probs, label=label, strength_raw=strength,
            strength=strength,
        )))
    return out


def params_to_artifact(params: PredictorParams,
                       metadata: dict[str, str] | None = None) -> ModelArtifact:
    params.validate()
    return ModelArtifact(kind="predictor", tensors=params.as_dict(),
                         metadata=dict(metadata or {}))


def params_from_artifact(artifact: ModelArtifact) -> PredictorParams:
    if artifact.kind != "predictor":
        raise ValueError(f"expected a predictor artifact, got {artifact.kind!r}")
    missing = set(PARAM_SHAPES) - set(artifact.tensors)
    if missing:
        raise ValueError(f"artifact missing tensors: {sorted(missing)}")
    params = PredictorParams(**{k: artifact.tensors[k] for k in PARAM_SHAPES})
    params.validate()
    return params
