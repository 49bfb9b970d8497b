"""Emotion-strength annotation with per-emotion linear ranking SVMs.

For each non-neutral emotion a linear ranking function is trained on
(emotional, neutral) feature pairs with the objective

    J(w) = 0.5 * ||w||^2 + C * sum_pairs max(0, 1 - w.(x_strong - x_weak))

over per-dimension standardized features. Rank scores are min-max
normalized within each emotion to [0, 1] strengths; neutral utterances
are always assigned strength 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .corpusio import (
    AnnotatedRecord,
    EMOTIONS,
    ModelArtifact,
    UtteranceRecord,
)

DEFAULT_C = 1.0
DEFAULT_EPOCHS = 200
DEFAULT_MAX_PAIRS = 100000
STEP_ETA0 = 0.1
STD_FLOOR = 1e-8
MAX_BACKTRACKS = 60


class OrderedPair(NamedTuple):
    """Indices of a (stronger, weaker) utterance pair."""

    stronger: int
    weaker: int


class StrengthAnnotation(NamedTuple):
    utterance_id: str
    emotion: str
    strength: float


@dataclass
class RankModel:
    """Linear ranking function with its standardization statistics."""

    emotion: str
    w: np.ndarray
    feat_mean: np.ndarray
    feat_std: np.ndarray
    c: float
    epochs: int
    seed: int
    objective: float = float("nan")
    pair_accuracy: float = float("nan")
    objective_trace: list[float] = field(default_factory=list, repr=False)


def build_pairs(
    features: np.ndarray,
    labels: Sequence[str],
    emotion: str,
    max_pairs: int = DEFAULT_MAX_PAIRS,
    seed: int = 0,
) -> list[OrderedPair]:
    """All (emotional, neutral) cross pairs for one target emotion.

    When the cross product exceeds max_pairs, a uniform subsample is
    drawn with the given seed. Deterministic.
    """
    if emotion == "neutral":
        raise ValueError("cannot build pairs for the neutral class")
    strong_idx = [i for i, lab in enumerate(labels) if lab == emotion]
    weak_idx = [i for i, lab in enumerate(labels) if lab == "neutral"]
    if not strong_idx:
        raise ValueError(f"no utterances labelled {emotion!r}")
    if not weak_idx:
        raise ValueError("no neutral utterances to pair against")
    pairs = [OrderedPair(s, w) for s in strong_idx for w in weak_idx]
    if len(pairs) > max_pairs:
        rng = np.random.default_rng(seed)
        keep = rng.choice(len(pairs), size=max_pairs, replace=False)
        pairs = [pairs[i] for i in sorted(keep)]
    return pairs


def _objective(w: np.ndarray, diffs: np.ndarray, c: float) -> float:
    hinge = np.maximum(0.0, 1.0 - diffs @ w)
    return 0.5 * float(w @ w) + c * float(hinge.sum())


def train_ranksvm(
    pairs: Sequence[OrderedPair],
    features: np.ndarray,
    c: float = DEFAULT_C,
    epochs: int = DEFAULT_EPOCHS,
    seed: int = 0,
    emotion: str = "",
) -> RankModel:
    """Train a linear RankSVM by deterministic subgradient descent.

    Features are standardized per dimension over the utterances
    referenced by the pairs (std floored at 1e-8). Each epoch takes one
    full-batch subgradient step with step size eta_t = 0.1/(1 + t/T),
    T = epochs/2, halving the step until the objective does not
    increase; the best iterate seen is returned. The recorded objective
    trace is therefore non-increasing.
    """
    if len(pairs) == 0:
        raise ValueError("empty pair set")
    X = np.asarray(features, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature values")
    used = sorted({i for p in pairs for i in (p.stronger, p.weaker)})
    if min(used) < 0 or max(used) >= len(X):
        raise ValueError("pair index out of range")
    mean = X[used].mean(axis=0)
    std = np.maximum(X[used].std(axis=0), STD_FLOOR)
    Z = (X - mean) / std
    strong = np.fromiter((p.stronger for p in pairs), dtype=np.int64)
    weak = np.fromiter((p.weaker for p in pairs), dtype=np.int64)
    diffs = Z[strong] - Z[weak]

    dim = X.shape[1]
    w = np.zeros(dim)
    obj = _objective(w, diffs, c)
    best_w, best_obj = w.copy(), obj
    trace = [obj]
    t_half = max(1.0, epochs / 2.0)
    for t in range(epochs):
        eta = STEP_ETA0 / (1.0 + t / t_half)
        margins = 1.0 - diffs @ w
        grad = w - c * diffs[margins > 0.0].sum(axis=0)
        step = eta
        w_new, obj_new = w, obj
        for _ in range(MAX_BACKTRACKS):
            candidate = w - step * grad
            candidate_obj = _objective(candidate, diffs, c)
            if candidate_obj <= obj:
                w_new, obj_new = candidate, candidate_obj
                break
            step *= 0.5
        w, obj = w_new, obj_new
        if obj < best_obj:
            best_obj, best_w = obj, w.copy()
        trace.append(best_obj)

    accuracy = float(np.mean(diffs @ best_w > 0.0))
    return RankModel(
        emotion=emotion, w=best_w, feat_mean=mean, feat_std=std,
        c=float(c), epochs=int(epochs), seed=int(seed),
        objective=best_obj, pair_accuracy=accuracy, objective_trace=trace,
    )


def rank_score(model: RankModel, x: np.ndarray) -> float:
    """Rank of one feature vector: w . (x - mean) / std."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.w.shape:
        raise ValueError(
            f"feature dimension mismatch: got {x.shape}, expected {model.w.shape}"
        )
    return float(model.w @ ((x - model.feat_mean) / model.feat_std))


def rank_scores(model: RankModel, features: np.ndarray) -> np.ndarray:
    """Rank scores for a feature matrix, one row per utterance."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.w):
        raise ValueError("feature matrix dimension mismatch")
    return ((X - model.feat_mean) / model.feat_std) @ model.w


def normalize_strengths(
    ids: Sequence[str],
    labels: Sequence[str],
    scores: Sequence[float],
    emotion: str,
) -> list[StrengthAnnotation]:
    """Min-max map one emotion's rank scores to [0, 1] strengths.

    The min and max are taken over the target emotion's utterances; when
    they coincide every strength is 0.5. Neutral utterances are assigned
    strength 0 regardless of score.
    """
    if len(ids) != len(labels) or len(ids) != len(scores):
        raise ValueError("ids, labels, and scores must have equal lengths")
    if len(ids) == 0:
        raise ValueError("empty score list")
    emo_scores = [s for s, lab in zip(scores, labels) if lab == emotion]
    if not emo_scores:
        raise ValueError(f"no utterances labelled {emotion!r}")
    lo, hi = min(emo_scores), max(emo_scores)
    out = []
    for uid, lab, score in zip(ids, labels, scores):
        if lab == "neutral":
            out.append(StrengthAnnotation(uid, lab, 0.0))
        elif lab == emotion:
            if hi == lo:
                strength = 0.5
            else:
                strength = (score - lo) / (hi - lo)
            out.append(StrengthAnnotation(uid, lab, float(strength)))
        else:
            raise ValueError(
                f"utterance {uid!r} has label {lab!r}, expected "
                f"{emotion!r} or neutral"
            )
    return out


def annotate_corpus(
    records: Sequence[UtteranceRecord],
    features: dict[str, np.ndarray],
    c: float = DEFAULT_C,
    epochs: int = DEFAULT_EPOCHS,
    max_pairs: int = DEFAULT_MAX_PAIRS,
    seed: int = 0,
) -> tuple[list[AnnotatedRecord], dict[str, RankModel]]:
    """Annotate every utterance with an emotion strength.

    Trains one RankSVM per non-neutral emotion present in the corpus;
    each emotional utterance is scored by its own emotion's model and
    min-max normalized within that emotion. Neutral strengths are 0.
    """
    missing = [r.id for r in records if r.id not in features]
    if missing:
        raise ValueError(f"missing features for ids: {missing[:5]}")
    labels = [r.emotion for r in records]
    if "neutral" not in labels:
        raise ValueError("corpus has no neutral utterances")
    X = np.vstack([features[r.id] for r in records])

    strengths: dict[str, float] = {r.id: 0.0 for r in records}
    models: dict[str, RankModel] = {}
    for emotion in EMOTIONS:
        if emotion == "neutral" or emotion not in labels:
            continue
        pairs = build_pairs(X, labels, emotion, max_pairs=max_pairs, seed=seed)
        model = train_ranksvm(pairs, X, c=c, epochs=epochs, seed=seed,
                              emotion=emotion)
        models[emotion] = model
        idx = [i for i, lab in enumerate(labels) if lab == emotion]
        scores = rank_scores(model, X[idx])
        annotations = normalize_strengths(
            [records[i].id for i in idx], [emotion] * len(idx),
            scores.tolist(), emotion,
        )
        for ann in annotations:
            strengths[ann.utterance_id] = ann.strength

    annotated = [
        AnnotatedRecord(
            id=r.id, text=r.text, emotion=r.emotion, audio_path=r.audio_path,
            split=r.split, strength=strengths[r.id],
        )
        for r in records
    ]
    return annotated, models


def rank_model_to_artifact(model: RankModel) -> ModelArtifact:
    """Package a rank model for persistence."""
    return ModelArtifact(
        kind="rank",
        tensors={
            "w": model.w,
            "feat_mean": model.feat_mean,
            "feat_std": model.feat_std,
        },
        metadata={
            "emotion": model.emotion,
            "c": repr(model.c),
            "epochs": str(model.epochs),
            "seed": str(model.seed),
            "objective": repr(model.objective),
            "pair_accuracy": repr(model.pair_accuracy),
        },
    )


def rank_model_from_artifact(artifact: ModelArtifact) -> RankModel:
    if artifact.kind != "rank":
        raise ValueError(f"expected a rank artifact, got {artifact.kind!r}")
    meta = artifact.metadata
    return RankModel(
        emotion=meta.get("emotion", ""),
        w=artifact.tensors["w"],
        feat_mean=artifact.tensors["feat_mean"],
        feat_std=artifact.tensors["feat_std"],
        c=float(meta.get("c", DEFAULT_C)),
        epochs=int(meta.get("epochs", DEFAULT_EPOCHS)),
        seed=int(meta.get("seed", 0)),
        objective=float(meta.get("objective", "nan")),
        pair_accuracy=float(meta.get("pair_accuracy", "nan")),
    )
