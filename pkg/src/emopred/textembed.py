"""Text embedding providers.

The remote provider consumes a frozen pre-trained language model served
over HTTP: POST {endpoint}/embed with {"texts": [...]} returns
{"embeddings": [[...768 floats...], ...]}. The local provider is a
deterministic offline stand-in (seeded signed hashing of character
n-grams) for development and tests.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import requests

EMBED_DIM = 768
NGRAM_SIZES = (1, 2, 3)


class ProviderError(RuntimeError):
    """Embedding provider failure: network, protocol, or shape."""


@dataclass
class ProviderConfig:
    mode: str = "local"
    endpoint: str = ""
    timeout: float = 10.0
    seed: int = 0
    expected_dim: int = EMBED_DIM

    def validate(self) -> None:
        if self.mode not in ("remote", "local"):
            raise ValueError(f"unknown provider mode {self.mode!r}")
        if self.mode == "remote" and not self.endpoint:
            raise ValueError("remote mode requires an endpoint")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


def embed_local(texts: list[str], seed: int = 0,
                dim: int = EMBED_DIM) -> np.ndarray:
    """Deterministic hashed character n-gram embeddings, L2 normalized.

    Each 1..3-gram is hashed (keyed blake2b, so the layout depends only
    on the seed) to a bin and a sign; the empty string maps to the zero
    vector. Embeddings are independent of batch composition.
    """
    key = int(seed).to_bytes(8, "little", signed=True)
    out = np.zeros((len(texts), dim))
    for row, text in enumerate(texts):
        data = text.encode("utf-8")
        if not data:
            continue
        vec = out[row]
        for n in NGRAM_SIZES:
            for start in range(max(0, len(data) - n + 1)):
                digest = hashlib.blake2b(
                    data[start:start + n], key=key, digest_size=8
                ).digest()
                value = int.from_bytes(digest, "little")
                sign = 1.0 if value & 1 else -1.0
                vec[(value >> 1) % dim] += sign
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
    return out


def embed_remote(texts: list[str], config: ProviderConfig) -> np.ndarray:
    """Fetch embeddings from the remote service, order preserved.

    Raises ProviderError on network failure or timeout, on non-200
    responses, on malformed bodies, and on any dimension mismatch
    (never silently truncates or pads).
    """
    config.validate()
    if config.mode != "remote":
        raise ValueError("embed_remote requires a remote-mode config")
    if not texts:
        raise ValueError("texts must be nonempty")
    url = config.endpoint.rstrip("/") + "/embed"
    try:
        response = requests.post(url, json={"texts": list(texts)},
                                 timeout=config.timeout)
    except requests.RequestException as exc:
        raise ProviderError(f"embedding request failed: {exc}") from exc
    if response.status_code != 200:
        raise ProviderError(
            f"embedding service returned status {response.status_code}"
        )
    try:
        body = response.json()
        embeddings = body["embeddings"]
    except Exception as exc:
        raise ProviderError(f"malformed embedding response: {exc}") from exc
    if not isinstance(embeddings, list) or len(embeddings) != len(texts):
        raise ProviderError(
            f"expected {len(texts)} embeddings, got "
            f"{len(embeddings) if isinstance(embeddings, list) else 'non-list'}"
        )
    try:
        arr = np.asarray(embeddings, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ProviderError(f"non-numeric embedding payload: {exc}") from exc
    if arr.ndim != 2 or arr.shape[1] != config.expected_dim:
        raise ProviderError(
            f"embedding dimension mismatch: got "
            f"{arr.shape[1] if arr.ndim == 2 else 'ragged'}, "
            f"expected {config.expected_dim}"
        )
    if not np.all(np.isfinite(arr)):
        raise ProviderError("non-finite values in embedding response")
    return arr


class LocalProvider:
    """Offline provider backed by embed_local; thread-safe."""

    def __init__(self, seed: int = 0, dim: int = EMBED_DIM):
        self.seed = int(seed)
        self.dim = int(dim)

    def embed(self, texts: list[str]) -> np.ndarray:
        return embed_local(texts, seed=self.seed, dim=self.dim)


class RemoteProvider:
    """HTTP provider backed by embed_remote; one attempt per call."""

    def __init__(self, config: ProviderConfig):
        config.validate()
        self.config = config

    def embed(self, texts: list[str]) -> np.ndarray:
        return embed_remote(texts, self.config)


def make_provider(config: ProviderConfig):
    """Build the provider matching config.mode."""
    config.validate()
    if config.mode == "remote":
        return RemoteProvider(config)
    return LocalProvider(seed=config.seed, dim=config.expected_dim)
