"""Embedding-table production: mock hash encoder or a remote endpoint.

The mock encoder is a deterministic feature hasher over word unigrams and
bigrams; it regenerates the embedding fixtures shipped with the oodselect
package byte-for-byte. Live mode posts batches to an HTTP endpoint with
retry/backoff and refuses tables whose vectors change dimension midway.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence


class EmbedClientError(Exception):
    """Configuration, validation, or endpoint failure."""


MOCK_DIM = 128
MOCK_ENCODER_ID = "hash-encoder-v1 dim=128 word unigrams 1.0 + bigrams 0.5, sha256, l2"

Transport = Callable[[Sequence[str]], list[list[float]]]
Sleeper = Callable[[float], None]


def hash_embed(text: str, dim: int = MOCK_DIM) -> list[float]:
    """Deterministic text embedding: hashed word unigrams and bigrams.

    Unigrams weigh 1.0, adjacent bigrams 0.5; each feature lands on the
    sha256 bucket of "kind:token" with a parity sign, and the result is
    L2-normalized. Accumulation order is sorted, so the floats are
    reproducible bit-for-bit.
    """
    words = re.findall(r"[a-z0-9]+", text.lower())
    feats: dict[tuple[str, str], float] = {}
    for w in words:
        key = ("u", w)
        feats[key] = feats.get(key, 0.0) + 1.0
    for a, b in zip(words, words[1:]):
        key = ("b", a + " " + b)
        feats[key] = feats.get(key, 0.0) + 0.5
    vec = [0.0] * dim
    for (kind, tok), weight in sorted(feats.items()):
        h = hashlib.sha256((kind + ":" + tok).encode("utf-8")).digest()
        idx = int.from_bytes(h[:8], "little") % dim
        sign = 1.0 if h[8] % 2 == 0 else -1.0
        vec[idx] += sign * weight
    norm = math.sqrt(sum(v * v for v in vec))
    if norm > 0.0:
        vec = [v / norm for v in vec]
    return vec


@dataclass(frozen=True)
class EndpointConfig:
    """Where embeddings come from. url None means the offline mock."""

    url: str | None = None
    encoder_id: str = MOCK_ENCODER_ID
    api_key_env: str = "EMBED_API_KEY"
    batch_size: int = 16
    max_retries: int = 3
    backoff_seconds: float = 0.5
    timeout_seconds: float = 30.0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise EmbedClientError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_retries < 1:
            raise EmbedClientError(f"max_retries must be >= 1, got {self.max_retries}")


def _http_transport(config: EndpointConfig) -> Transport:
    api_key = os.environ.get(config.api_key_env, "")

    def post(texts: Sequence[str]) -> list[list[float]]:
        body = json.dumps({"model": config.encoder_id, "input": list(texts)}).encode("utf-8")
        request = urllib.request.Request(
            config.url,  # type: ignore[arg-type]
            data=body,
            headers={
                "Content-Type": "application/json",
                **({"Authorization": f"Bearer {api_key}"} if api_key else {}),
            },
        )
        with urllib.request.urlopen(request, timeout=config.timeout_seconds) as resp:
            payload = json.load(resp)
        vectors = payload.get("embeddings")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise EmbedClientError(
                f"endpoint returned {len(vectors) if isinstance(vectors, list) else 'no'} "
                f"vectors for {len(texts)} inputs"
            )
        return [[float(v) for v in vec] for vec in vectors]

    return post


def _mock_transport(texts: Sequence[str]) -> list[list[float]]:
    return [hash_embed(t) for t in texts]


def retry_with_backoff(call, config, sleeper: Sleeper):
    """Run a zero-arg call up to config.max_retries times with exponential
    backoff between attempts, then abort."""
    last: Exception | None = None
    for attempt in range(config.max_retries):
        try:
            return call()
        except (urllib.error.URLError, OSError, EmbedClientError, ValueError) as exc:
            last = exc
            if attempt + 1 < config.max_retries:
                sleeper(config.backoff_seconds * (2.0**attempt))
    raise EmbedClientError(
        f"request failed after {config.max_retries} attempts: {last}"
    ) from last


def embed_texts(
    descriptions: Mapping[str, str],
    config: EndpointConfig = EndpointConfig(),
    transport: Transport | None = None,
    sleeper: Sleeper = time.sleep,
) -> dict:
    """Embed "Name. Description" per entry into an embedding-table payload.

    Returns {"dim", "provenance", "entries"} ready for
    write_embedding_table, which the benchmark's table loader accepts.
    Vectors that change dimension between batches abort the run.
    """
    if not descriptions:
        raise EmbedClientError("no descriptions to embed")
    for name, text in descriptions.items():
        if not name or not str(text).strip():
            raise EmbedClientError(f"empty description for {name!r}")
    if transport is None:
        transport = _mock_transport if config.url is None else _http_transport(config)
    names = list(descriptions)
    texts = [f"{name}. {descriptions[name]}" for name in names]
    vectors: list[list[float]] = []
    for start in range(0, len(texts), config.batch_size):
        batch = texts[start : start + config.batch_size]
        vectors.extend(retry_with_backoff(lambda: transport(batch), config, sleeper))
    if len(vectors) != len(texts):
        raise EmbedClientError(f"got {len(vectors)} vectors for {len(texts)} inputs")
    dims = {len(v) for v in vectors}
    if len(dims) != 1:
        raise EmbedClientError(f"embedding dimension drifted across calls: {sorted(dims)}")
    dim = dims.pop()
    if dim < 1:
        raise EmbedClientError("endpoint returned empty vectors")
    return {
        "dim": dim,
        "provenance": config.encoder_id,
        "entries": {name: vec for name, vec in zip(names, vectors)},
    }


def write_embedding_table(payload: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_description_set(catalog_path: str) -> dict[str, dict[str, str]]:
    """Read {"datasets": name -> text, "models": name -> text} from a
    catalog JSON file (the benchmark's catalog format)."""
    with open(catalog_path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    out: dict[str, dict[str, str]] = {}
    for key in ("datasets", "models"):
        if key not in raw or not isinstance(raw[key], list):
            raise EmbedClientError(f"{catalog_path}: missing {key!r} list")
        block: dict[str, str] = {}
        for entry in raw[key]:
            name = entry.get("name", "")
            text = entry.get("description", "")
            if not name or not str(text).strip():
                raise EmbedClientError(f"{catalog_path}: {key} entry without name/description")
            if name in block:
                raise EmbedClientError(f"{catalog_path}: duplicate {key} name {name!r}")
            block[name] = text
        out[key] = block
    return out


def select_descriptions(
    description_set: Mapping[str, Mapping[str, str]], kind: str, names: Sequence[str] | None = None
) -> dict[str, str]:
    """Subset one block of a description set, rejecting unknown names."""
    if kind not in description_set:
        raise EmbedClientError(f"unknown description kind {kind!r}")
    block = description_set[kind]
    if names is None:
        return dict(block)
    out: dict[str, str] = {}
    for name in names:
        if name not in block:
            known = ", ".join(sorted(block))
            raise EmbedClientError(f"no {kind} description for {name!r} (have: {known})")
        out[name] = block[name]
    return out
