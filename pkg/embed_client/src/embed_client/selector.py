"""Chat-model-as-selector over dataset/method descriptions.

For each ID/OOD pair the client builds a prompt from the catalog texts,
obtains a reply (recorded fixture offline, HTTP endpoint opt-in), and
parses the mandated one-line answer format into a catalog method name.
Replies that do not parse, or that name a method outside the catalog,
are kept verbatim and mapped to the ABSTAIN marker. The emitted
selections file is the benchmark harness's per-pair selector format.
"""

from __future__ import annotations

import json
import os
import re
import time
import urllib.request
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .encoder import EmbedClientError, retry_with_backoff

ABSTAIN = "ABSTAIN"

ANSWER_PREFIX = "Recommended Method:"
_ANSWER_RE = re.compile(re.escape(ANSWER_PREFIX) + r"\s*([^\n]+)")

ChatTransport = Callable[[str], str]


@dataclass(frozen=True)
class ChatConfig:
    """Where selector replies come from. url None means recorded mode.

    Decoding is pinned to greedy-ish sampling: temperature 0, top_p 0.999.
    """

    url: str | None = None
    model_id: str = "chat-v1"
    temperature: float = 0.0
    top_p: float = 0.999
    api_key_env: str = "CHAT_API_KEY"
    max_retries: int = 3
    backoff_seconds: float = 0.5
    timeout_seconds: float = 30.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise EmbedClientError(f"temperature out of range: {self.temperature}")
        if not 0.0 < self.top_p <= 1.0:
            raise EmbedClientError(f"top_p out of range: {self.top_p}")
        if self.max_retries < 1:
            raise EmbedClientError(f"max_retries must be >= 1, got {self.max_retries}")


def pair_key(id_name: str, ood_name: str) -> str:
    return f"{id_name}|{ood_name}"


def build_prompt(
    pair: Mapping[str, str],
    dataset_texts: Mapping[str, str],
    method_texts: Mapping[str, str],
) -> str:
    """Selection prompt for one ID/OOD pair, ending with the mandated
    one-line answer format so replies stay machine-parseable."""
    id_name, ood_name = pair["id"], pair["ood"]
    lines = [
        "You are choosing an out-of-distribution detection method for an",
        "image classification model. Pick the single method from the",
        "catalog below that you expect to score highest on this task.",
        "",
        f"In-distribution dataset: {id_name}. {dataset_texts[id_name]}",
        f"Out-of-distribution dataset: {ood_name}. {dataset_texts[ood_name]}",
        "",
        "Catalog of methods:",
    ]
    for name, text in method_texts.items():
        lines.append(f"- {name}: {text}")
    lines.extend(
        [
            "",
            "Reply with exactly one line in the format:",
            f"{ANSWER_PREFIX} [<method name>]",
        ]
    )
    return "\n".join(lines)


def parse_recommendation(text: str, methods: Sequence[str]) -> str:
    """Extract the recommended method from a reply, or ABSTAIN.

    Takes the last occurrence of the answer line, strips surrounding
    brackets, whitespace, and a trailing period, and requires an exact
    catalog match; anything else abstains.
    """
    matches = _ANSWER_RE.findall(text or "")
    if not matches:
        return ABSTAIN
    candidate = matches[-1].strip()
    if candidate.endswith("."):
        candidate = candidate[:-1].strip()
    if candidate.startswith("[") and candidate.endswith("]"):
        candidate = candidate[1:-1].strip()
    return candidate if candidate in set(methods) else ABSTAIN


def _chat_transport(config: ChatConfig) -> ChatTransport:
    api_key = os.environ.get(config.api_key_env, "")

    def post(prompt: str) -> str:
        body = json.dumps(
            {
                "model": config.model_id,
                "temperature": config.temperature,
                "top_p": config.top_p,
                "messages": [{"role": "user", "content": prompt}],
            }
        ).encode("utf-8")
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
        if isinstance(payload.get("content"), str):
            return payload["content"]
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise EmbedClientError("chat endpoint reply carries no message content")

    return post


def load_responses(path: str) -> dict[str, str]:
    """Read a recorded-responses file: {"responses": {"<id>|<ood>": text}}."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    responses = raw.get("responses")
    if not isinstance(responses, dict) or not responses:
        raise EmbedClientError(f"{path}: missing non-empty 'responses' mapping")
    for key, text in responses.items():
        if "|" not in key or not isinstance(text, str):
            raise EmbedClientError(f"{path}: bad response entry {key!r}")
    return dict(responses)


def llm_select(
    descriptions: Mapping[str, Mapping[str, str]],
    pairs: Sequence[Mapping[str, str]],
    config: ChatConfig = ChatConfig(),
    responses: Mapping[str, str] | None = None,
    transport: ChatTransport | None = None,
    sleeper: Callable[[float], None] = time.sleep,
) -> dict:
    """One recommended method per pair, as a selections payload.

    Recorded mode (responses given) performs no network access at all; a
    pair without a recorded reply is an error. ABSTAIN entries keep the
    raw reply so failures stay auditable.
    """
    datasets = descriptions.get("datasets", {})
    methods = descriptions.get("models", {})
    if not methods:
        raise EmbedClientError("no method descriptions to choose from")
    if not pairs:
        raise EmbedClientError("no pairs to select for")
    for pair in pairs:
        for side in ("id", "ood"):
            name = pair.get(side, "")
            if name not in datasets:
                known = ", ".join(sorted(datasets))
                raise EmbedClientError(f"no dataset description for {name!r} (have: {known})")
    if responses is None:
        if transport is None:
            if config.url is None:
                raise EmbedClientError("recorded responses or a chat endpoint is required")
            transport = _chat_transport(config)
        source = "live endpoint"
    else:
        source = "recorded responses"
    method_names = list(methods)
    selections = []
    for pair in pairs:
        key = pair_key(pair["id"], pair["ood"])
        if responses is not None:
            if key not in responses:
                raise EmbedClientError(f"no recorded response for pair {key!r}")
            reply = responses[key]
        else:
            prompt = build_prompt(pair, datasets, methods)
            reply = retry_with_backoff(lambda: transport(prompt), config, sleeper)
        choice = parse_recommendation(reply, method_names)
        entry: dict = {"pair": {"id": pair["id"], "ood": pair["ood"]}, "model": choice}
        if choice == ABSTAIN:
            entry["response"] = reply
        selections.append(entry)
    return {
        "provenance": (
            f"llm-selector {config.model_id} temperature={config.temperature} "
            f"top_p={config.top_p} via {source}"
        ),
        "selections": selections,
    }


def write_selections(payload: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
