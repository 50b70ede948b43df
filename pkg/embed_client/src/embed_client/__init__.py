"""Client-side tooling for the oodselect benchmark fixtures.

Two jobs: turn the catalog's text descriptions into embedding-table JSON
files (mock encoder offline, HTTP endpoint opt-in), and run a
chat-model-as-selector over recorded responses, emitting a selections
file the benchmark harness evaluates like any other selector.
"""

from .resources import fixture_path
from .encoder import (
    EmbedClientError,
    EndpointConfig,
    MOCK_ENCODER_ID,
    embed_texts,
    hash_embed,
    load_description_set,
    select_descriptions,
    write_embedding_table,
)
from .selector import (
    ABSTAIN,
    ChatConfig,
    build_prompt,
    llm_select,
    load_responses,
    parse_recommendation,
    write_selections,
)

__all__ = [
    "ABSTAIN",
    "ChatConfig",
    "EmbedClientError",
    "EndpointConfig",
    "MOCK_ENCODER_ID",
    "build_prompt",
    "embed_texts",
    "fixture_path",
    "hash_embed",
    "llm_select",
    "load_description_set",
    "load_responses",
    "parse_recommendation",
    "select_descriptions",
    "write_embedding_table",
    "write_selections",
]
