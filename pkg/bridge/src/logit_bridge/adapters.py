"""Real-model adapter interface.

A real deployment wraps a masked diffusion checkpoint behind ModelAdapter:
the server renders the prompt text, forwards the current answer region, and
the adapter returns one pre-softmax logit vector per masked position from a
single denoising-step forward pass. Forward passes are serialized by the
server, so adapters need no internal locking.
"""

from __future__ import annotations

import importlib
from typing import Protocol, runtime_checkable

from .config import BridgeConfig, BridgeConfigError


@runtime_checkable
class ModelAdapter(Protocol):
    model_id: str
    vocab_size: int
    logit_kind: str  # "raw" or "log_prob"

    def forward(
        self, prompt: str, tokens: list[int], masked: list[bool]
    ) -> list[list[float]]:
        """Logit rows for masked positions, ascending position order."""
        ...


def render_prompt(config: BridgeConfig, query: str, contexts: list[str], conditioned: bool) -> str:
    """Render the adapter prompt; the prior branch never sees the contexts.

    A conditioned request with no contexts collapses to the prior prompt so
    both branches coincide exactly when nothing was retrieved.
    """
    if not conditioned or not contexts:
        return config.prior_template.format(query=query)
    block = "\n".join(f"Passage {k}: {text}" for k, text in enumerate(contexts, start=1))
    return config.cond_template.format(context_block=block, query=query)


def load_adapter(model_ref: str) -> ModelAdapter:
    """Resolve "package.module:attribute" to an adapter instance.

    The attribute may be the adapter itself or a zero-argument factory.
    """
    module_name, sep, attr = model_ref.partition(":")
    if not sep or not module_name or not attr:
        raise BridgeConfigError(
            f"model_ref must look like 'package.module:attribute', got {model_ref!r}"
        )
    try:
        module = importlib.import_module(module_name)
    except ImportError as exc:
        raise BridgeConfigError(f"cannot import adapter module {module_name!r}: {exc}") from exc
    try:
        candidate = getattr(module, attr)
    except AttributeError as exc:
        raise BridgeConfigError(f"module {module_name!r} has no attribute {attr!r}") from exc
    adapter = candidate() if callable(candidate) and not isinstance(candidate, ModelAdapter) else candidate
    if not isinstance(adapter, ModelAdapter):
        raise BridgeConfigError(
            f"{model_ref!r} is not a ModelAdapter (needs model_id, vocab_size, logit_kind, forward)"
        )
    return adapter
