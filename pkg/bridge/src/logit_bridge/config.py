"""Server configuration."""

from __future__ import annotations

from dataclasses import dataclass

# Mirrors the decoding engine's prompt layout so stub and real modes answer
# the same conventions the engine's text backends use.
NO_CONTEXT_SENTINEL = "No relevant context available."
DEFAULT_COND_TEMPLATE = "Context:\n{context_block}\n\nQuestion: {query}\n\nAnswer:"
DEFAULT_PRIOR_TEMPLATE = (
    f"Context:\n{NO_CONTEXT_SENTINEL}\n\nQuestion: {{query}}\n\nAnswer:"
)


class BridgeConfigError(ValueError):
    """Invalid server configuration; startup must fail with nonzero exit."""


@dataclass(frozen=True)
class BridgeConfig:
    """Exactly one serving mode: a stub table path or a real model adapter.

    ``model_ref`` is an import path "package.module:attribute" resolving to a
    ModelAdapter instance or zero-argument factory.
    """

    table_path: str | None = None
    model_ref: str | None = None
    host: str = "127.0.0.1"
    port: int = 8080
    cond_template: str = DEFAULT_COND_TEMPLATE
    prior_template: str = DEFAULT_PRIOR_TEMPLATE

    def __post_init__(self):
        if (self.table_path is None) == (self.model_ref is None):
            raise BridgeConfigError(
                "exactly one of table_path (stub mode) or model_ref (real mode) required"
            )
        if not (0 <= self.port <= 65535):
            raise BridgeConfigError(f"port out of range: {self.port}")
        for name, template in (("cond", self.cond_template), ("prior", self.prior_template)):
            if "{query}" not in template:
                raise BridgeConfigError(f"{name}_template must contain a {{query}} slot")
        if "{context_block}" not in self.cond_template:
            raise BridgeConfigError("cond_template must contain a {context_block} slot")

    @property
    def mode(self) -> str:
        return "stub" if self.table_path is not None else "real"
