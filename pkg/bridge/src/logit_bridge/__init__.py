"""Reference logit bridge server.

Serves the wire protocol documented in docs/logits_protocol.md of the
decoding engine repository: a deterministic stub mode backed by declarative
logit tables (for integration tests) and a real mode that forwards masked
answer positions into a model adapter's denoising forward pass.
"""

from .adapters import ModelAdapter, load_adapter, render_prompt
from .config import BridgeConfig, DEFAULT_COND_TEMPLATE, DEFAULT_PRIOR_TEMPLATE
from .server import create_app, serve
from .tables import StubTable, load_stub_table

__version__ = "0.1.0"

__all__ = [
    "BridgeConfig",
    "DEFAULT_COND_TEMPLATE",
    "DEFAULT_PRIOR_TEMPLATE",
    "ModelAdapter",
    "StubTable",
    "create_app",
    "load_adapter",
    "load_stub_table",
    "render_prompt",
    "serve",
]
