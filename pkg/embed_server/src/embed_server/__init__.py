"""Word-level hidden-state service and archive exporter for masked LMs."""

from .encoder import MASK_PLACEHOLDER, MaskedLMEncoder
from .export import content_hash, export_archive, read_manifest
from .service import EmbedServer, serve

__version__ = "0.1.0"
