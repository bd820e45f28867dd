"""docforge: turn unstructured documents into reviewed instruction-tuning
datasets.

Submodules are imported directly (``from docforge.chunker import chunk_text``);
this package root only pins the version.
"""

__version__ = "0.1.0"
