"""Engine backend selection.

The compiled extension is used when it was built; ``HETNOC_BACKEND=python``
forces the interpreted copy of the same source.
"""

from __future__ import annotations

import importlib.util
import os
from pathlib import Path
from types import ModuleType

_ENV = "HETNOC_BACKEND"


def _load_pure() -> ModuleType:
    path = Path(__file__).with_name("_engine.py")
    spec = importlib.util.spec_from_file_location("hetnoc._engine_py", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def _is_compiled(module: ModuleType) -> bool:
    return not str(getattr(module, "__file__", "")).endswith(".py")


def load(name: str | None = None) -> ModuleType:
    """Engine module for backend ``name`` ("compiled", "python" or None for auto)."""
    choice = (name or os.environ.get(_ENV, "auto")).lower()
    if choice == "python":
        return _load_pure()
    from . import _engine

    if choice == "compiled" and not _is_compiled(_engine):
        raise ImportError("compiled engine requested but the extension is not built")
    return _engine


_pure_cache: ModuleType | None = None


def pure() -> ModuleType:
    global _pure_cache
    if _pure_cache is None:
        _pure_cache = _load_pure()
    return _pure_cache


def compiled_available() -> bool:
    from . import _engine

    return _is_compiled(_engine)


def backend_name(module: ModuleType) -> str:
    return "compiled" if _is_compiled(module) else "python"
