"""Byte-level CNN malware classifier and activation analysis toolkit."""

try:
    from ._byteprobe import *  # noqa: F401,F403  (installed package layout)
except ImportError:  # in-tree builds put the module on sys.path directly
    from _byteprobe import *  # noqa: F401,F403

__all__ = [name for name in dir() if not name.startswith("_")]
