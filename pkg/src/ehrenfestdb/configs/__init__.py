"""Bundled scenario configuration files."""

from importlib import resources
from pathlib import Path


def path(name: str) -> Path:
    """Filesystem path of a bundled config, e.g. ``path('two_level_paper')``."""
    if not name.endswith(".yaml"):
        name = name + ".yaml"
    p = resources.files(__name__) / name
    if not p.is_file():
        avail = sorted(f.name for f in resources.files(__name__).iterdir()
                       if f.name.endswith(".yaml"))
        raise FileNotFoundError(f"no bundled config {name!r}; have {avail}")
    return Path(str(p))
