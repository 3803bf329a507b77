"""Shipped configuration and data files."""
from importlib import resources
from pathlib import Path


def fixture_path(name: str) -> Path:
    """Absolute path of a shipped fixture file."""
    with resources.as_file(resources.files(__package__).joinpath(name)) as p:
        path = Path(p)
    if not path.exists():
        raise FileNotFoundError(f"no fixture named {name!r}")
    return path
