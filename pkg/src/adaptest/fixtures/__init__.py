"""Sample models, repositories, suites and logs used by the tests and docs."""

from importlib.resources import files
from pathlib import Path


def path(name: str) -> Path:
    return Path(str(files(__name__).joinpath(name)))


def read(name: str) -> str:
    return path(name).read_text(encoding="utf-8")
