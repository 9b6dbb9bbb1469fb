import os
import shlex
import sys
from pathlib import Path

from correlated_rabi.cli import dispatch  # pyright: ignore[reportMissingImports]

ENV_PREFIX = "CORRELATED_RABI_"


def read_env_file(env_path: Path) -> dict[str, str]:
    """Parse ``KEY=value`` assignments, shell quoting and ``export`` included."""

    if not env_path.exists():
        return {}

    values: dict[str, str] = {}
    for number, raw_line in enumerate(env_path.read_text(encoding="utf-8").splitlines(), start=1):
        try:
            words = shlex.split(raw_line, comments=True)
        except ValueError as exc:
            print(f"[warn] {env_path}:{number}: {exc}", file=sys.stderr)
            continue
        if words[:1] == ["export"]:
            words = words[1:]
        if len(words) != 1 or "=" not in words[0]:
            continue
        key, value = words[0].split("=", 1)
        if key:
            values[key] = value
    return values


def load_env_file(env_path: Path) -> dict[str, str]:
    """Export this tool's settings from ``env_path`` unless already set.

    Keys without the ``CORRELATED_RABI_`` prefix are ignored.
    """

    applied: dict[str, str] = {}
    for key, value in read_env_file(env_path).items():
        if not key.startswith(ENV_PREFIX) or key in os.environ:
            continue
        os.environ[key] = value
        applied[key] = value
    return applied


def main() -> None:
    load_env_file(Path(".env"))
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
