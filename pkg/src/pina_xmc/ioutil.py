"""Small shared I/O helpers for deterministic artifact files."""

import hashlib
import json
import os

from .errors import FormatError


def write_json(path, obj):
    """Write JSON with sorted keys so artifact bytes are reproducible."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"{path}: missing manifest") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc


def hash_tree(dir_path):
    """SHA-256 over every file in a directory, keyed by relative path."""
    digest = hashlib.sha256()
    entries = []
    for root, _, files in os.walk(dir_path):
        for name in files:
            full = os.path.join(root, name)
            entries.append((os.path.relpath(full, dir_path), full))
    for rel, full in sorted(entries):
        digest.update(rel.encode("utf-8"))
        digest.update(b"\0")
        with open(full, "rb") as fh:
            digest.update(fh.read())
        digest.update(b"\0")
    return digest.hexdigest()
