"""Utility functions shared by all goldenir modules."""

import functools
import hashlib
import json
import os

# a simple flag for enabling rigorous checks in many places
DEBUG = bool(os.environ.get("GOLDENIR_DEBUG", "0").upper() in ("1", "TRUE"))


def set_debug(debug):
    global DEBUG
    DEBUG = debug


def get_debug():
    return DEBUG


def lazyabstractmethod(method):
    """Mark a method as one that must be implemented in a subclass, but only
    enforce this when the method is called. This can be used as a decorator (if
    you want to demonstrate the call signature) or by directly assigning the
    result to a method name.
    """

    if callable(method):
        name = method.__name__
    else:
        name = str(method)

    def raising_method(self, *args, **kwargs):
        raise NotImplementedError(
            f"`{name}` must be implemented in "
            f"subclass `{self.__class__.__name__}`"
        )

    return raising_method


def json_hasher(obj):
    """Deterministic SHA-1 hex digest of a JSON serializable object."""
    s = json.dumps(obj, sort_keys=True, ensure_ascii=False)
    return hashlib.sha1(s.encode("utf-8")).hexdigest()


def sha1_file(path, chunk_size=2**20):
    """SHA-1 hex digest of the contents of the file at ``path``."""
    h = hashlib.sha1()
    with open(path, "rb") as f:
        while chunk := f.read(chunk_size):
            h.update(chunk)
    return h.hexdigest()


def sha1_path(path):
    """Hash a file by content, or a directory by its sorted listing of
    relative file names and sizes (hashing a multi-gigabyte dump by content
    on every run is not practical).
    """
    if os.path.isfile(path):
        return sha1_file(path)

    listing = []
    for root, dirs, files in os.walk(path):
        dirs.sort()
        for fname in sorted(files):
            full = os.path.join(root, fname)
            rel = os.path.relpath(full, path)
            listing.append((rel, os.path.getsize(full)))
    return json_hasher(listing)


def get_rng(seed=None):
    import numpy as np

    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@functools.cache
def package_versions():
    """The versions of goldenir and its core dependencies, for run
    manifests.
    """
    import platform
    from importlib.metadata import PackageNotFoundError, version

    versions = {"python": platform.python_version()}
    for name in ("goldenir", "numpy", "autoray"):
        try:
            versions[name] = version(name)
        except PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def write_jsonl(path, records):
    """Write an iterable of JSON serializable ``records``, one per line.
    Returns the number of records written.
    """
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_jsonl(path):
    """Yield the JSON objects of a JSON-lines file, skipping blank lines."""
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)
