# utils/io_utils.py

import hashlib
import json
import logging
import os
import tempfile

import numpy as np
import pandas as pd

logger = logging.getLogger("app")


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def canonical_json(document):
    return json.dumps(document, sort_keys=True, separators=(",", ":"), default=_json_default)


def fingerprint(document):
    """Git blob SHA-1 of the canonical JSON of a document."""
    payload = canonical_json(document).encode()
    header = f"blob {len(payload)}\0".encode()
    return hashlib.sha1(header + payload).hexdigest()


def _atomic_write(path, write):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    handle, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(handle, "w", newline="") as stream:
            write(stream)
        os.replace(tmp_path, path)
    except Exception:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logger.info(f"wrote {path}")
    return path


def write_json(path, document):
    def write(stream):
        json.dump(document, stream, sort_keys=True, indent=2, default=_json_default)
        stream.write("\n")

    return _atomic_write(path, write)


def read_json(path):
    with open(path) as stream:
        return json.load(stream)


def write_csv(path, columns, data):
    frame = pd.DataFrame({name: data[name] for name in columns}, columns=columns)
    return _atomic_write(path, lambda stream: frame.to_csv(stream, index=False, float_format="%.17g"))


def read_csv(path):
    return pd.read_csv(path)
