"""Checkpoint archives: named float32 arrays plus key-value metadata.

A checkpoint is a single zip archive holding ``manifest.txt`` (plain-text
``key=value`` lines) and one ``arrays/<name>.bin`` member per parameter
array, stored as raw little-endian 32-bit floats.  Every array carries a
sha256 digest in the manifest, verified on load.  Archive bytes are
deterministic: member timestamps are pinned so identical states hash
identically.
"""
from __future__ import annotations

import hashlib
import zipfile
from pathlib import Path

import numpy as np

from .errors import CheckpointError, CheckpointVersionError

FORMAT_NAME = "distner-checkpoint"
FORMAT_VERSION = 1

# Fixed zip member date so archives are byte-stable across runs.
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _store(archive: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    archive.writestr(info, payload)


def save_checkpoint(
    arrays: dict[str, np.ndarray],
    metadata: dict[str, str],
    path: str | Path,
) -> None:
    """Write arrays and metadata to ``path``.

    Arrays must be float32 (the on-disk format is 32-bit); metadata keys and
    values must be newline-free strings.  Metadata keys are stored under a
    ``meta.`` prefix and returned verbatim by :func:`load_checkpoint`.
    """
    path = Path(path)
    lines = [f"format={FORMAT_NAME}", f"version={FORMAT_VERSION}"]
    payloads: dict[str, bytes] = {}
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype != np.float32:
            raise CheckpointError(f"array {name!r} is {arr.dtype}, expected float32")
        raw = arr.astype("<f4", copy=False).tobytes()
        shape = ",".join(str(d) for d in arr.shape)
        lines.append(f"array.{name}.shape={shape}")
        lines.append(f"array.{name}.sha256={hashlib.sha256(raw).hexdigest()}")
        payloads[name] = raw
    for key, value in metadata.items():
        if "\n" in key or "\n" in value or "=" in key:
            raise CheckpointError(f"metadata entry {key!r} is not a plain key-value pair")
        lines.append(f"meta.{key}={value}")
    with zipfile.ZipFile(path, "w") as archive:
        _store(archive, "manifest.txt", ("\n".join(lines) + "\n").encode("utf-8"))
        for name, raw in payloads.items():
            _store(archive, f"arrays/{name}.bin", raw)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Read a checkpoint archive back into arrays and metadata.

    Raises :class:`CheckpointError` on anything that is not a well-formed,
    checksum-clean archive and :class:`CheckpointVersionError` on a format
    version this code does not understand.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no checkpoint at {path}")
    try:
        archive = zipfile.ZipFile(path, "r")
    except zipfile.BadZipFile as exc:
        raise CheckpointError(f"{path} is not a checkpoint archive: {exc}") from None
    with archive:
        try:
            manifest = archive.read("manifest.txt").decode("utf-8")
        except KeyError:
            raise CheckpointError(f"{path} has no manifest") from None
        entries: list[tuple[str, str]] = []
        for line in manifest.splitlines():
            if not line.strip():
                continue
            if "=" not in line:
                raise CheckpointError(f"{path}: malformed manifest line {line!r}")
            key, _, value = line.partition("=")
            entries.append((key, value))
        header = dict(entries[:2])
        if header.get("format") != FORMAT_NAME:
            raise CheckpointError(f"{path}: bad magic, not a {FORMAT_NAME} archive")
        version = header.get("version")
        if version != str(FORMAT_VERSION):
            raise CheckpointVersionError(
                f"{path}: format version {version} is not supported "
                f"(this build reads version {FORMAT_VERSION})"
            )

        shapes: dict[str, tuple[int, ...]] = {}
        digests: dict[str, str] = {}
        metadata: dict[str, str] = {}
        for key, value in entries[2:]:
            if key.startswith("array.") and key.endswith(".shape"):
                name = key[len("array.") : -len(".shape")]
                shapes[name] = tuple(int(d) for d in value.split(",")) if value else ()
            elif key.startswith("array.") and key.endswith(".sha256"):
                digests[key[len("array.") : -len(".sha256")]] = value
            elif key.startswith("meta."):
                metadata[key[len("meta.") :]] = value
            else:
                raise CheckpointError(f"{path}: unexpected manifest key {key!r}")

        arrays: dict[str, np.ndarray] = {}
        for name, shape in shapes.items():
            try:
                raw = archive.read(f"arrays/{name}.bin")
            except KeyError:
                raise CheckpointError(f"{path}: array {name!r} listed but missing") from None
            if hashlib.sha256(raw).hexdigest() != digests.get(name):
                raise CheckpointError(f"{path}: checksum mismatch for array {name!r}")
            arr = np.frombuffer(raw, dtype="<f4").astype(np.float32)
            expected = int(np.prod(shape)) if shape else 1
            if arr.size != expected:
                raise CheckpointError(
                    f"{path}: array {name!r} has {arr.size} values, shape says {expected}"
                )
            arrays[name] = arr.reshape(shape)
    return arrays, metadata


def checkpoint_digest(path: str | Path) -> str:
    """sha256 of the archive bytes; used by run manifests to pin outputs."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
