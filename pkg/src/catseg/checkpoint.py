"""Binary checkpoint format for model + provider + vocabularies.

Layout: magic `CATS`, u32 version, length-prefixed JSON metadata block
(model dims, vocabularies, provider description, run config), u32 tensor
count, then per tensor a length-prefixed name, u32 rank, u32 extents, and a
row-major little-endian float32 payload. Everything is written in a fixed
order so identical state serializes to identical bytes.
"""

import json
import struct

import numpy as np

from .embeddings import rebuild_provider
from .model import CatsModel, ModelConfig
from .vocab import CharVocab, LabelVocab

MAGIC = b"CATS"
VERSION = 1


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint file."""


def _pack_meta(model, provider, run_config):
    meta = {
        "model": model.describe(),
        "char_vocab": model.char_vocab.to_config(),
        "label_vocab": model.label_vocab.to_config() if model.label_vocab else None,
        "provider": provider.describe(),
        "run_config": run_config or {},
    }
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _ordered_tensors(model, provider):
    out = list(model.named_parameters())
    out += sorted((name, arr) for name, arr in provider.tensors().items())
    return out


def save_checkpoint(model, provider, path, run_config=None):
    tensors = _ordered_tensors(model, provider)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        blob = _pack_meta(model, provider, run_config)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name, tensor in tensors:
            arr = np.ascontiguousarray(
                tensor.data if hasattr(tensor, "data") else tensor, dtype="<f4"
            )
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf


def _read_u32(fh, what):
    return struct.unpack("<I", _read_exact(fh, 4, what))[0]


def load_checkpoint(path, store=None):
    """Rebuild (model, provider, run_config) from a checkpoint file.

    External-mode checkpoints carry no vectors; pass the reloaded store.
    """
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise CheckpointError(f"{path}: not a model checkpoint (bad magic)")
        version = _read_u32(fh, "version")
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        meta = json.loads(_read_exact(fh, _read_u32(fh, "metadata size"), "metadata"))
        count = _read_u32(fh, "tensor count")
        tensors = {}
        for _ in range(count):
            name = _read_exact(fh, _read_u32(fh, "tensor name size"), "tensor name").decode("utf-8")
            rank = _read_u32(fh, "tensor rank")
            shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "tensor extents"))
            n_bytes = 4 * int(np.prod(shape, dtype=np.int64)) if rank else 4
            payload = _read_exact(fh, n_bytes, f"tensor {name!r} payload")
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after declared tensors")

    md = meta["model"]
    cfg = ModelConfig(
        d_char=md["d_char"],
        d_enc=md["d_enc"],
        d_dec=md["d_dec"],
        d_att=md["d_att"],
        joint=md["joint"],
        use_sentence_vector=md["use_sentence_vector"],
        char_encoder_enabled=md["char_encoder_enabled"],
        max_decode_factor=md["max_decode_factor"],
        max_decode_slack=md["max_decode_slack"],
    )
    char_vocab = CharVocab.from_config(meta["char_vocab"])
    label_vocab = LabelVocab.from_config(meta["label_vocab"]) if meta["label_vocab"] else None
    model = CatsModel(
        cfg,
        char_vocab,
        label_vocab,
        d_ctx=md["d_ctx"],
        d_sent=md["d_sent"] or md["d_ctx"],
        seed=0,
    )
    for name, param in model.named_parameters():
        if name not in tensors:
            raise CheckpointError(f"{path}: missing tensor {name!r}")
        arr = tensors[name]
        if arr.shape != param.data.shape:
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {arr.shape}, model expects {param.data.shape}"
            )
        param.data = np.ascontiguousarray(arr, dtype=param.data.dtype)
    provider_tensors = {
        name: arr.astype(np.float64) for name, arr in tensors.items() if name.startswith("provider.")
    }
    provider = rebuild_provider(meta["provider"], provider_tensors, store=store)
    return model, provider, meta["run_config"]
