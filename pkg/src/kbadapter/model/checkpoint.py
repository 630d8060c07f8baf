"""Checkpoint directory format.

A checkpoint is a directory holding config.json (model, adapter, fusion
settings), vocab.txt, shapes.json (per-group parameter names and shapes),
and one raw little-endian float32 .bin file per parameter group. Binary
files concatenate the group's tensors in the order shapes.json lists them.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from ..tokenizer import WordTokenizer
from .augmented import AugmentedModel
from .config import AdapterConfig, ModelConfig, load_config, save_config
from .transformer import Seq2SeqTransformer

FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, model: AugmentedModel, tokenizer: WordTokenizer) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    save_config(
        path / "config.json",
        {
            "format_version": FORMAT_VERSION,
            "model": model.plm.cfg.to_json(),
            "adapter": model.adapter_cfg.to_json(),
            "fusion_mode": model.fusion_mode,
            "domains": list(model.domains),
        },
    )
    tokenizer.save(path / "vocab.txt")
    shapes: dict[str, list] = {}
    for group, named in model.named_param_groups().items():
        shapes[group] = [[name, list(p.shape)] for name, p in named]
        with open(path / f"{group}.bin", "wb") as fh:
            for _, p in named:
                arr = p.detach().cpu().contiguous().to(torch.float32).numpy()
                fh.write(arr.astype("<f4", copy=False).tobytes())
    save_config(path / "shapes.json", shapes)


def load_checkpoint(path: str | Path) -> tuple[AugmentedModel, WordTokenizer]:
    path = Path(path)
    meta = load_config(path / "config.json")
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format: {meta.get('format_version')}")
    tokenizer = WordTokenizer.load(path / "vocab.txt")
    plm = Seq2SeqTransformer(ModelConfig.from_json(meta["model"]))
    model = AugmentedModel(
        plm,
        AdapterConfig.from_json(meta["adapter"]),
        domains=tuple(meta["domains"]),
        fusion_mode=meta["fusion_mode"],
    )
    shapes = load_config(path / "shapes.json")
    groups = model.named_param_groups()
    if set(shapes) != set(groups):
        raise ValueError(
            f"checkpoint groups {sorted(shapes)} do not match model groups {sorted(groups)}"
        )
    for group, named in groups.items():
        listed = shapes[group]
        if [name for name, _ in listed] != [name for name, _ in named]:
            raise ValueError(f"parameter names in group '{group}' do not match")
        blob = np.fromfile(path / f"{group}.bin", dtype="<f4")
        offset = 0
        with torch.no_grad():
            for (name, shape), (_, param) in zip(listed, named):
                count = int(np.prod(shape)) if shape else 1
                chunk = blob[offset : offset + count]
                if chunk.size != count:
                    raise ValueError(f"group '{group}' binary too short at '{name}'")
                param.copy_(torch.from_numpy(chunk.reshape(shape).copy()))
                offset += count
        if offset != blob.size:
            raise ValueError(f"group '{group}' binary has {blob.size - offset} trailing values")
    return model, tokenizer
