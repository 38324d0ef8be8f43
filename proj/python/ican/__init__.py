"""Bilinear fusion, co-attention and price-zone ensemble classifier."""

from ._core import (
    RunConfig,
    attention,
    block_fuse,
    coarse_partitions,
    evaluate,
    generate,
    mfb_fuse,
    price_to_label,
    standard_zones,
    train,
    vote,
    weighted_ce_loss,
)

__all__ = [
    "RunConfig",
    "attention",
    "block_fuse",
    "coarse_partitions",
    "evaluate",
    "generate",
    "mfb_fuse",
    "price_to_label",
    "standard_zones",
    "train",
    "vote",
    "weighted_ce_loss",
]
