"""
model 模块 - 网络结构

    tokenizer.py  - 分块嵌入、N-to-1 融合
    encoder.py    - 补丁-图像相关编码器
    decoder.py    - 金字塔融合、可变形注意力、解码层
    heads.py      - 分类 / 框 / 掩码向量头
    uqr.py        - DCT 掩码编解码
    network.py    - SkuPatchNet
"""

from .decoder import (
    Bottleneck,
    Decoder,
    DecoderLayer,
    DeformableAttention,
    FusionLayer,
    grid_centers,
    pyramid_fuse,
    upsample_2x,
    upsample_matrix,
)
from .encoder import Encoder, EncoderLayer, EncoderOutput, LayerOutput, merge_grid, pool_patch_pairs
from .heads import NO_OBJECT_CLASS, NUM_CLASSES, OBJECT_CLASS, HeadOutputs, Prediction, TaskHeads
from .network import NetworkOutput, SkuPatchNet
from .tokenizer import NToOne, PatchEmbedding, blockify, tokenize_image, tokenize_patch
from .uqr import DctBasis, MaskCodec, MaskVector, zigzag_order

__all__ = [
    "PatchEmbedding",
    "blockify",
    "tokenize_image",
    "tokenize_patch",
    "NToOne",
    "Encoder",
    "EncoderLayer",
    "EncoderOutput",
    "LayerOutput",
    "merge_grid",
    "pool_patch_pairs",
    "Bottleneck",
    "FusionLayer",
    "DeformableAttention",
    "DecoderLayer",
    "Decoder",
    "grid_centers",
    "pyramid_fuse",
    "upsample_2x",
    "upsample_matrix",
    "TaskHeads",
    "HeadOutputs",
    "Prediction",
    "OBJECT_CLASS",
    "NO_OBJECT_CLASS",
    "NUM_CLASSES",
    "DctBasis",
    "MaskCodec",
    "MaskVector",
    "zigzag_order",
    "SkuPatchNet",
    "NetworkOutput",
]
