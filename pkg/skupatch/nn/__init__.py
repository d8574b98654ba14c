"""
nn 模块 - 网络构件

    module.py     - Module, Parameter, Linear, LayerNorm, FeedForward, Mlp
    tokens.py     - TokenSet 及 ImageTokens / PatchTokens / ObjectTokens
    attention.py  - 多头注意力、交叉注意力、窗口自注意力
"""

from .attention import (
    AttentionParams,
    ProjectionTriple,
    attend,
    attention_block,
    cross_attention,
    self_attention,
    window_partition,
    window_reverse,
    windowed_self_attention,
)
from .module import FeedForward, LayerNorm, Linear, Mlp, Module, ModuleList, Parameter, normal_init
from .tokens import ImageTokens, ObjectTokens, PatchTokens, TokenSet

__all__ = [
    "Module",
    "ModuleList",
    "Parameter",
    "Linear",
    "LayerNorm",
    "FeedForward",
    "Mlp",
    "normal_init",
    "TokenSet",
    "ImageTokens",
    "PatchTokens",
    "ObjectTokens",
    "ProjectionTriple",
    "AttentionParams",
    "attend",
    "attention_block",
    "cross_attention",
    "self_attention",
    "window_partition",
    "window_reverse",
    "windowed_self_attention",
]
