"""
Transformer building blocks shared by the VAE, the denoiser and the emotion adapter:
fixed sinusoidal encodings, a pre-norm block with optional cross-attention, and a block
stack with U-Net style long skip connections.
"""
import math
import torch
from torch import nn


def sinusoidal_table(length, width):
    """length×width table of fixed sinusoidal position features"""
    if width % 2:
        raise ValueError(f"Sinusoidal features need an even width, got {width}")
    position = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    frequency = torch.exp(torch.arange(0, width, 2, dtype=torch.float64) * (-math.log(10000.0) / width))
    table = torch.zeros(length, width, dtype=torch.float64)
    table[:, 0::2] = torch.sin(position * frequency)
    table[:, 1::2] = torch.cos(position * frequency)
    return table.to(torch.get_default_dtype())


def timestep_embedding(timesteps, width):
    """B×width sinusoidal features of integer diffusion steps"""
    half = width // 2
    frequency = torch.exp(torch.arange(half, dtype=torch.float64) * (-math.log(10000.0) / half))
    angles = timesteps.to(torch.float64).unsqueeze(1) * frequency.unsqueeze(0)
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)


class SinusoidalPositions(nn.Module):
    """Fixed positional encodings; no parameters"""

    def __init__(self, width, max_len):
        super().__init__()
        self.max_len = max_len
        self.register_buffer("table", sinusoidal_table(max_len, width), persistent=False)

    def forward(self, length):
        return self.table[:length]


class TransformerBlock(nn.Module):
    """Pre-norm self-attention, optional cross-attention to a memory, and a GELU MLP"""

    def __init__(self, width, heads, ff_size, cross_attention=False):
        super().__init__()
        self.norm_self = nn.LayerNorm(width)
        self.self_attn = nn.MultiheadAttention(width, heads, dropout=0.0, batch_first=True)
        self.norm_cross = nn.LayerNorm(width) if cross_attention else None
        self.cross_attn = (
            nn.MultiheadAttention(width, heads, dropout=0.0, batch_first=True) if cross_attention else None
        )
        self.norm_mlp = nn.LayerNorm(width)
        self.mlp = nn.Sequential(nn.Linear(width, ff_size), nn.GELU(), nn.Linear(ff_size, width))

    def forward(self, x, memory=None, key_padding_mask=None):
        h = self.norm_self(x)
        x = x + self.self_attn(h, h, h, key_padding_mask=key_padding_mask, need_weights=False)[0]
        if self.cross_attn is not None:
            h = self.norm_cross(x)
            x = x + self.cross_attn(h, memory, memory, need_weights=False)[0]
        return x + self.mlp(self.norm_mlp(x))


class LongSkipTransformer(nn.Module):
    """
    Stack of TransformerBlocks. With skip connections, the input of block i (i < layers // 2)
    is concatenated to the input of block layers-1-i and merged back to width by a linear layer.
    """

    def __init__(self, width, heads, layers, ff_size=None, cross_attention=False, skip_connections=True):
        super().__init__()
        if width % heads:
            raise ValueError(f"Width {width} is not divisible by {heads} heads")
        if layers < 1:
            raise ValueError(f"Need at least one layer, got {layers}")
        ff_size = ff_size or 2 * width
        self.layers = layers
        self.blocks = nn.ModuleList(
            [TransformerBlock(width, heads, ff_size, cross_attention) for _ in range(layers)]
        )
        self.skip_pairs = layers // 2 if skip_connections else 0
        self.merges = nn.ModuleList([nn.Linear(2 * width, width) for _ in range(self.skip_pairs)])
        self.norm = nn.LayerNorm(width)

    def forward(self, x, memory=None, key_padding_mask=None):
        skips = []
        for index, block in enumerate(self.blocks):
            partner = self.layers - 1 - index
            if index < self.skip_pairs:
                skips.append(x)
            elif partner < self.skip_pairs:
                x = self.merges[partner](torch.cat([x, skips.pop()], dim=-1))
            x = block(x, memory=memory, key_padding_mask=key_padding_mask)
        return self.norm(x)
