import torch.nn as nn


class CrossAttention(nn.Module):
    """Multi-head cross-attention over channel-first token sets.

    ``query`` is B x C x Tq, ``context`` is B x C x Tk; returns B x C x Tq. The last
    attention map (B x heads x Tq x Tk) is kept on ``self.attn`` for inspection.
    """

    def __init__(self, dim, heads=4, residual=False):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} is not divisible by {heads} heads")
        self.dim, self.heads = dim, heads
        self.head_dim = dim // heads
        self.residual = residual
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)
        self.attn = None

    def _split(self, x):
        b, t, _ = x.shape
        return x.view(b, t, self.heads, self.head_dim).transpose(1, 2)

    def forward(self, query, context):
        q_tok = query.transpose(1, 2)
        kv_tok = context.transpose(1, 2)
        q, k, v = self._split(self.q(q_tok)), self._split(self.k(kv_tok)), self._split(self.v(kv_tok))
        scores = q @ k.transpose(-1, -2) / self.head_dim ** 0.5
        attn = scores.softmax(dim=-1)
        self.attn = attn
        mixed = (attn @ v).transpose(1, 2).reshape(q_tok.shape[0], q_tok.shape[1], self.dim)
        out = self.out(mixed)
        if self.residual:
            out = out + q_tok
        return out.transpose(1, 2)
