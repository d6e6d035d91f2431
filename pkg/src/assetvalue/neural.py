"""Character-level transformer encoder that regresses ln(price).

Input layout (ids shown as tokens)::

    vanilla:    [CLS] n a m e [SEP] s u f f i x [SEP] [PAD] ...
    augmented:  [CLS] n a m e [SEP] s u f f i x [SEP] 4 0 7 [SEP] [PAD] ...

where the augmented variant appends the decimal TLD count of the name.
Training runs in two stages: all of train first, then the newest ``T``
transactions only.
"""
from __future__ import annotations

import base64
import enum
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .dataset import ParsedIdentifier, Transaction, parse_txn
from .errors import EmptyInput, SequenceTooLong, ShapeMismatch
from .knowledge import KnowledgeBase, tld_count

PAD, CLS, SEP, UNK, MASK = 0, 1, 2, 3, 4
SPECIALS = ("[PAD]", "[CLS]", "[SEP]", "[UNK]", "[MASK]")
DIGITS = "0123456789"
FORMAT_VERSION = 1


class Variant(str, enum.Enum):
    VANILLA = "vanilla"
    AUGMENTED = "augmented"


# -- tokenization -------------------------------------------------------------------


@dataclass(frozen=True)
class TokenizerVocab:
    chars: tuple  # id of chars[i] is len(SPECIALS) + i

    @property
    def size(self) -> int:
        return len(SPECIALS) + len(self.chars)

    def char_id(self, ch: str) -> int:
        try:
            return len(SPECIALS) + self._index[ch]
        except KeyError:
            return UNK

    @property
    def _index(self):
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {c: i for i, c in enumerate(self.chars)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def encode(self, text: str) -> list[int]:
        return [self.char_id(c) for c in text]


def build_vocab(train_txns, min_freq: int = 2) -> TokenizerVocab:
    """Characters seen at least ``min_freq`` times in train names and suffixes.

    Decimal digits are always included so TLD counts never encode to [UNK].
    """
    if not train_txns:
        raise EmptyInput("vocabulary needs training transactions")
    freq = Counter()
    for t in train_txns:
        p = parse_txn(t)
        freq.update(p.name.lower())
        freq.update(p.suffix.lower())
    chars = {c for c, k in freq.items() if k >= min_freq} | set(DIGITS)
    return TokenizerVocab(tuple(sorted(chars)))


@dataclass(frozen=True)
class InputSequence:
    ids: tuple
    mask: tuple

    @property
    def max_len(self) -> int:
        return len(self.ids)


def build_input(parsed: ParsedIdentifier, tld: int, variant: Variant, vocab: TokenizerVocab,
                max_len: int = 64) -> InputSequence:
    name = vocab.encode(parsed.name.lower())
    tail = [SEP] + vocab.encode(parsed.suffix.lower()) + [SEP]
    if Variant(variant) is Variant.AUGMENTED:
        if tld < 0:
            raise ValueError("TLD count must be >= 0")
        tail += vocab.encode(str(int(tld))) + [SEP]
    room = max_len - 1 - len(tail)
    if room < 0:
        raise SequenceTooLong(f"suffix/count segments need {len(tail) + 1} > {max_len} slots")
    ids = [CLS] + name[:room] + tail
    n = len(ids)
    return InputSequence(tuple(ids + [PAD] * (max_len - n)), tuple([1] * n + [0] * (max_len - n)))


def encode_transactions(txns, vocab, variant, kb: Optional[KnowledgeBase], max_len=64):
    """Token id and mask tensors of shape (n, max_len)."""
    seqs = []
    for t in txns:
        p = parse_txn(t)
        count = tld_count(kb, p.name) if kb is not None else 0
        seqs.append(build_input(p, count, variant, vocab, max_len))
    return batch_tensors(seqs)


def batch_tensors(seqs):
    ids = torch.tensor([s.ids for s in seqs], dtype=torch.long)
    mask = torch.tensor([s.mask for s in seqs], dtype=torch.bool)
    return ids, mask


# -- model --------------------------------------------------------------------------------


@dataclass
class ModelConfig:
    vocab_size: int
    max_len: int = 64
    d_model: int = 128
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 512
    dropout: float = 0.1


class SelfAttention(nn.Module):
    def __init__(self, d_model, n_heads, dropout):
        super().__init__()
        if d_model % n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        self.n_heads = n_heads
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.out = nn.Linear(d_model, d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, key_mask):
        b, n, d = x.shape
        h = self.n_heads
        q, k, v = self.qkv(x).view(b, n, 3, h, d // h).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-2, -1) / math.sqrt(d // h)
        scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        attn = self.drop(torch.softmax(scores, dim=-1))
        y = (attn @ v).transpose(1, 2).reshape(b, n, d)
        return self.out(y)


class EncoderLayer(nn.Module):
    """Pre-norm block: x + attn(LN(x)), then x + ffn(LN(x))."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.attn = SelfAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.ff = nn.Sequential(
            nn.Linear(cfg.d_model, cfg.d_ff),
            nn.GELU(),
            nn.Linear(cfg.d_ff, cfg.d_model),
        )
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, key_mask):
        x = x + self.drop(self.attn(self.norm1(x), key_mask))
        return x + self.drop(self.ff(self.norm2(x)))


class TransformerRegressor(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.pos_emb = nn.Embedding(cfg.max_len, cfg.d_model)
        self.emb_drop = nn.Dropout(cfg.dropout)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.n_layers))
        self.final_norm = nn.LayerNorm(cfg.d_model)
        self.head = nn.Linear(cfg.d_model, 1)
        # output bias of the tied masked-LM layer; unused by regression
        self.mlm_bias = nn.Parameter(torch.zeros(cfg.vocab_size))
        self.apply(_init_weights)

    def encode(self, ids, mask):
        if ids.dim() != 2 or ids.shape != mask.shape or ids.shape[1] > self.cfg.max_len:
            raise ShapeMismatch(f"ids {tuple(ids.shape)} / mask {tuple(mask.shape)}")
        pos = torch.arange(ids.shape[1], device=ids.device)
        x = self.emb_drop(self.tok_emb(ids) + self.pos_emb(pos))
        for layer in self.layers:
            x = layer(x, mask)
        return self.final_norm(x)

    def forward(self, ids, mask):
        return self.head(self.encode(ids, mask)[:, 0]).squeeze(-1)

    def mlm_logits(self, ids, mask):
        return self.encode(ids, mask) @ self.tok_emb.weight.T + self.mlm_bias


def _init_weights(m):
    if isinstance(m, nn.Linear):
        nn.init.normal_(m.weight, std=0.02)
        nn.init.zeros_(m.bias)
    elif isinstance(m, nn.Embedding):
        nn.init.normal_(m.weight, std=0.02)


def new_model(cfg: ModelConfig, seed: int = 0, dtype=torch.float32) -> TransformerRegressor:
    torch.manual_seed(seed)
    return TransformerRegressor(cfg).to(dtype)


@torch.no_grad()
def forward(model: TransformerRegressor, ids, mask, batch_size: int = 256) -> np.ndarray:
    """Evaluation-mode ln-price predictions."""
    was_training = model.training
    model.eval()
    outs = [model(ids[i:i + batch_size], mask[i:i + batch_size]) for i in range(0, len(ids), batch_size)]
    model.train(was_training)
    if not outs:
        return np.zeros(0)
    return torch.cat(outs).double().numpy()


# -- training -------------------------------------------------------------------------------


@dataclass
class FineTuneSchedule:
    stage1_epochs: int = 1
    stage2_epochs: int = 3
    T: int = 3000
    learning_rate: float = 1e-3
    batch_size: int = 64
    weight_decay: float = 0.01
    clip_norm: float = 1.0
    warmup_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.T < 0 or self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise ValueError("T and epoch counts must be >= 0")
        if not 0 <= self.warmup_frac < 1:
            raise ValueError("warmup_frac must be in [0, 1)")


def regression_loss(model, ids, mask, targets):
    """Mean squared error in log space, i.e. the batch MSLE."""
    return ((model(ids, mask) - targets) ** 2).mean()


@torch.no_grad()
def evaluate_loss(model, ids, mask, targets, batch_size: int = 256) -> float:
    preds = torch.from_numpy(forward(model, ids, mask, batch_size))
    return float(((preds - targets.double()) ** 2).mean())


def lr_factor(step: int, total: int, warmup_frac: float) -> float:
    """Multiplier for step ``step`` of ``total``: linear warmup, then linear decay toward zero."""
    warmup = min(math.ceil(warmup_frac * total), total - 1)
    if step < warmup:
        return (step + 1) / (warmup + 1)
    return (total - step) / (total - warmup)


def _run_stage(model, ids, mask, targets, epochs, schedule, stage, gen, log):
    n = len(ids)
    if epochs == 0 or n == 0:
        return
    total = epochs * math.ceil(n / schedule.batch_size)
    opt = torch.optim.AdamW(model.parameters(), lr=schedule.learning_rate,
                            weight_decay=schedule.weight_decay)
    model.train()
    step = 0
    for epoch in range(epochs):
        perm = torch.randperm(n, generator=gen)
        for start in range(0, n, schedule.batch_size):
            for group in opt.param_groups:
                group["lr"] = schedule.learning_rate * lr_factor(step, total, schedule.warmup_frac)
            b = perm[start:start + schedule.batch_size]
            loss = regression_loss(model, ids[b], mask[b], targets[b])
            opt.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(model.parameters(), schedule.clip_norm)
            opt.step()
            step += 1
            log.append((stage, epoch, step, loss.item()))
    model.eval()


def train_two_stage(model: TransformerRegressor, vocab: TokenizerVocab, train_txns,
                    schedule: FineTuneSchedule, variant: Variant = Variant.AUGMENTED,
                    kb: Optional[KnowledgeBase] = None):
    """Stage 1 over all of ``train_txns``, stage 2 over the newest ``T`` of them.

    Each stage gets a fresh AdamW optimizer whose learning rate warms up
    over the first ``warmup_frac`` of the stage's steps and then decays linearly to
    zero; without the warmup, the first bias-corrected Adam steps of stage 2
    undo much of stage 1. Gradients are clipped. Returns ``(model, log)`` with
    log rows ``(stage, epoch, step, loss)``.
    """
    if not train_txns:
        raise EmptyInput("no training transactions")
    ordered = sorted(train_txns, key=Transaction.sort_key)
    ids, mask = encode_transactions(ordered, vocab, variant, kb, model.cfg.max_len)
    dtype = next(model.parameters()).dtype
    targets = torch.tensor([math.log(t.price) for t in ordered], dtype=dtype)
    torch.manual_seed(schedule.seed)
    gen = torch.Generator().manual_seed(schedule.seed)
    log = []
    _run_stage(model, ids, mask, targets, schedule.stage1_epochs, schedule, 1, gen, log)
    T = min(schedule.T, len(ordered))
    if T:
        _run_stage(model, ids[-T:], mask[-T:], targets[-T:], schedule.stage2_epochs,
                   schedule, 2, gen, log)
    return model, log


@dataclass
class MlmConfig:
    mask_prob: float = 0.15
    epochs: int = 1
    learning_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 0


def mask_tokens(ids, mask, vocab_size, mask_prob, gen):
    """BERT-style corruption of non-special tokens.

    Returns ``(corrupted_ids, labels)``; labels are -100 where no prediction
    is required.
    """
    labels = ids.clone()
    candidates = mask & (ids >= len(SPECIALS))
    chosen = (torch.rand(ids.shape, generator=gen) < mask_prob) & candidates
    labels[~chosen] = -100
    corrupted = ids.clone()
    roll = torch.rand(ids.shape, generator=gen)
    to_mask = chosen & (roll < 0.8)
    to_random = chosen & (roll >= 0.8) & (roll < 0.9)
    corrupted[to_mask] = MASK
    random_ids = torch.randint(len(SPECIALS), vocab_size, ids.shape, generator=gen)
    corrupted[to_random] = random_ids[to_random]
    return corrupted, labels


def mlm_loss(model, ids, mask, labels):
    if not (labels != -100).any():
        return None
    logits = model.mlm_logits(ids, mask)
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), labels.reshape(-1), ignore_index=-100)


def pretrain_mlm(model: TransformerRegressor, ids, mask, config: MlmConfig = MlmConfig()):
    """Masked-LM pretraining on an identifier corpus with tied output embeddings.

    Batches without any masked position are skipped, so ``mask_prob=0``
    leaves the weights untouched. Returns ``(model, losses)``.
    """
    n = len(ids)
    if n == 0:
        raise EmptyInput("empty pretraining corpus")
    gen = torch.Generator().manual_seed(config.seed)
    torch.manual_seed(config.seed)
    opt = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
    losses = []
    model.train()
    for _ in range(config.epochs):
        perm = torch.randperm(n, generator=gen)
        for start in range(0, n, config.batch_size):
            b = perm[start:start + config.batch_size]
            corrupted, labels = mask_tokens(ids[b], mask[b], model.cfg.vocab_size,
                                            config.mask_prob, gen)
            loss = mlm_loss(model, corrupted, mask[b], labels)
            if loss is None:
                losses.append(0.0)
                continue
            opt.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(model.parameters(), 1.0)
            opt.step()
            losses.append(loss.item())
    model.eval()
    return model, losses


@torch.no_grad()
def evaluate_mlm_loss(model, ids, mask, mask_prob=0.15, seed=0) -> float:
    gen = torch.Generator().manual_seed(seed)
    corrupted, labels = mask_tokens(ids, mask, model.cfg.vocab_size, mask_prob, gen)
    model.eval()
    loss = mlm_loss(model, corrupted, mask, labels)
    return 0.0 if loss is None else float(loss)


# -- gradient check -------------------------------------------------------------------------


def _sample_coordinates(params, n_samples, rng):
    """Every tensor gets one coordinate, the rest are spread uniformly."""
    sizes = np.array([p.numel() for p in params])
    if n_samples <= 0 or sizes.sum() == 0:
        return []
    coords = [(i, int(rng.integers(s))) for i, s in enumerate(sizes)][:n_samples]
    flat = rng.choice(int(sizes.sum()), size=max(0, n_samples - len(coords)), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    for f in np.sort(flat):
        i = int(np.searchsorted(offsets, f, side="right") - 1)
        coords.append((i, int(f - offsets[i])))
    return coords


def grad_check(model: TransformerRegressor, ids, mask, targets, n_samples: int = 200,
               step: float = 1e-4, seed: int = 0, corrupt=None, floor: float = 1e-8) -> float:
    """Max relative error between autograd and central finite differences.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``. ``corrupt`` may
    rewrite the analytic gradients (dict name -> tensor) before comparison,
    which serves as a negative control.
    """
    model.eval()
    named = [(k, p) for k, p in model.named_parameters() if k != "mlm_bias"]
    params = [p for _, p in named]
    model.zero_grad()
    regression_loss(model, ids, mask, targets).backward()
    grads = {k: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
             for k, p in named}
    model.zero_grad()
    if corrupt is not None:
        corrupt(grads)
    rng = np.random.default_rng(seed)
    worst = 0.0
    with torch.no_grad():
        for i, j in _sample_coordinates(params, n_samples, rng):
            name, p = named[i]
            flat = p.view(-1)
            orig = flat[j].item()
            flat[j] = orig + step
            up = regression_loss(model, ids, mask, targets).item()
            flat[j] = orig - step
            down = regression_loss(model, ids, mask, targets).item()
            flat[j] = orig
            numeric = (up - down) / (2 * step)
            analytic = grads[name].view(-1)[j].item()
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            worst = max(worst, rel)
    return worst


# -- checkpoints --------------------------------------------------------------------------------


def checkpoint_to_json(model: TransformerRegressor, vocab: TokenizerVocab, variant: Variant,
                       extra=None) -> dict:
    tensors = {}
    for name, t in model.state_dict().items():
        arr = t.detach().cpu().contiguous().numpy()
        tensors[name] = {
            "dtype": str(arr.dtype),
            "shape": list(arr.shape),
            "data": base64.b64encode(arr.astype(arr.dtype.newbyteorder("<")).tobytes()).decode("ascii"),
        }
    out = {
        "format_version": FORMAT_VERSION,
        "model_type": "transformer",
        "variant": Variant(variant).value,
        "config": asdict(model.cfg),
        "vocab": list(vocab.chars),
        "tensors": tensors,
    }
    if extra:
        out.update(extra)
    return out


def checkpoint_from_json(obj: dict):
    if obj.get("format_version") != FORMAT_VERSION or obj.get("model_type") != "transformer":
        raise ValueError("not a transformer checkpoint")
    cfg = ModelConfig(**obj["config"])
    dtypes = {v["dtype"] for v in obj["tensors"].values() if v["dtype"].startswith("float")}
    dtype = torch.float64 if "float64" in dtypes else torch.float32
    model = TransformerRegressor(cfg).to(dtype)
    state = {}
    for name, entry in obj["tensors"].items():
        arr = np.frombuffer(base64.b64decode(entry["data"]), dtype=np.dtype(entry["dtype"]).newbyteorder("<"))
        state[name] = torch.from_numpy(arr.astype(entry["dtype"]).reshape(entry["shape"]).copy())
    model.load_state_dict(state)
    model.eval()
    return model, TokenizerVocab(tuple(obj["vocab"])), Variant(obj["variant"])


def dumps_checkpoint(model, vocab, variant, extra=None) -> str:
    return json.dumps(checkpoint_to_json(model, vocab, variant, extra), sort_keys=True)
