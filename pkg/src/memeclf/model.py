"""Toy single-stream visual-linguistic transformer and ITM head mechanics.

Each token's input embedding is the sum of token, segment and position
embeddings plus a projection of the visual feature selected by the token's
visual index, so external-label tokens are explicitly linked to image
regions. The image-text-matching (ITM) head trained here can be transferred
into hateful-meme fine-tuning by swapping its two class weight rows, turning
"match" into "benign" and "mismatch" into "hateful".
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from .evaluate import PredictionSet, auroc
from .inputs import NUM_SEGMENTS

ITM_SEMANTICS = ("mismatch", "match")   # class 1 = caption matches image
MEME_SEMANTICS = ("benign", "hateful")  # challenge convention: label 1 = hateful


class TrainingDivergedError(RuntimeError):
    pass


class HeadSemanticsError(ValueError):
    pass


class CheckpointMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_h: int = 64
    n_l: int = 2
    n_a: int = 4
    d_f: int = 128
    d_v: int = 64
    max_len: int = 64
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        dims = (self.vocab_size, self.d_h, self.n_l, self.n_a, self.d_f,
                self.d_v, self.max_len)
        if any(d <= 0 for d in dims):
            raise ValueError(f"all dimensions must be positive: {self}")
        if self.d_h % self.n_a != 0:
            raise ValueError(f"d_h={self.d_h} not divisible by n_a={self.n_a}")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 10
    steps: int = 200
    seed: int = 0


class ClassifierHead(nn.Module):
    """Two-class linear head whose rows carry named semantics."""

    def __init__(self, d_h: int, class_semantics: Tuple[str, str]):
        super().__init__()
        if len(set(class_semantics)) != 2:
            raise ValueError(f"need two distinct class names: {class_semantics}")
        self.linear = nn.Linear(d_h, 2)
        self.class_semantics = tuple(class_semantics)

    def forward(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.linear(pooled)

    def class_index(self, name: str) -> int:
        try:
            return self.class_semantics.index(name)
        except ValueError:
            raise HeadSemanticsError(
                f"head has classes {self.class_semantics}, not {name!r}") from None


def swap_head_classes(head: ClassifierHead) -> ClassifierHead:
    """Exchange the two weight rows, bias entries and class names."""
    swapped = ClassifierHead(head.linear.in_features,
                             (head.class_semantics[1], head.class_semantics[0]))
    with torch.no_grad():
        swapped.linear.weight.copy_(head.linear.weight.flip(0))
        swapped.linear.bias.copy_(head.linear.bias.flip(0))
    return swapped


class EncoderBlock(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.attn = nn.MultiheadAttention(cfg.d_h, cfg.n_a, dropout=cfg.dropout,
                                          batch_first=True)
        self.norm1 = nn.LayerNorm(cfg.d_h)
        self.ffn = nn.Sequential(
            nn.Linear(cfg.d_h, cfg.d_f),
            nn.GELU(),
            nn.Linear(cfg.d_f, cfg.d_h),
        )
        self.norm2 = nn.LayerNorm(cfg.d_h)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x: torch.Tensor, key_padding_mask: torch.Tensor
                ) -> torch.Tensor:
        attn_out, _ = self.attn(x, x, x, key_padding_mask=key_padding_mask,
                                need_weights=False)
        x = self.norm1(x + self.drop(attn_out))
        x = self.norm2(x + self.drop(self.ffn(x)))
        return x


class VLModel(nn.Module):
    def __init__(self, cfg: ModelConfig,
                 class_semantics: Tuple[str, str] = MEME_SEMANTICS):
        super().__init__()
        torch.manual_seed(cfg.seed)
        self.cfg = cfg
        self.token_emb = nn.Embedding(cfg.vocab_size, cfg.d_h)
        self.segment_emb = nn.Embedding(NUM_SEGMENTS, cfg.d_h)
        self.position_emb = nn.Embedding(cfg.max_len, cfg.d_h)
        self.visual_proj = nn.Linear(cfg.d_v, cfg.d_h)
        self.emb_norm = nn.LayerNorm(cfg.d_h)
        self.drop = nn.Dropout(cfg.dropout)
        self.blocks = nn.ModuleList(EncoderBlock(cfg) for _ in range(cfg.n_l))
        self.pooler = nn.Linear(cfg.d_h, cfg.d_h)
        self.head = ClassifierHead(cfg.d_h, class_semantics)

    def backbone_parameters(self):
        head_params = set(id(p) for p in self.head.parameters())
        return [p for p in self.parameters() if id(p) not in head_params]

    def pooled(self, batch: Dict[str, torch.Tensor]) -> torch.Tensor:
        feats = batch["features"]  # (B, M, d_v)
        vi = batch["visual_index"]  # (B, L)
        gathered = torch.gather(
            feats, 1, vi.unsqueeze(-1).expand(-1, -1, feats.shape[-1]))
        x = (self.token_emb(batch["token_ids"])
             + self.segment_emb(batch["segment_ids"])
             + self.position_emb(batch["position_ids"])
             + self.visual_proj(gathered))
        x = self.drop(self.emb_norm(x))
        key_padding_mask = batch["attention_mask"] == 0
        for block in self.blocks:
            x = block(x, key_padding_mask)
        return torch.tanh(self.pooler(x[:, 0]))

    def forward(self, batch: Dict[str, torch.Tensor]) -> torch.Tensor:
        return self.head(self.pooled(batch))


def collate(examples: Sequence[dict], dtype=torch.float32
            ) -> Dict[str, torch.Tensor]:
    """Stack encoded examples; feature tables are zero-padded to equal rows.

    Each example: token_ids/segment_ids/position_ids/visual_index/
    attention_mask (int vectors) and features (rows x d_v, row 0 = whole image).
    """
    max_rows = max(ex["features"].shape[0] for ex in examples)
    d_v = examples[0]["features"].shape[1]
    feats = np.zeros((len(examples), max_rows, d_v), dtype=np.float64)
    for i, ex in enumerate(examples):
        feats[i, :ex["features"].shape[0]] = ex["features"]
    batch = {
        key: torch.as_tensor(
            np.stack([ex[key] for ex in examples]), dtype=torch.long)
        for key in ("token_ids", "segment_ids", "position_ids",
                    "visual_index", "attention_mask")
    }
    batch["features"] = torch.as_tensor(feats, dtype=dtype)
    return batch


def _batches(n: int, batch_size: int, generator: Optional[torch.Generator]):
    order = (torch.randperm(n, generator=generator).tolist()
             if generator is not None else list(range(n)))
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _train_steps(model: VLModel, examples: Sequence[dict],
                 labels: Sequence[int], cfg: TrainConfig, n_steps: int,
                 optimizer) -> List[float]:
    gen = torch.Generator().manual_seed(cfg.seed)
    losses = []
    model.train()
    step = 0
    while step < n_steps:
        for idx in _batches(len(examples), cfg.batch_size, gen):
            if step >= n_steps:
                break
            batch = collate([examples[i] for i in idx])
            target = torch.as_tensor([labels[i] for i in idx], dtype=torch.long)
            logits = model(batch)
            loss = nn.functional.cross_entropy(logits, target)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at step {step} (seed {cfg.seed})")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
            step += 1
    model.eval()
    return losses


def pretrain_itm(model: VLModel, corpus: Sequence[dict],
                 labels: Sequence[int], cfg: TrainConfig) -> VLModel:
    """Train the ITM head (and backbone) on matched/mismatched pairs.

    Labels: 1 = the caption belongs to the image, 0 = a foreign caption.
    """
    if model.head.class_semantics != ITM_SEMANTICS:
        model.head = ClassifierHead(model.cfg.d_h, ITM_SEMANTICS)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    _train_steps(model, corpus, labels, cfg, cfg.steps, optimizer)
    return model


def transfer_itm_head(pretrained: VLModel) -> VLModel:
    """Turn an ITM model into a hateful-meme classifier by swapping the head.

    The "match" weight row becomes class 0 (benign) and "mismatch" becomes
    class 1 (hateful); the backbone is untouched.
    """
    if pretrained.head.class_semantics != ITM_SEMANTICS:
        raise HeadSemanticsError(
            f"expected ITM head {ITM_SEMANTICS}, got "
            f"{pretrained.head.class_semantics}")
    model = copy.deepcopy(pretrained)
    swapped = swap_head_classes(model.head)
    swapped.class_semantics = MEME_SEMANTICS
    model.head = swapped
    model.eval()
    return model


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    dev_auroc: float


@dataclass
class FitResult:
    metrics: List[EpochMetrics] = field(default_factory=list)
    best_epoch: int = -1
    best_dev_auroc: float = float("-inf")
    best_state: Optional[dict] = None


def fit(model: VLModel, train_examples: Sequence[dict],
        train_labels: Sequence[int], dev_examples: Sequence[dict],
        dev_labels: Sequence[int], dev_ids: Sequence[int],
        cfg: TrainConfig) -> FitResult:
    """Minimize cross-entropy; track dev AUROC and keep the best checkpoint."""
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(cfg.seed)
    result = FitResult()
    for epoch in range(cfg.epochs):
        model.train()
        epoch_losses = []
        for idx in _batches(len(train_examples), cfg.batch_size, gen):
            batch = collate([train_examples[i] for i in idx])
            target = torch.as_tensor([train_labels[i] for i in idx],
                                     dtype=torch.long)
            loss = nn.functional.cross_entropy(model(batch), target)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss in epoch {epoch} (seed {cfg.seed})")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_losses.append(loss.item())
        preds = predict_proba(model, dev_examples, dev_ids)
        dev_auroc = auroc(preds, dict(zip(dev_ids, dev_labels)))
        result.metrics.append(EpochMetrics(epoch, float(np.mean(epoch_losses)),
                                           dev_auroc))
        if dev_auroc > result.best_dev_auroc:
            result.best_dev_auroc = dev_auroc
            result.best_epoch = epoch
            result.best_state = copy.deepcopy(model.state_dict())
    if result.best_state is not None:
        model.load_state_dict(result.best_state)
    model.eval()
    return result


def predict_proba(model: VLModel, examples: Sequence[dict],
                  ids: Sequence[int], positive_class: str = "hateful",
                  name: str = "model", batch_size: int = 64) -> PredictionSet:
    """Softmax probability of the positive class per meme, id-keyed."""
    pos = model.head.class_index(positive_class)
    model.eval()
    scores: Dict[int, float] = {}
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            chunk = examples[start:start + batch_size]
            probs = torch.softmax(model(collate(chunk)), dim=-1)[:, pos]
            for i, p in zip(ids[start:start + batch_size], probs.tolist()):
                scores[i] = p
    return PredictionSet(name=name, scores=scores)


def save_checkpoint(model: VLModel, vocab_hash: str, path) -> None:
    torch.save({
        "config": asdict(model.cfg),
        "vocab_hash": vocab_hash,
        "class_semantics": model.head.class_semantics,
        "state_dict": model.state_dict(),
    }, path)


def load_checkpoint(path, vocab_hash: str) -> VLModel:
    payload = torch.load(path, weights_only=False)
    if payload["vocab_hash"] != vocab_hash:
        raise CheckpointMismatchError(
            f"checkpoint {path} was trained with a different vocabulary")
    cfg = ModelConfig(**payload["config"])
    model = VLModel(cfg, tuple(payload["class_semantics"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
