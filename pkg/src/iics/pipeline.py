"""Alternating intra-camera / inter-camera pseudo-label training.

Each round clusters every camera separately and trains one classifier head
per camera on a shared encoder, then clusters all samples with the
inter-camera similarity (feature cosine plus a mu-weighted Jaccard term on
the concatenated per-camera class scores) and trains a global head with
cross entropy plus batch-hard triplet loss.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .clustering import ClusterConfig, agglomerate, cluster_quality
from .core import KIND_INTER, Dataset, SimilarityMatrix, cosine_matrix, l2_normalize_rows, spawn_rngs
from .evaluation import RetrievalProtocol, cmc_map, write_metrics
from .nn import (
    ClassifierHead,
    EncoderModel,
    Sgd,
    SgdConfig,
    batch_hard_triplet,
    classify_scores,
    save_checkpoint,
    softmax_ce,
)
from .similarity import (
    InterSimConfig,
    effective_rerank_params,
    inter_camera_similarity,
    jaccard_matrix,
    k_reciprocal_rerank,
)
from .synthgen import make_query_gallery, split_by_camera

log = logging.getLogger(__name__)

ABLATIONS = ("full", "stage1-only", "cosine-inter", "inter-only", "jaccard-inter")
# which representation feeds clustering and retrieval: the non-negative
# pooled features ahead of the neck, or the standardized neck outputs
FEATURES = ("pooled", "neck")


class TrainingDiverged(FloatingPointError):
    def __init__(self, stage: str, round_idx: int, epoch: int, batch: int, detail: str = ""):
        self.stage, self.round, self.epoch, self.batch = stage, round_idx, epoch, batch
        super().__init__(
            f"non-finite loss in {stage} stage: round {round_idx}, epoch {epoch}, "
            f"batch {batch}{': ' + detail if detail else ''}"
        )


@dataclass(frozen=True)
class PipelineConfig:
    rounds: int = 5
    epochs_intra: int = 2
    epochs_inter: int = 2
    k_intra_per_camera: int = 40
    k_inter: int = 48
    batch_intra: int = 8
    P: int = 8
    K: int = 4
    mu0: float = 0.02
    mu_decay_power: float = 0.9
    lambda_triplet: float = 1.0
    margin: float = 0.3
    sgd_intra: SgdConfig = SgdConfig(lr_base=0.01, lr_heads=0.1, max_grad_norm=5.0)
    sgd_inter: SgdConfig = SgdConfig(lr_base=0.02, lr_heads=0.2, max_grad_norm=5.0)
    linkage: str = "average"
    mix_channels: int = 16
    dim: int = 32
    aibn_sharing: str = "block"
    alpha_init: float = 0.5
    learn_alpha: bool = True
    head_init_std: float = 0.001
    ablation: str = "full"
    features: str = "pooled"
    seed: int = 0

    def __post_init__(self) -> None:
        checks = [
            ("rounds", self.rounds >= 1),
            ("epochs_intra", self.epochs_intra >= 0),
            ("epochs_inter", self.epochs_inter >= 0),
            ("k_intra_per_camera", self.k_intra_per_camera >= 2),
            ("k_inter", self.k_inter >= 2),
            ("batch_intra", self.batch_intra >= 2),
            ("P", self.P >= 2),
            ("K", self.K >= 2),
            ("mu0", np.isfinite(self.mu0) and self.mu0 >= 0),
            ("mu_decay_power", self.mu_decay_power >= 0),
            ("lambda_triplet", self.lambda_triplet >= 0),
            ("margin", self.margin >= 0),
            ("dim", self.dim >= 2),
            ("mix_channels", self.mix_channels >= 1),
            ("ablation", self.ablation in ABLATIONS),
            ("features", self.features in FEATURES),
        ]
        for name, ok in checks:
            if not ok:
                raise ValueError(f"invalid PipelineConfig field {name!r}: {getattr(self, name)!r}")
        ClusterConfig(self.k_inter, self.linkage)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RoundReport:
    round: int
    mu: float
    intra_quality: list[dict] = field(default_factory=list)
    inter_quality: dict | None = None
    intra_losses: list[float] = field(default_factory=list)
    inter_losses: list[float] = field(default_factory=list)
    alpha: list[float] = field(default_factory=list)
    metrics: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StageResult:
    assignments: list
    losses: list[float]
    quality: list[dict] | dict | None
    heads: list[ClassifierHead]


def mu_schedule(t: int, cfg: PipelineConfig) -> float:
    """Poly decay of the Jaccard weight over the round horizon."""
    if not 0 <= t < cfg.rounds:
        raise ValueError(f"round {t} outside [0, {cfg.rounds})")
    return cfg.mu0 * (1.0 - t / cfg.rounds) ** cfg.mu_decay_power


def similarity_features(model: EncoderModel, x: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    if cfg.features == "pooled":
        return model.pooled(x)
    return model.encode(x, "eval")


def build_model(cfg: PipelineConfig, ds: Dataset, rng: np.random.Generator) -> EncoderModel:
    if ds.embedding_mode:
        return EncoderModel(ds.channels, ds.length, raw_input=True)
    return EncoderModel(
        ds.channels, ds.length, mix_channels=cfg.mix_channels, dim=cfg.dim,
        sharing=cfg.aibn_sharing, alpha_init=cfg.alpha_init,
        learn_alpha=cfg.learn_alpha, rng=rng,
    )


def base_similarity(E: np.ndarray, sim_cfg: InterSimConfig) -> SimilarityMatrix:
    if sim_cfg.base_kind == "reranked":
        k1, k2 = effective_rerank_params(len(E), sim_cfg.k1, sim_cfg.k2)
        return k_reciprocal_rerank(E, k1, k2, sim_cfg.lambda_rr)
    return cosine_matrix(E)


def _quality(assign, truth) -> dict | None:
    if truth is None:
        return None
    nmi, purity = cluster_quality(assign, truth)
    return {"k": int(assign.k), "nmi": nmi, "purity": purity}


def _train_step(model: EncoderModel, opt: Sgd, x: np.ndarray, head: ClassifierHead,
                head_name: str, labels: np.ndarray, triplet: tuple[float, float] | None):
    f, cache = model.forward(x, "train")
    loss, g = softmax_ce(head, f, labels)
    df = g["f"]
    if triplet is not None:
        lam, margin = triplet
        t_loss, t_grad = batch_hard_triplet(f, labels, margin)
        loss += lam * t_loss
        df = df + lam * t_grad
    if not np.isfinite(loss):
        return loss
    grads = model.backward(df, cache)
    base, neck = model.param_groups()
    opt.step(base, grads, "base")
    opt.step(neck, grads, "head")
    opt.step(head.parameters(head_name),
             {f"{head_name}.w": g["w"], f"{head_name}.b": g["b"]}, "head")
    return loss


def intra_batches(parts: list[np.ndarray], batch: int, rng: np.random.Generator):
    """Per-camera shuffled mini-batches interleaved round-robin across
    cameras. A trailing singleton is folded into the previous batch."""
    queues = []
    for idx in parts:
        perm = rng.permutation(idx)
        chunks = [perm[i:i + batch] for i in range(0, perm.size, batch)]
        if len(chunks) > 1 and chunks[-1].size < 2:
            tail = chunks.pop()
            chunks[-1] = np.concatenate([chunks[-1], tail])
        queues.append(chunks)
    order = []
    for step in range(max(len(q) for q in queues)):
        for c, q in enumerate(queues):
            if step < len(q):
                order.append((c, q[step]))
    return order


def intra_stage(model: EncoderModel, ds: Dataset, cfg: PipelineConfig,
                rng: np.random.Generator, sim_cfg: InterSimConfig | None = None,
                round_idx: int = 0) -> StageResult:
    sim_cfg = sim_cfg or InterSimConfig()
    parts = split_by_camera(ds)
    E = similarity_features(model, ds.signals, cfg)
    assignments, quality, heads = [], [], []
    local_labels = np.empty(len(ds), dtype=np.int64)
    for c, idx in enumerate(parts):
        k = min(cfg.k_intra_per_camera, idx.size)
        assign = agglomerate(base_similarity(E[idx], sim_cfg), ClusterConfig(k, cfg.linkage))
        assignments.append(assign)
        local_labels[idx] = assign.labels
        truth = None if ds.identities is None else ds.identities[idx]
        quality.append(_quality(assign, truth))
        heads.append(ClassifierHead.init(k, model.dim, rng, camera=c, std=cfg.head_init_std))

    opt = Sgd(cfg.sgd_intra)
    losses = []
    for epoch in range(cfg.epochs_intra):
        total, count = 0.0, 0
        for b, (c, batch) in enumerate(intra_batches(parts, cfg.batch_intra, rng)):
            loss = _train_step(model, opt, ds.signals[batch], heads[c], f"cam{c}",
                               local_labels[batch], None)
            if not np.isfinite(loss):
                raise TrainingDiverged("intra", round_idx, epoch, b)
            total += loss * batch.size
            count += batch.size
        losses.append(total / count)
    return StageResult(assignments, losses, quality, heads)


def pk_batches(labels: np.ndarray, P: int, K: int, rng: np.random.Generator) -> list[np.ndarray]:
    """One epoch of P clusters x K samples batches.

    Every sample is drawn at least once; clusters smaller than K are padded
    by sampling with replacement; each batch holds P distinct clusters.
    """
    clusters = np.unique(labels)
    if clusters.size < P:
        raise ValueError(f"need at least P={P} clusters, got {clusters.size}")
    members = {int(c): np.flatnonzero(labels == c) for c in clusters}

    def chunk_of(c: int) -> np.ndarray:
        m = members[c]
        return rng.choice(m, size=K, replace=m.size < K)

    pending: dict[int, list[np.ndarray]] = {}
    for c in clusters.tolist():
        perm = rng.permutation(members[c])
        chunks = [perm[i:i + K] for i in range(0, perm.size, K)]
        if chunks[-1].size < K:
            fill = rng.choice(members[c], size=K - chunks[-1].size, replace=True)
            chunks[-1] = np.concatenate([chunks[-1], fill])
        pending[c] = chunks

    batches = []
    while pending:
        avail = np.array(sorted(pending))
        if avail.size >= P:
            pick = rng.choice(avail, size=P, replace=False)
            fillers = []
        else:
            others = np.setdiff1d(clusters, avail)
            pick = avail
            fillers = rng.choice(others, size=P - avail.size, replace=False).tolist()
        parts = []
        for c in pick.tolist():
            parts.append(pending[c].pop())
            if not pending[c]:
                del pending[c]
        parts.extend(chunk_of(c) for c in fillers)
        batches.append(np.concatenate(parts))
    return batches


def inter_similarity(model: EncoderModel, ds: Dataset, camera_heads: list[ClassifierHead],
                     mu: float, sim_cfg: InterSimConfig, cfg: PipelineConfig,
                     jaccard_only: bool = False) -> SimilarityMatrix:
    """Similarity features give the base term; the camera heads score the
    neck outputs they were trained on."""
    if jaccard_only:
        delta = jaccard_matrix(classify_scores(camera_heads, model.encode(ds.signals, "eval")))
        return SimilarityMatrix(delta, KIND_INTER)
    base = base_similarity(similarity_features(model, ds.signals, cfg), sim_cfg)
    if mu == 0 or not camera_heads:
        return inter_camera_similarity(base, np.zeros_like(base.values), 0.0)
    delta = jaccard_matrix(classify_scores(camera_heads, model.encode(ds.signals, "eval")))
    cams = ds.cameras if sim_cfg.cross_camera_only else None
    return inter_camera_similarity(base, delta, mu, cams)


def inter_stage(model: EncoderModel, ds: Dataset, camera_heads: list[ClassifierHead],
                cfg: PipelineConfig, mu_t: float, rng: np.random.Generator,
                sim_cfg: InterSimConfig | None = None, round_idx: int = 0,
                jaccard_only: bool = False) -> StageResult:
    sim_cfg = sim_cfg or InterSimConfig()
    if cfg.k_inter < 2:
        raise ValueError("k_inter must be >= 2")
    S = inter_similarity(model, ds, camera_heads, mu_t, sim_cfg, cfg, jaccard_only)
    k = min(cfg.k_inter, len(ds))
    assign = agglomerate(S, ClusterConfig(k, cfg.linkage))
    head = ClassifierHead.init(k, model.dim, rng, std=cfg.head_init_std)
    opt = Sgd(cfg.sgd_inter)
    losses = []
    for epoch in range(cfg.epochs_inter):
        total, count = 0.0, 0
        for b, batch in enumerate(pk_batches(assign.labels, cfg.P, cfg.K, rng)):
            loss = _train_step(model, opt, ds.signals[batch], head, "global",
                               assign.labels[batch], (cfg.lambda_triplet, cfg.margin))
            if not np.isfinite(loss):
                raise TrainingDiverged("inter", round_idx, epoch, b)
            total += loss
            count += 1
        losses.append(total / count)
    return StageResult([assign], losses, _quality(assign, ds.identities), [head])


def evaluate(model: EncoderModel, ds: Dataset, protocol: RetrievalProtocol,
             cfg: PipelineConfig | None = None) -> dict:
    U = l2_normalize_rows(similarity_features(model, ds.signals, cfg or PipelineConfig()))
    S_qg = U[protocol.query] @ U[protocol.gallery].T
    return cmc_map(S_qg, protocol, ds.identities, ds.cameras).to_metrics()


def run(
    cfg: PipelineConfig,
    ds: Dataset,
    sim_cfg: InterSimConfig | None = None,
    out_dir: str | Path | None = None,
    query_fraction: float = 0.25,
    callback: Callable[[str, int, EncoderModel], None] | None = None,
) -> tuple[EncoderModel, list[RoundReport]]:
    """Full training loop. ``callback(event, round, model)`` fires on
    "init", "intra" and "inter" events."""
    sim_cfg = sim_cfg or InterSimConfig()
    if cfg.ablation != "inter-only":
        ds.check_min_per_camera(cfg.k_intra_per_camera)
    if cfg.k_inter > len(ds):
        raise ValueError(f"k_inter={cfg.k_inter} exceeds dataset size {len(ds)}")
    model_rng, intra_rng, inter_rng, eval_rng = spawn_rngs(cfg.seed, 4)
    model = build_model(cfg, ds, model_rng)
    protocol = None
    if ds.identities is not None:
        q, g = make_query_gallery(ds, eval_rng, query_fraction)
        protocol = RetrievalProtocol(q, g)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if callback:
        callback("init", -1, model)

    reports: list[RoundReport] = []
    for t in range(cfg.rounds):
        mu_t = mu_schedule(t, cfg)
        report = RoundReport(round=t, mu=mu_t)
        camera_heads: list[ClassifierHead] = []
        if cfg.ablation != "inter-only":
            res = intra_stage(model, ds, cfg, intra_rng, sim_cfg, t)
            camera_heads = res.heads
            report.intra_quality = [q for q in res.quality if q is not None]
            report.intra_losses = res.losses
            if callback:
                callback("intra", t, model)
        if cfg.ablation != "stage1-only":
            stage_mu = mu_t if cfg.ablation == "full" else 0.0
            res = inter_stage(model, ds, camera_heads, cfg, stage_mu, inter_rng, sim_cfg, t,
                              jaccard_only=cfg.ablation == "jaccard-inter")
            report.inter_quality = res.quality
            report.inter_losses = res.losses
            report.mu = stage_mu
            camera_heads = camera_heads + res.heads
            if callback:
                callback("inter", t, model)
        report.alpha = model.alpha_values()
        if protocol is not None:
            report.metrics = evaluate(model, ds, protocol, cfg)
        log.info("round %d: %s", t, report.metrics)
        reports.append(report)
        if out is not None:
            (out / f"round_{t}.json").write_text(
                json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
            save_checkpoint(out / f"round_{t}.ckpt", model, camera_heads)
    if out is not None:
        save_checkpoint(out / "model.ckpt", model)
        if reports[-1].metrics is not None:
            write_metrics(out / "metrics.json", reports[-1].metrics)
    return model, reports


def with_overrides(cfg: PipelineConfig, **kw) -> PipelineConfig:
    return replace(cfg, **kw)
