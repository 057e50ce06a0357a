"""Toy-scale exposure-regression (AET) and threshold-classifier (PTC) nets.

Both share a fully convolutional backbone: a VGG-style encoder whose
post-pool feature maps each feed a strided multiscale branch, branch
outputs concatenated at 1/8 resolution, and a three-block upsampling
decoder back to input resolution. The regression net applies the backbone
to two inputs with shared weights and regresses the per-pixel shift from
their concatenated activations; the classifier reuses those weights for a
single input with a dropout + 3-way softmax head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .datagen import DatasetRecord, augment as augment_sample, make_aet_pair, make_ptc_batch
from .nn import (
    AdamState,
    BatchNorm,
    Conv2d,
    LrSchedule,
    MaxPool2x2,
    ReLU,
    Sequential,
    Softmax,
    SpatialDropout,
    Upsample2x,
    accumulate,
    adam_step,
    concat_backward,
    concat_forward,
    focal_loss,
    load_checkpoint,
    lr_at,
    mse_loss,
    save_checkpoint,
)

# Branch outputs and the decoder input sit at 1/8 of the input resolution
# (three 2x decoder blocks recover the full size).
BRANCH_DOWNSAMPLE = 8
BRANCH_OUT_CHANNELS = 3
DROPOUT_P = 0.75


@dataclass(frozen=True)
class BackboneConfig:
    input_size: int = 64
    encoder_blocks: int = 4
    base_channels: int = 16
    multiscale_channels: int = 32
    convs_per_block: int = 2
    bn_momentum: float = 0.99

    def __post_init__(self):
        if self.encoder_blocks < 1:
            raise ValueError("need at least one encoder block")
        if self.input_size % (2**self.encoder_blocks) != 0:
            raise ValueError(
                f"input_size {self.input_size} not divisible by 2^{self.encoder_blocks}"
            )
        if self.input_size % BRANCH_DOWNSAMPLE != 0:
            raise ValueError(f"input_size must be divisible by {BRANCH_DOWNSAMPLE}")

    @property
    def encoder_widths(self) -> list[int]:
        # doubling widths, capped at 8x base as in VGG-style encoders
        return [self.base_channels * 2 ** min(i, 3) for i in range(self.encoder_blocks)]

    @property
    def decoder_widths(self) -> list[int]:
        rev = list(reversed(self.encoder_widths))[1:]
        while len(rev) < 3:
            rev.append(rev[-1] if rev else self.base_channels)
        return rev[:3]


def freeze_stage_names(config: BackboneConfig) -> list[str]:
    """Valid freeze boundaries, shallow to deep."""
    return (
        ["none"]
        + [f"block{i + 1}_pool" for i in range(config.encoder_blocks)]
        + ["concatenate"]
    )


class Backbone:
    """Encoder + multiscale branches + decoder with explicit backward."""

    def __init__(self, config: BackboneConfig, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        widths = config.encoder_widths
        self.enc_blocks = []
        cin = 3
        for i, wd in enumerate(widths):
            layers = []
            for j in range(config.convs_per_block):
                layers += [
                    Conv2d(cin, wd, 3, 1, rng, f"enc{i}.conv{j}", dtype),
                    BatchNorm(wd, f"enc{i}.bn{j}", dtype, config.bn_momentum),
                    ReLU(),
                ]
                cin = wd
            layers.append(MaxPool2x2())
            self.enc_blocks.append(Sequential(layers))

        mc = config.multiscale_channels
        self.branches = []
        for i, wd in enumerate(widths):
            pool_down = 2 ** (i + 1)
            stride = max(1, BRANCH_DOWNSAMPLE // pool_down)
            layers = [
                Conv2d(wd, mc, 3, stride, rng, f"branch{i}.conv0", dtype),
                BatchNorm(mc, f"branch{i}.bn0", dtype, config.bn_momentum),
                ReLU(),
                Conv2d(mc, mc, 1, 1, rng, f"branch{i}.conv1", dtype),
                BatchNorm(mc, f"branch{i}.bn1", dtype, config.bn_momentum),
                ReLU(),
                Conv2d(mc, BRANCH_OUT_CHANNELS, 1, 1, rng, f"branch{i}.conv2", dtype),
                BatchNorm(BRANCH_OUT_CHANNELS, f"branch{i}.bn2", dtype, config.bn_momentum),
                ReLU(),
            ]
            # taps deeper than the shared branch resolution upsample back to it
            if pool_down > BRANCH_DOWNSAMPLE:
                layers += [Upsample2x() for _ in range(int(math.log2(pool_down // BRANCH_DOWNSAMPLE)))]
            self.branches.append(Sequential(layers))

        dec_layers = []
        cin_d = BRANCH_OUT_CHANNELS * len(widths)
        for j, wd in enumerate(config.decoder_widths):
            dec_layers += [
                Upsample2x(),
                Conv2d(cin_d, wd, 3, 1, rng, f"dec{j}.conv0", dtype),
                BatchNorm(wd, f"dec{j}.bn0", dtype, config.bn_momentum),
                ReLU(),
                Conv2d(wd, wd, 1, 1, rng, f"dec{j}.conv1", dtype),
                BatchNorm(wd, f"dec{j}.bn1", dtype, config.bn_momentum),
                ReLU(),
            ]
            cin_d = wd
        self.decoder = Sequential(dec_layers)
        self.out_channels = cin_d

    def forward(self, x, training=False, rng=None):
        enc_caches, taps = [], []
        h = x
        for blk in self.enc_blocks:
            h, c = blk.forward(h, training=training, rng=rng)
            enc_caches.append(c)
            taps.append(h)
        branch_outs, branch_caches = [], []
        for br, tap in zip(self.branches, taps):
            o, c = br.forward(tap, training=training, rng=rng)
            branch_outs.append(o)
            branch_caches.append(c)
        cat, sizes = concat_forward(branch_outs)
        out, dec_cache = self.decoder.forward(cat, training=training, rng=rng)
        return out, (enc_caches, branch_caches, sizes, dec_cache)

    def backward(self, gy, cache):
        enc_caches, branch_caches, sizes, dec_cache = cache
        gcat = self.decoder.backward(gy, dec_cache)
        gbranches = concat_backward(gcat, sizes)
        gtaps = [
            br.backward(g, c) for br, g, c in zip(self.branches, gbranches, branch_caches)
        ]
        gnext = None
        for i in reversed(range(len(self.enc_blocks))):
            g = gtaps[i] if gnext is None else gtaps[i] + gnext
            gnext = self.enc_blocks[i].backward(g, enc_caches[i])
        return gnext

    def branch_output_shapes(self, batch=1):
        s = self.config.input_size // BRANCH_DOWNSAMPLE
        return [(batch, s, s, BRANCH_OUT_CHANNELS)] * len(self.branches)

    def sequentials(self):
        return self.enc_blocks + self.branches + [self.decoder]

    def params(self):
        out = []
        for seq in self.sequentials():
            out.extend(seq.params())
        return out

    def buffers(self):
        out = []
        for seq in self.sequentials():
            out.extend(seq.buffers())
        return out

    def freeze(self, stage: str) -> None:
        """Mark parameters up to and including ``stage`` as non-trainable."""
        names = freeze_stage_names(self.config)
        if stage not in names:
            raise ValueError(f"unknown freeze stage {stage!r}; one of {names}")
        if stage == "none":
            scopes = []
        elif stage == "concatenate":
            scopes = self.enc_blocks + self.branches
        else:
            depth = int(stage.removeprefix("block").removesuffix("_pool"))
            scopes = self.enc_blocks[:depth]
        for seq in scopes:
            for layer in seq.layers:
                for p in layer.params():
                    p.trainable = False
                if isinstance(layer, BatchNorm):
                    layer.freeze_stats = True


class _ModelBase:
    def params(self):
        raise NotImplementedError

    def buffers(self):
        raise NotImplementedError

    def named_arrays(self) -> dict[str, np.ndarray]:
        arrays = {p.name: p.value for p in self.params()}
        arrays.update({name: buf for name, buf in self.buffers()})
        return arrays

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.named_arrays().items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        own = self.named_arrays()
        missing = set(own) - set(arrays)
        if missing:
            raise ValueError(f"missing arrays: {sorted(missing)[:5]}...")
        for name, arr in own.items():
            arr[...] = arrays[name].reshape(arr.shape)

    def zero_grads(self):
        for p in self.params():
            p.zero_grad()


class AetModel(_ModelBase):
    """Two-input shift regressor: shared backbone, linear 1-channel head."""

    def __init__(self, config: BackboneConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        rng = np.random.default_rng([seed, 0])
        self.backbone = Backbone(config, rng, dtype)
        self.head = Conv2d(2 * self.backbone.out_channels, 1, 3, 1, rng, "aet_head.conv", dtype)

    def forward(self, a, b, training=False, rng=None):
        ya, ca = self.backbone.forward(a, training=training, rng=rng)
        yb, cb = self.backbone.forward(b, training=training, rng=rng)
        cat, sizes = concat_forward([ya, yb])
        out, hc = self.head.forward(cat, training=training, rng=rng)
        return out, (ca, cb, sizes, hc)

    def backward(self, gy, cache):
        ca, cb, sizes, hc = cache
        gcat, pgrads = self.head.backward(gy, hc)
        accumulate(pgrads)
        ga, gb = concat_backward(gcat, sizes)
        # shared weights: both paths accumulate into the same params
        self.backbone.backward(ga, ca)
        self.backbone.backward(gb, cb)

    def predict(self, a, b):
        return self.forward(a, b, training=False)[0]

    def params(self):
        return self.backbone.params() + self.head.params()

    def buffers(self):
        return self.backbone.buffers()


class PtcModel(_ModelBase):
    """Single-input 3-class dense classifier with a dropout + softmax head."""

    def __init__(
        self,
        config: BackboneConfig,
        seed: int = 0,
        backbone: Backbone | None = None,
        dtype=np.float32,
    ):
        self.config = config
        rng = np.random.default_rng([seed, 1])
        self.backbone = backbone if backbone is not None else Backbone(config, rng, dtype)
        self.dropout = SpatialDropout(DROPOUT_P)
        self.head = Conv2d(self.backbone.out_channels, 3, 3, 1, rng, "ptc_head.conv", dtype)
        self.softmax = Softmax()

    def forward(self, x, training=False, rng=None):
        h, bc = self.backbone.forward(x, training=training, rng=rng)
        h, dc = self.dropout.forward(h, training=training, rng=rng)
        h, hc = self.head.forward(h, training=training, rng=rng)
        probs, sc = self.softmax.forward(h, training=training, rng=rng)
        return probs, (bc, dc, hc, sc)

    def backward(self, gprobs, cache):
        bc, dc, hc, sc = cache
        g, _ = self.softmax.backward(gprobs, sc)
        g, pgrads = self.head.backward(g, hc)
        accumulate(pgrads)
        g, _ = self.dropout.backward(g, dc)
        self.backbone.backward(g, bc)

    def predict(self, x):
        return self.forward(x, training=False)[0]

    def params(self):
        return self.backbone.params() + self.head.params()

    def buffers(self):
        return self.backbone.buffers()


def build_ptc_from_aet(aet: AetModel, freeze_up_to: str = "none", seed: int = 0) -> PtcModel:
    """Classifier initialized from the regressor's backbone weights.

    The backbone is copied (the regressor stays usable); parameters up to
    and including ``freeze_up_to`` are marked non-trainable.
    """
    rng = np.random.default_rng([seed, 2])
    backbone = Backbone(aet.config, rng)
    src = {p.name: p.value for p in aet.backbone.params()}
    src.update({name: buf for name, buf in aet.backbone.buffers()})
    for p in backbone.params():
        p.value[...] = src[p.name]
    for name, buf in backbone.buffers():
        buf[...] = src[name]
    backbone.freeze(freeze_up_to)
    return PtcModel(aet.config, seed=seed, backbone=backbone)


# --- training -----------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 12
    val_fraction: float = 0.1
    seed: int = 0
    schedule: LrSchedule = field(default_factory=LrSchedule)
    patience: int | None = 40
    focusing: float = 2.0
    augment: bool = True
    steps_per_epoch: int | None = None


def _split_records(records, val_fraction, rng):
    idx = rng.permutation(len(records))
    n_val = max(1, int(round(len(records) * val_fraction)))
    val_idx = set(int(i) for i in idx[:n_val])
    train = [records[i] for i in range(len(records)) if i not in val_idx]
    val = [records[i] for i in sorted(val_idx)]
    return train, val


def _stack(samples):
    return np.ascontiguousarray(np.stack(samples).astype(np.float32))


def train_aet(
    records: list[DatasetRecord], config: BackboneConfig, tc: TrainConfig
) -> tuple[AetModel, list[dict]]:
    """Train the shift regressor with MSE; keeps the best-validation weights."""
    if not records:
        raise ValueError("empty dataset")
    size = config.input_size
    rng_split = np.random.default_rng([tc.seed, 11])
    rng_data = np.random.default_rng([tc.seed, 12])
    rng_val = np.random.default_rng([tc.seed, 13])
    train, val = _split_records(records, tc.val_fraction, rng_split)

    # fixed validation pairs so epoch losses are comparable
    val_a, val_b, val_y = [], [], []
    for rec in val:
        pair, target, _ = make_aet_pair(rec.image, rec.mask, rng_val, size)
        val_a.append(pair[0])
        val_b.append(pair[1])
        val_y.append(target[..., None])
    val_a, val_b, val_y = _stack(val_a), _stack(val_b), _stack(val_y)

    model = AetModel(config, seed=tc.seed)
    state = AdamState()
    steps = tc.steps_per_epoch or max(1, len(train) // tc.batch_size)
    best = (np.inf, None)
    history = []
    for epoch in range(tc.epochs):
        order = []
        while len(order) < steps * tc.batch_size:
            order.extend(int(i) for i in rng_data.permutation(len(train)))
        train_losses = []
        for step in range(steps):
            lr = lr_at(tc.schedule, epoch + step / steps)
            picks = [train[i] for i in order[step * tc.batch_size : (step + 1) * tc.batch_size]]
            xa, xb, ys = [], [], []
            for rec in picks:
                pair, target, _ = make_aet_pair(rec.image, rec.mask, rng_data, size)
                xa.append(pair[0])
                xb.append(pair[1])
                ys.append(target[..., None])
            xa, xb, ys = _stack(xa), _stack(xb), _stack(ys)
            pred, cache = model.forward(xa, xb, training=True)
            loss, grad = mse_loss(pred, ys)
            model.zero_grads()
            model.backward(grad.astype(np.float32), cache)
            adam_step(model.params(), state, lr)
            train_losses.append(loss)
        val_loss, _ = mse_loss(model.predict(val_a, val_b), val_y)
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(train_losses)),
                "val_loss": float(val_loss),
                "lr": float(lr_at(tc.schedule, epoch)),
            }
        )
        if val_loss < best[0]:
            best = (val_loss, model.snapshot())
    if best[1] is not None:
        model.load_arrays(best[1])
    return model, history


def train_ptc(
    model: PtcModel, records: list[DatasetRecord], tc: TrainConfig
) -> tuple[PtcModel, list[dict]]:
    """Train the classifier with focal loss on class-balanced batches.

    Early-stops when validation loss stalls for ``tc.patience`` epochs and
    restores the checkpoint with the best validation mean IoU.
    """
    from .evaluate import mean_iou  # local import; evaluate depends on models

    if any(rec.thresholds is None for rec in records):
        raise ValueError("every record needs thresholds for classifier training")
    size = model.config.input_size
    rng_split = np.random.default_rng([tc.seed, 21])
    rng_data = np.random.default_rng([tc.seed, 22])
    rng_val = np.random.default_rng([tc.seed, 23])
    rng_drop = np.random.default_rng([tc.seed, 24])
    train, val = _split_records(records, tc.val_fraction, rng_split)

    val_x, val_t = [], []
    for rec in val:
        for sample in make_ptc_batch([rec], 3, rng_val, size):
            val_x.append(sample.input)
            val_t.append(sample.target)
    val_x, val_t = _stack(val_x), _stack(val_t)

    state = AdamState()
    images_per_batch = max(1, tc.batch_size // 3)
    steps = tc.steps_per_epoch or max(1, len(train) // images_per_batch)
    best_miou = (-np.inf, None)
    best_val_loss = np.inf
    stall = 0
    history = []
    for epoch in range(tc.epochs):
        train_losses = []
        for step in range(steps):
            lr = lr_at(tc.schedule, epoch + step / steps)
            batch = make_ptc_batch(train, tc.batch_size, rng_data, size)
            if tc.augment:
                batch = [augment_sample(s, rng_data) for s in batch]
            xs = _stack([s.input for s in batch])
            ts = _stack([s.target for s in batch])
            probs, cache = model.forward(xs, training=True, rng=rng_drop)
            loss, grad = focal_loss(probs, ts, tc.focusing)
            model.zero_grads()
            model.backward(grad.astype(np.float32), cache)
            adam_step(model.params(), state, lr)
            train_losses.append(loss)
        val_probs = model.predict(val_x)
        val_loss, _ = focal_loss(val_probs, val_t, tc.focusing)
        val_miou = float(np.mean([mean_iou(p, t) for p, t in zip(val_probs, val_t)]))
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(train_losses)),
                "val_loss": float(val_loss),
                "val_miou": val_miou,
                "lr": float(lr_at(tc.schedule, epoch)),
            }
        )
        if val_miou > best_miou[0]:
            best_miou = (val_miou, model.snapshot())
        if val_loss < best_val_loss - 1e-9:
            best_val_loss = val_loss
            stall = 0
        else:
            stall += 1
            if tc.patience is not None and stall >= tc.patience:
                break
    if best_miou[1] is not None:
        model.load_arrays(best_miou[1])
    return model, history


# --- persistence ----------------------------------------------------------------


def save_model(path, model: AetModel | PtcModel, extra: dict | None = None) -> None:
    kind = "aet" if isinstance(model, AetModel) else "ptc"
    meta = {"kind": kind, "config": asdict(model.config)}
    meta.update(extra or {})
    save_checkpoint(path, model.named_arrays(), extra=meta)


def load_model(path) -> AetModel | PtcModel:
    arrays, meta = load_checkpoint(path)
    config = BackboneConfig(**meta["config"])
    model = AetModel(config) if meta["kind"] == "aet" else PtcModel(config)
    model.load_arrays(arrays)
    return model
