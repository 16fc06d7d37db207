"""TGANet: text-guided attention network for polyp segmentation.

The forward graph: a truncated ResNet50-style encoder (stem plus three
bottleneck stages) feeds two auxiliary attribute classifiers and four
feature enhancement modules (parallel dilated convolutions with channel
and spatial attention). The classifiers' softmax probabilities reweight
fixed attribute-word embeddings; a two-layer projection of the flattened
fused matrix yields the label features that gate each decoder block
channel-wise. Three decoder blocks upsample and merge the enhanced skip
features, a multi-scale aggregation fuses their outputs, and a 1x1
convolution plus sigmoid produces the mask probabilities.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .attributes import ATTRIBUTE_WORDS, AttributeEmbeddings
from .errors import (
    CheckpointVersionMismatch,
    DimensionMismatch,
    InvalidConfig,
    NonFiniteFeatures,
    ShapeMismatch,
)

CHECKPOINT_FORMAT_VERSION = 1

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

ENCODER_BLOCK_COUNTS = (3, 4, 6)

CBAM_REDUCTION = 16
SPATIAL_KERNEL = 7


@dataclasses.dataclass
class NetworkConfig:
    """Architecture hyperparameters, including the ablation toggles."""

    input_size: int = 256
    encoder_channels: tuple = (64, 256, 512, 1024)
    encoder_strides: tuple = (2, 4, 8, 16)
    fem_width: int = 64
    decoder_widths: tuple = (256, 128, 64)
    embedding_k: int = 300
    label_feature_dim: int = 64
    label_hidden_dim: int = 1024
    dilation_rates: tuple = (1, 6, 12, 18)
    use_label_attention: bool = True
    use_classifiers: bool = True
    use_msfa: bool = True
    use_fem: bool = True
    label_gate_chain: bool = False
    pretrained_backbone: bool = False

    def __post_init__(self):
        self.encoder_channels = tuple(self.encoder_channels)
        self.encoder_strides = tuple(self.encoder_strides)
        self.decoder_widths = tuple(self.decoder_widths)
        self.dilation_rates = tuple(self.dilation_rates)
        if len(self.encoder_channels) != 4 or any(c < 1 for c in self.encoder_channels):
            raise InvalidConfig(f"encoder_channels must be 4 positive ints, got {self.encoder_channels}")
        if self.encoder_strides != (2, 4, 8, 16):
            # The stem plus three stride-2 stages realize exactly this ladder.
            raise InvalidConfig(f"encoder_strides must be (2, 4, 8, 16), got {self.encoder_strides}")
        if any(c % 4 != 0 for c in self.encoder_channels[1:]):
            raise InvalidConfig("stage output channels must be divisible by 4 (bottleneck width)")
        if len(self.decoder_widths) != 3 or any(w < 1 for w in self.decoder_widths):
            raise InvalidConfig(f"decoder_widths must be 3 positive ints, got {self.decoder_widths}")
        if self.use_fem and self.dilation_rates != (1, 6, 12, 18):
            raise InvalidConfig(f"dilation_rates are fixed to (1, 6, 12, 18), got {self.dilation_rates}")
        for name in ("input_size", "fem_width", "embedding_k", "label_feature_dim", "label_hidden_dim"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be positive")
        if self.input_size % self.encoder_strides[-1] != 0:
            raise InvalidConfig(
                f"input_size must be divisible by {self.encoder_strides[-1]}, got {self.input_size}"
            )
        if self.use_label_attention and not self.use_classifiers:
            raise InvalidConfig("label attention needs the classifier probabilities; enable use_classifiers")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key, value in d.items():
            if isinstance(value, tuple):
                d[key] = list(value)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(**d)


# Variants with network components switched off, in canonical report order.
ABLATION_VARIANTS = {
    "no-label-classifier": {"use_label_attention": False, "use_classifiers": False},
    "no-msfa": {"use_msfa": False},
    "no-fem": {"use_fem": False},
    "baseline": {
        "use_label_attention": False,
        "use_classifiers": False,
        "use_msfa": False,
        "use_fem": False,
    },
    "full": {},
}

VARIANT_ORDER = ("no-label-classifier", "no-msfa", "no-fem", "baseline", "full")


def ablation_config(base: NetworkConfig, variant: str) -> NetworkConfig:
    if variant not in ABLATION_VARIANTS:
        raise InvalidConfig(f"unknown ablation variant {variant!r}; choose from {sorted(ABLATION_VARIANTS)}")
    return dataclasses.replace(base, **ABLATION_VARIANTS[variant])


@dataclasses.dataclass
class AttributeLogits:
    """Pre-softmax outputs of the two classification heads."""

    count_logits: torch.Tensor  # (batch, 2)
    size_logits: torch.Tensor  # (batch, 3)

    def probabilities(self) -> torch.Tensor:
        """(batch, 5) concatenation of the count softmax and the size softmax."""
        return torch.cat(
            [F.softmax(self.count_logits, dim=1), F.softmax(self.size_logits, dim=1)], dim=1
        )


@dataclasses.dataclass
class NetworkOutput:
    mask_prob: torch.Tensor  # (batch, 1, H, W) in [0, 1]
    logits: AttributeLogits | None


def _check_finite(x: torch.Tensor, where: str):
    if not torch.isfinite(x).all():
        raise NonFiniteFeatures(f"non-finite values in {where}")


class ConvBNReLU(nn.Sequential):
    def __init__(self, in_ch, out_ch, kernel_size=3, dilation=1):
        padding = dilation * (kernel_size - 1) // 2
        super().__init__(
            nn.Conv2d(in_ch, out_ch, kernel_size, padding=padding, dilation=dilation, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )


class ChannelAttention(nn.Module):
    """Squeeze both pooled descriptors through a shared bottleneck MLP."""

    def __init__(self, channels, reduction=CBAM_REDUCTION):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.mlp = nn.Sequential(
            nn.Linear(channels, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, channels),
        )

    def gate(self, x):
        avg = self.mlp(x.mean(dim=(2, 3)))
        peak = self.mlp(x.amax(dim=(2, 3)))
        return torch.sigmoid(avg + peak)[:, :, None, None]

    def forward(self, x):
        return x * self.gate(x)


class SpatialAttention(nn.Module):
    def __init__(self, kernel_size=SPATIAL_KERNEL):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2, bias=False)

    def gate(self, x):
        pooled = torch.cat([x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv(pooled))

    def forward(self, x):
        return x * self.gate(x)


class CBAM(nn.Module):
    def __init__(self, channels, reduction=CBAM_REDUCTION, kernel_size=SPATIAL_KERNEL):
        super().__init__()
        self.channel = ChannelAttention(channels, reduction)
        self.spatial = SpatialAttention(kernel_size)

    def forward(self, x):
        return self.spatial(self.channel(x))


class Bottleneck(nn.Module):
    """1x1 reduce, 3x3 (optionally strided), 1x1 expand, residual add."""

    def __init__(self, in_ch, mid_ch, out_ch, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, mid_ch, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(mid_ch)
        self.conv2 = nn.Conv2d(mid_ch, mid_ch, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(mid_ch)
        self.conv3 = nn.Conv2d(mid_ch, out_ch, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or in_ch != out_ch:
            self.downsample = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.downsample = None

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        return self.relu(out + identity)


class ResNetEncoder(nn.Module):
    """Stem plus three bottleneck stages; emits features at strides 2/4/8/16.

    Module names mirror the torchvision ResNet50 layout so ImageNet weights
    load directly when the default channel widths are used.
    """

    def __init__(self, channels=(64, 256, 512, 1024), block_counts=ENCODER_BLOCK_COUNTS):
        super().__init__()
        stem, c1, c2, c3 = channels
        self.conv1 = nn.Conv2d(3, stem, 7, stride=2, padding=3, bias=False)
        self.bn1 = nn.BatchNorm2d(stem)
        self.relu = nn.ReLU(inplace=True)
        self.maxpool = nn.MaxPool2d(3, stride=2, padding=1)
        self.layer1 = self._make_stage(stem, c1, block_counts[0], stride=1)
        self.layer2 = self._make_stage(c1, c2, block_counts[1], stride=2)
        self.layer3 = self._make_stage(c2, c3, block_counts[2], stride=2)

    @staticmethod
    def _make_stage(in_ch, out_ch, blocks, stride):
        mid = out_ch // 4
        layers = [Bottleneck(in_ch, mid, out_ch, stride=stride)]
        layers.extend(Bottleneck(out_ch, mid, out_ch) for _ in range(blocks - 1))
        return nn.Sequential(*layers)

    def forward(self, x):
        e1 = self.relu(self.bn1(self.conv1(x)))
        e2 = self.layer1(self.maxpool(e1))
        e3 = self.layer2(e2)
        e4 = self.layer3(e3)
        return e1, e2, e3, e4

    def load_imagenet_weights(self):
        """Copy torchvision ResNet50 weights into this (default-width) encoder."""
        try:
            from torchvision.models import ResNet50_Weights, resnet50
        except ImportError as exc:  # pragma: no cover
            raise InvalidConfig("torchvision is required for pretrained_backbone") from exc
        try:
            reference = resnet50(weights=ResNet50_Weights.IMAGENET1K_V2)
        except Exception as exc:
            raise InvalidConfig(
                "could not fetch ImageNet weights (offline?); set pretrained_backbone=False"
            ) from exc
        own = self.state_dict()
        filtered = {k: v for k, v in reference.state_dict().items() if k in own}
        if set(filtered) != set(own):
            raise InvalidConfig("pretrained weights require the default encoder widths")
        self.load_state_dict(filtered)


class FeatureEnhancement(nn.Module):
    """Parallel dilated convolutions with channel attention, fused and
    residual-connected, then spatially re-weighted."""

    def __init__(self, in_ch, out_ch, rates=(1, 6, 12, 18)):
        super().__init__()
        self.branches = nn.ModuleList(
            nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 3, padding=r, dilation=r, bias=False),
                nn.BatchNorm2d(out_ch),
                nn.ReLU(inplace=True),
                ChannelAttention(out_ch),
            )
            for r in rates
        )
        self.merge = nn.Sequential(
            nn.Conv2d(len(rates) * out_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
        )
        self.shortcut = nn.Conv2d(in_ch, out_ch, 1)
        self.relu = nn.ReLU(inplace=True)
        self.spatial = SpatialAttention()

    def forward(self, x):
        merged = self.merge(torch.cat([branch(x) for branch in self.branches], dim=1))
        return self.spatial(self.relu(merged + self.shortcut(x)))


class FeatureProjection(nn.Module):
    """1x1 projection stand-in used when feature enhancement is ablated."""

    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.project = ConvBNReLU(in_ch, out_ch, kernel_size=1)

    def forward(self, x):
        return self.project(x)


class DecoderBlock(nn.Module):
    """Upsample, merge the skip, refine with residual convolutions and CBAM,
    then gate channels by a sigmoid projection of the label features."""

    def __init__(self, deep_ch, skip_ch, out_ch, gate_in_dim=None):
        super().__init__()
        self.fuse = ConvBNReLU(deep_ch + skip_ch, out_ch, kernel_size=1)
        self.conv1 = nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.conv3 = nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False)
        self.bn3 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        self.cbam = CBAM(out_ch)
        if gate_in_dim is not None:
            self.gate_proj = nn.Sequential(
                nn.Linear(gate_in_dim, gate_in_dim),
                nn.ReLU(inplace=True),
                nn.Linear(gate_in_dim, out_ch),
            )
        else:
            self.gate_proj = None

    def forward(self, deep, skip, label_features=None, return_gate=False):
        dh, dw = deep.shape[-2:]
        if skip.shape[-2:] != (2 * dh, 2 * dw):
            raise ShapeMismatch(
                f"skip spatial dims {tuple(skip.shape[-2:])} must be twice the deep dims {(dh, dw)}"
            )
        x = F.interpolate(deep, scale_factor=2, mode="bilinear", align_corners=False)
        x = self.fuse(torch.cat([x, skip], dim=1))
        x = self.relu(self.bn1(self.conv1(x)) + x)
        x = self.relu(self.bn2(self.conv2(x)) + x)
        x = self.relu(self.bn3(self.conv3(x)) + x)
        x = self.cbam(x)
        gate_pre = None
        if self.gate_proj is not None:
            if label_features is None:
                raise InvalidConfig("decoder block built with a label gate needs label features")
            gate_pre = self.gate_proj(label_features)
            x = x * torch.sigmoid(gate_pre)[:, :, None, None]
        if return_gate:
            return x, gate_pre
        return x


class MultiScaleAggregation(nn.Module):
    """Upsample the coarser decoder outputs to the finest grid, project each
    branch, concatenate, and refine with residual convolutions."""

    def __init__(self, in_chs, out_ch):
        super().__init__()
        self.branches = nn.ModuleList(ConvBNReLU(c, out_ch, kernel_size=1) for c in in_chs)
        self.fuse = ConvBNReLU(len(in_chs) * out_ch, out_ch, kernel_size=3)
        self.conv1 = nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, d1, d2, d3):
        sizes = [tuple(d.shape[-2:]) for d in (d1, d2, d3)]
        if not (sizes[0] < sizes[1] < sizes[2]):
            raise ShapeMismatch(f"decoder outputs must be at strictly increasing resolutions, got {sizes}")
        target = sizes[2]
        projected = []
        for branch, d in zip(self.branches, (d1, d2, d3)):
            if tuple(d.shape[-2:]) != target:
                d = F.interpolate(d, size=target, mode="bilinear", align_corners=False)
            projected.append(branch(d))
        x = self.fuse(torch.cat(projected, dim=1))
        x = self.relu(self.bn1(self.conv1(x)) + x)
        x = self.relu(self.bn2(self.conv2(x)) + x)
        return x


def _init_weights(module):
    if isinstance(module, (nn.Conv2d, nn.Linear)):
        nn.init.kaiming_normal_(module.weight, mode="fan_in", nonlinearity="relu")
        if module.bias is not None:
            nn.init.zeros_(module.bias)


class TGANet(nn.Module):
    def __init__(self, config: NetworkConfig, embeddings=None, debug: bool = False):
        super().__init__()
        self.config = config
        self.debug = debug
        ch = config.encoder_channels
        widths = config.decoder_widths
        fw = config.fem_width

        self.encoder = ResNetEncoder(ch)

        if config.use_classifiers:
            self.count_head = nn.Linear(ch[3], 2)
            self.size_head = nn.Linear(ch[3], 3)

        if config.use_label_attention:
            self.label_mlp = nn.Sequential(
                nn.Linear(5 * config.embedding_k, config.label_hidden_dim),
                nn.ReLU(inplace=True),
                nn.Linear(config.label_hidden_dim, config.label_feature_dim),
            )

        if config.use_fem:
            self.fems = nn.ModuleList(
                FeatureEnhancement(c, fw, rates=config.dilation_rates) for c in ch
            )
        else:
            self.fems = nn.ModuleList(FeatureProjection(c, fw) for c in ch)

        gate_dims = self._gate_input_dims()
        deep_chs = (fw, widths[0], widths[1])
        self.decoders = nn.ModuleList(
            DecoderBlock(deep_chs[i], fw, widths[i], gate_in_dim=gate_dims[i]) for i in range(3)
        )

        if config.use_msfa:
            self.msfa = MultiScaleAggregation(widths, widths[2])
        self.mask_head = nn.Conv2d(widths[2], 1, 1)

        self.apply(_init_weights)
        if config.pretrained_backbone:
            self.encoder.load_imagenet_weights()

        mean, std = (IMAGENET_MEAN, IMAGENET_STD) if config.pretrained_backbone else ((0.5,) * 3, (0.5,) * 3)
        self.register_buffer("input_mean", torch.tensor(mean).view(1, 3, 1, 1))
        self.register_buffer("input_std", torch.tensor(std).view(1, 3, 1, 1))
        self.register_buffer("attribute_embeddings", self._embedding_tensor(embeddings, config.embedding_k))

    def _gate_input_dims(self):
        cfg = self.config
        if not cfg.use_label_attention:
            return (None, None, None)
        if cfg.label_gate_chain:
            # Each gate projection consumes the previous block's pre-sigmoid gate.
            return (cfg.label_feature_dim, cfg.decoder_widths[0], cfg.decoder_widths[1])
        return (cfg.label_feature_dim,) * 3

    @staticmethod
    def _embedding_tensor(embeddings, k) -> torch.Tensor:
        if embeddings is None:
            return torch.zeros(len(ATTRIBUTE_WORDS), k)
        if isinstance(embeddings, AttributeEmbeddings):
            matrix = embeddings.matrix()
        else:
            matrix = np.asarray(embeddings, dtype=np.float64)
        if matrix.shape != (len(ATTRIBUTE_WORDS), k):
            raise DimensionMismatch(
                f"embedding matrix shape {matrix.shape} does not match (5, {k})"
            )
        return torch.as_tensor(matrix, dtype=torch.get_default_dtype())

    # ----- forward-graph stages ---------------------------------------

    def encode(self, image: torch.Tensor):
        """Standardize the [0, 1] image and run the backbone; returns e1..e4."""
        if image.dim() != 4 or image.shape[1] != 3:
            raise ShapeMismatch(f"expected (batch, 3, H, W) input, got {tuple(image.shape)}")
        h, w = image.shape[-2:]
        stride = self.config.encoder_strides[-1]
        if h != w or h % stride != 0:
            raise ShapeMismatch(f"input must be square with side divisible by {stride}, got {h}x{w}")
        x = (image - self.input_mean) / self.input_std
        features = self.encoder(x)
        if self.debug:
            for i, f in enumerate(features, start=1):
                _check_finite(f, f"encoder stage {i}")
        return features

    def classify_attributes(self, e4: torch.Tensor) -> AttributeLogits:
        """Global-average-pool the deepest features into both heads."""
        if not self.config.use_classifiers:
            raise InvalidConfig("classifiers are disabled in this configuration")
        pooled = e4.mean(dim=(2, 3))
        return AttributeLogits(
            count_logits=self.count_head(pooled), size_logits=self.size_head(pooled)
        )

    def fuse_probabilities(self, logits: AttributeLogits) -> torch.Tensor:
        """(batch, 5, k) fused matrix: each word's embedding scaled by its probability."""
        probs = logits.probabilities()
        return probs.unsqueeze(-1) * self.attribute_embeddings.unsqueeze(0)

    def compute_label_features(self, fusion: torch.Tensor) -> torch.Tensor:
        """Flatten the fused 5 x k matrix and project it to the label feature vector."""
        if fusion.shape[-1] != self.config.embedding_k:
            raise DimensionMismatch(
                f"fusion k={fusion.shape[-1]} does not match configured k={self.config.embedding_k}"
            )
        if not self.config.use_label_attention:
            raise InvalidConfig("label attention is disabled in this configuration")
        return self.label_mlp(fusion.flatten(start_dim=1))

    def enhance_features(self, features):
        """Apply the per-stage enhancement module to each encoder output."""
        out = tuple(fem(e) for fem, e in zip(self.fems, features))
        if self.debug:
            for i, f in enumerate(out, start=1):
                _check_finite(f, f"enhanced stage {i}")
        return out

    def decode(self, f1, f2, f3, f4, label_features=None):
        """Run the three decoder blocks; returns (d1, d2, d3), coarse to fine."""
        chain = self.config.use_label_attention and self.config.label_gate_chain
        gate_input = label_features
        outputs = []
        for block, (deep, skip) in zip(self.decoders, ((f4, f3), (None, f2), (None, f1))):
            deep = outputs[-1] if deep is None else deep
            if chain:
                out, gate_pre = block(deep, skip, gate_input, return_gate=True)
                gate_input = gate_pre
            else:
                out = block(deep, skip, gate_input)
            outputs.append(out)
        return tuple(outputs)

    def aggregate_multiscale(self, d1, d2, d3) -> torch.Tensor:
        if not self.config.use_msfa:
            return d3
        return self.msfa(d1, d2, d3)

    def forward(self, image: torch.Tensor) -> NetworkOutput:
        e1, e2, e3, e4 = self.encode(image)
        logits = self.classify_attributes(e4) if self.config.use_classifiers else None
        label_features = None
        if self.config.use_label_attention:
            label_features = self.compute_label_features(self.fuse_probabilities(logits))
        f1, f2, f3, f4 = self.enhance_features((e1, e2, e3, e4))
        d1, d2, d3 = self.decode(f1, f2, f3, f4, label_features)
        fused = self.aggregate_multiscale(d1, d2, d3)
        logit_map = self.mask_head(fused)
        logit_map = F.interpolate(
            logit_map, size=image.shape[-2:], mode="bilinear", align_corners=False
        )
        mask_prob = torch.sigmoid(logit_map)
        if self.debug:
            _check_finite(mask_prob, "mask probabilities")
        return NetworkOutput(mask_prob=mask_prob, logits=logits)


def parameter_count(config: NetworkConfig) -> int:
    """Total trainable scalar parameters of the configured network."""
    model = TGANet(config)
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


# ----- checkpointing ----------------------------------------------------


def save_checkpoint(path, model: TGANet, optimizer=None, epoch: int = 0, best_metric=None):
    """Single-archive checkpoint: format version, config, flat parameter map,
    optimizer state, epoch, and the best monitored value."""
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "net_config": model.config.to_dict(),
        "params": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "epoch": int(epoch),
        "best_metric": None if best_metric is None else float(best_metric),
    }
    torch.save(payload, path)


def load_checkpoint(path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointVersionMismatch(
            f"checkpoint format {version!r} unsupported (expected {CHECKPOINT_FORMAT_VERSION})"
        )
    return payload


def model_from_checkpoint(payload: dict, debug: bool = False) -> TGANet:
    """Rebuild the network from a loaded checkpoint payload (embeddings
    included; they travel as a buffer in the parameter map)."""
    config = NetworkConfig.from_dict(payload["net_config"])
    # The checkpoint carries every parameter and buffer, so never re-fetch
    # pretrained weights at reconstruction time.
    build_config = dataclasses.replace(config, pretrained_backbone=False)
    model = TGANet(build_config, embeddings=None, debug=debug)
    model.load_state_dict(payload["params"])
    model.config = config
    return model
