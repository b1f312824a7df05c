"""r-vector ResNet embedders: basic ResNet34 and the bottleneck deep-ResNet family."""
import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from attrs import define, field
from torch import nn

from .audio import AudioBuffer, concatenate
from .constants import (
    BASE_WIDTH,
    BOTTLENECK_EXPANSION,
    EMBEDDING_DIM,
    N_MELS,
    POOLING_EPSILON,
    TIME_REDUCTION,
    BlockKind,
)
from .errors import NetworkError
from .fbank import FeatureMatrix, compute_fbank
from .tensorio import TensorBundle

__author__ = "rvector Contributors"
__copyright__ = "Copyright 2026 rvector Contributors"
__license__ = "Apache License, Version 2.0"


log = logging.getLogger(__name__)

MIN_FRAMES = TIME_REDUCTION


def _check_depths(instance, attribute, value) -> None:
    if len(value) != 4 or any(int(n) < 1 for n in value):
        raise NetworkError(
            "depths must be four positive integers, got {!r}".format(value)
        )


@define(frozen=True, slots=True)
class NetSpec:
    block_kind: BlockKind = field(converter=BlockKind)
    depths: Tuple[int, int, int, int] = field(
        converter=lambda v: tuple(int(n) for n in v), validator=_check_depths
    )
    base_width: int = field(default=BASE_WIDTH)
    emb_dim: int = field(default=EMBEDDING_DIM)
    input_mels: int = field(default=N_MELS)

    @property
    def expansion(self) -> int:
        return BOTTLENECK_EXPANSION if self.block_kind is BlockKind.Bottleneck else 1

    @property
    def num_layers(self) -> int:
        """Weighted layer count (stem + branch convs + embedding), e.g. 34 or 293."""
        convs_per_block = 3 if self.block_kind is BlockKind.Bottleneck else 2
        return convs_per_block * sum(self.depths) + 2

    @property
    def spec_code(self) -> int:
        return self.num_layers

    @property
    def stage_widths(self) -> Tuple[int, ...]:
        return tuple(self.base_width * 2**i for i in range(4))

    @property
    def stage_channels(self) -> Tuple[int, ...]:
        return tuple(w * self.expansion for w in self.stage_widths)

    @property
    def pooled_freq(self) -> int:
        return self.input_mels // TIME_REDUCTION

    @property
    def pooled_dim(self) -> int:
        return 2 * self.pooled_freq * self.stage_channels[-1]

    def stage_shapes(self, n_frames: int) -> List[Tuple[int, int, int]]:
        """(freq, time, channels) after the stem and each of the four stages."""
        n_frames -= n_frames % TIME_REDUCTION
        shapes = [(self.input_mels, n_frames, self.base_width)]
        for stage, channels in enumerate(self.stage_channels):
            factor = 2**stage
            shapes.append((self.input_mels // factor, n_frames // factor, channels))
        return shapes

    @classmethod
    def from_code(cls, code: int) -> "NetSpec":
        try:
            return NET_SPECS[code]
        except KeyError:
            raise NetworkError(
                "unknown network spec code {!r} (expecting one of {!r})".format(
                    code, sorted(NET_SPECS)
                )
            ) from None


NET_SPECS: Dict[int, NetSpec] = {
    34: NetSpec(BlockKind.Basic, (3, 4, 6, 3)),
    152: NetSpec(BlockKind.Bottleneck, (3, 8, 36, 3)),
    221: NetSpec(BlockKind.Bottleneck, (6, 16, 48, 3)),
    293: NetSpec(BlockKind.Bottleneck, (10, 20, 64, 3)),
}


def conv3x3(in_planes: int, out_planes: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(
        in_planes,
        out_planes,
        kernel_size=3,
        stride=stride,
        padding=1,
        bias=False,
        padding_mode="replicate",
    )


def conv1x1(in_planes: int, out_planes: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_planes, out_planes, kernel_size=1, stride=stride, bias=False)


def _shortcut(in_planes: int, out_planes: int, stride: int) -> nn.Module:
    if stride == 1 and in_planes == out_planes:
        return nn.Identity()
    return nn.Sequential(
        conv1x1(in_planes, out_planes, stride), nn.BatchNorm2d(out_planes)
    )


class BasicBlock(nn.Module):
    expansion = 1
    branch_convs = 2

    def __init__(self, in_planes: int, planes: int, stride: int = 1) -> None:
        super().__init__()
        self.conv1 = conv3x3(in_planes, planes, stride)
        self.bn1 = nn.BatchNorm2d(planes)
        self.conv2 = conv3x3(planes, planes)
        self.bn2 = nn.BatchNorm2d(planes)
        self.relu = nn.ReLU()
        self.shortcut = _shortcut(in_planes, planes, stride)

    @property
    def last_conv(self) -> nn.Conv2d:
        return self.conv2

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.shortcut(x))


class Bottleneck(nn.Module):
    """1x1 reduce, 3x3 (carrying the stride), 1x1 expand by four."""

    expansion = BOTTLENECK_EXPANSION
    branch_convs = 3

    def __init__(self, in_planes: int, planes: int, stride: int = 1) -> None:
        super().__init__()
        out_planes = planes * self.expansion
        self.conv1 = conv1x1(in_planes, planes)
        self.bn1 = nn.BatchNorm2d(planes)
        self.conv2 = conv3x3(planes, planes, stride)
        self.bn2 = nn.BatchNorm2d(planes)
        self.conv3 = conv1x1(planes, out_planes)
        self.bn3 = nn.BatchNorm2d(out_planes)
        self.relu = nn.ReLU()
        self.shortcut = _shortcut(in_planes, out_planes, stride)

    @property
    def last_conv(self) -> nn.Conv2d:
        return self.conv3

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        return self.relu(out + self.shortcut(x))


def stats_pool(featmap: torch.Tensor, eps: float = POOLING_EPSILON) -> torch.Tensor:
    """
    Mean and standard deviation over time, mean block first.

    :param featmap: (..., channels, freq, time)
    :return: (..., 2 * channels * freq)
    """
    if featmap.shape[-1] < 1:
        raise NetworkError("statistics pooling needs at least one frame")
    mean = featmap.mean(dim=-1)
    var = (featmap - mean.unsqueeze(-1)).pow(2).mean(dim=-1)
    std = torch.sqrt(var + eps)
    return torch.cat([mean.flatten(start_dim=-2), std.flatten(start_dim=-2)], dim=-1)


class StatsPool(nn.Module):
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return stats_pool(x)


class ResNetEmbedder(nn.Module):
    """Stem, four residual stages, statistics pooling and the embedding layer."""

    def __init__(self, spec: NetSpec) -> None:
        super().__init__()
        self.spec = spec
        block = Bottleneck if spec.block_kind is BlockKind.Bottleneck else BasicBlock
        self.stem = nn.Sequential(
            conv3x3(1, spec.base_width), nn.BatchNorm2d(spec.base_width), nn.ReLU()
        )
        in_planes = spec.base_width
        stages = []
        for index, (width, depth) in enumerate(zip(spec.stage_widths, spec.depths)):
            stride = 1 if index == 0 else 2
            blocks = []
            for position in range(depth):
                blocks.append(block(in_planes, width, stride if position == 0 else 1))
                in_planes = width * block.expansion
            stages.append(nn.Sequential(*blocks))
        self.stages = nn.ModuleList(stages)
        self.pool = StatsPool()
        self.embedding = nn.Linear(spec.pooled_dim, spec.emb_dim)

    def forward_stages(self, x: torch.Tensor) -> List[torch.Tensor]:
        """Feature maps after the stem and every stage for (N, time, mels) input."""
        out = self.stem(x.transpose(-1, -2).unsqueeze(1))
        maps = [out]
        for stage in self.stages:
            out = stage(out)
            maps.append(out)
        return maps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.embedding(self.pool(self.forward_stages(x)[-1]).flatten(start_dim=1))


def _initialize(net: ResNetEmbedder) -> None:
    block_types = (BasicBlock, Bottleneck)
    residual_blocks = [m for m in net.modules() if isinstance(m, block_types)]
    for module in net.modules():
        if isinstance(module, nn.Conv2d):
            nn.init.kaiming_normal_(module.weight, mode="fan_in", nonlinearity="relu")
        elif isinstance(module, nn.BatchNorm2d):
            nn.init.ones_(module.weight)
            nn.init.zeros_(module.bias)
    with torch.no_grad():
        for block in residual_blocks:
            # depth-scaled branch output keeps untrained activations finite
            scale = len(residual_blocks) ** (-1.0 / (2 * block.branch_convs - 2))
            block.last_conv.weight.mul_(scale)


def build_network(spec: NetSpec, seed: int = 0) -> ResNetEmbedder:
    """Construct an inference-mode embedder with weights derived from seed only."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        net = ResNetEmbedder(spec)
        _initialize(net)
    net.eval()
    net.requires_grad_(False)
    log.debug("Built ResNet%d with %d parameters", spec.num_layers, param_count(net))
    return net


def param_count(net: ResNetEmbedder, include_embedding: bool = True) -> int:
    """Learnable parameters of the embedder; the classifier head is never part of it."""
    total = sum(p.numel() for p in net.parameters())
    if not include_embedding:
        total -= sum(p.numel() for p in net.embedding.parameters())
    return int(total)


def _as_frames(features: Union[FeatureMatrix, np.ndarray], spec: NetSpec) -> np.ndarray:
    if isinstance(features, FeatureMatrix):
        frames = features.frames
    else:
        frames = np.asarray(features)
    if frames.ndim != 2 or frames.shape[1] != spec.input_mels:
        raise NetworkError(
            "expecting (frames, {}) features, got shape {!r}".format(
                spec.input_mels, frames.shape
            )
        )
    if frames.shape[0] < MIN_FRAMES:
        raise NetworkError(
            "need at least {} frames, got {}".format(MIN_FRAMES, frames.shape[0])
        )
    usable = frames.shape[0] - frames.shape[0] % TIME_REDUCTION
    if usable != frames.shape[0]:
        log.debug("Truncate %d frames to %d", frames.shape[0], usable)
    return frames[:usable]


@define(frozen=True, slots=True, eq=False)
class Embedding:
    vector: np.ndarray = field(converter=lambda v: np.asarray(v, dtype=np.float32))
    utterance_id: str = field(default="")
    speaker_id: str = field(default="")


def forward_batch(net: ResNetEmbedder, batch: np.ndarray) -> np.ndarray:
    """Embed (N, frames, mels) features of one length; returns (N, emb_dim)."""
    batch = np.asarray(batch)
    if batch.ndim != 3:
        raise NetworkError("expecting a (N, frames, mels) batch, got {!r}".format(
            batch.shape
        ))
    frames = np.stack([_as_frames(utt, net.spec) for utt in batch])
    with torch.no_grad():
        out = net(torch.as_tensor(frames, dtype=torch.float32))
    return out.numpy()


def forward(
    net: ResNetEmbedder,
    features: Union[FeatureMatrix, np.ndarray],
    utterance_id: str = "",
    speaker_id: str = "",
) -> Embedding:
    frames = _as_frames(features, net.spec)
    with torch.no_grad():
        out = net(torch.as_tensor(frames, dtype=torch.float32).unsqueeze(0))
    return Embedding(out[0].numpy(), utterance_id=utterance_id, speaker_id=speaker_id)


def embed_audio(net: ResNetEmbedder, audio: AudioBuffer) -> Embedding:
    return forward(net, compute_fbank(audio), audio.utterance_id, audio.speaker_id)


def embed_concatenated(
    net: ResNetEmbedder, buffers: Sequence[AudioBuffer], utterance_id: str = ""
) -> Embedding:
    """Embed the concatenation of buffers; fbank and CMN run on the joined audio."""
    return embed_audio(net, concatenate(buffers, utterance_id=utterance_id))


def network_to_bundle(net: ResNetEmbedder) -> TensorBundle:
    state = {
        name: tensor.detach().cpu().numpy()
        for name, tensor in net.state_dict().items()
        if not name.endswith("num_batches_tracked")
    }
    return TensorBundle(spec_code=net.spec.spec_code, tensors=state)


def network_from_bundle(
    bundle: TensorBundle, spec: Optional[NetSpec] = None
) -> ResNetEmbedder:
    if spec is None:
        spec = NetSpec.from_code(bundle.spec_code)
    elif spec.spec_code != bundle.spec_code:
        raise NetworkError(
            "checkpoint spec code {!r} does not match {!r}".format(
                bundle.spec_code, spec.spec_code
            )
        )
    net = build_network(spec)
    state = {
        name: torch.from_numpy(tensor.copy()) for name, tensor in bundle.tensors.items()
    }
    missing, unexpected = net.load_state_dict(state, strict=False)
    missing = [name for name in missing if not name.endswith("num_batches_tracked")]
    if missing or unexpected:
        raise NetworkError(
            "checkpoint does not fit ResNet{}: missing {!r}, unexpected {!r}".format(
                spec.num_layers, missing, unexpected
            )
        )
    return net
