"""Classifier backbones with a shared penultimate-embedding contract.

Every model is backbone -> features [B, D] -> dropout -> linear head, so
embedding extraction, Monte-Carlo dropout, and the classification head
behave identically across architectures.  All convolutional stacks are
32x32-friendly (no aggressive early downsampling).
"""
from __future__ import annotations

import torch
from torch import nn

ARCHITECTURE_EMBEDDING_DIMS = {
    "smallcnn": 128,
    "vgg16bn": 512,
    "resnet18": 512,
    "wrn28_2": 128,
}


class BackboneClassifier(nn.Module):
    """backbone(x) -> features -> dropout -> head(logits)."""

    def __init__(self, backbone: nn.Module, embedding_dim: int, num_classes: int, dropout_p: float):
        super().__init__()
        self.backbone = backbone
        self.embedding_dim = embedding_dim
        self.num_classes = num_classes
        self.dropout = nn.Dropout(dropout_p)
        self.head = nn.Linear(embedding_dim, num_classes)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return self.backbone(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.dropout(self.features(x)))


def _conv_bn_relu(cin: int, cout: int) -> list[nn.Module]:
    return [nn.Conv2d(cin, cout, 3, padding=1, bias=False), nn.BatchNorm2d(cout), nn.ReLU(inplace=True)]


class _SmallCNN(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv = nn.Sequential(
            *_conv_bn_relu(3, 32),
            *_conv_bn_relu(32, 32),
            nn.MaxPool2d(2),
            *_conv_bn_relu(32, 64),
            *_conv_bn_relu(64, 64),
            nn.MaxPool2d(2),
            nn.AdaptiveAvgPool2d(4),
        )
        self.fc = nn.Sequential(nn.Linear(64 * 16, 128), nn.ReLU(inplace=True))

    def forward(self, x):
        return self.fc(torch.flatten(self.conv(x), 1))


_VGG16_LAYOUT = (64, 64, "M", 128, 128, "M", 256, 256, 256, "M", 512, 512, 512, "M", 512, 512, 512, "M")


class _VGG(nn.Module):
    def __init__(self):
        super().__init__()
        layers: list[nn.Module] = []
        cin = 3
        for item in _VGG16_LAYOUT:
            if item == "M":
                layers.append(nn.MaxPool2d(2))
            else:
                layers.extend(_conv_bn_relu(cin, item))
                cin = item
        layers.append(nn.AdaptiveAvgPool2d(1))
        self.conv = nn.Sequential(*layers)

    def forward(self, x):
        return torch.flatten(self.conv(x), 1)


class _BasicBlock(nn.Module):
    def __init__(self, cin: int, cout: int, stride: int):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride=stride, bias=False), nn.BatchNorm2d(cout)
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.shortcut(x))


class _ResNet18(nn.Module):
    """ResNet-18 with the 3x3 stem used for 32x32 inputs (no stem pooling)."""

    def __init__(self):
        super().__init__()
        stages = []
        cin = 64
        for cout, stride in ((64, 1), (128, 2), (256, 2), (512, 2)):
            stages.append(_BasicBlock(cin, cout, stride))
            stages.append(_BasicBlock(cout, cout, 1))
            cin = cout
        self.net = nn.Sequential(
            *_conv_bn_relu(3, 64), *stages, nn.AdaptiveAvgPool2d(1)
        )

    def forward(self, x):
        return torch.flatten(self.net(x), 1)


class _PreActBlock(nn.Module):
    def __init__(self, cin: int, cout: int, stride: int):
        super().__init__()
        self.bn1 = nn.BatchNorm2d(cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
        self.relu = nn.ReLU(inplace=True)
        self.shortcut = (
            nn.Conv2d(cin, cout, 1, stride=stride, bias=False)
            if stride != 1 or cin != cout
            else None
        )

    def forward(self, x):
        pre = self.relu(self.bn1(x))
        out = self.conv1(pre)
        out = self.conv2(self.relu(self.bn2(out)))
        skip = x if self.shortcut is None else self.shortcut(pre)
        return out + skip


class _WideResNet(nn.Module):
    """Wide residual net; depth 28, widening 2 gives a 128-d penultimate."""

    def __init__(self, depth: int = 28, widen: int = 2):
        super().__init__()
        if (depth - 4) % 6 != 0:
            raise ValueError("depth must be 6n + 4")
        n = (depth - 4) // 6
        widths = (16, 16 * widen, 32 * widen, 64 * widen)
        blocks: list[nn.Module] = [nn.Conv2d(3, widths[0], 3, padding=1, bias=False)]
        cin = widths[0]
        for group, cout in enumerate(widths[1:]):
            for i in range(n):
                stride = 2 if group > 0 and i == 0 else 1
                blocks.append(_PreActBlock(cin, cout, stride))
                cin = cout
        blocks += [nn.BatchNorm2d(cin), nn.ReLU(inplace=True), nn.AdaptiveAvgPool2d(1)]
        self.net = nn.Sequential(*blocks)

    def forward(self, x):
        return torch.flatten(self.net(x), 1)


_BACKBONES = {
    "smallcnn": _SmallCNN,
    "vgg16bn": _VGG,
    "resnet18": _ResNet18,
    "wrn28_2": _WideResNet,
}


def build_model(architecture_id: str, num_classes: int, dropout_p: float = 0.0) -> BackboneClassifier:
    if architecture_id not in _BACKBONES:
        raise ValueError(
            f"unknown architecture {architecture_id!r}; choose from {sorted(_BACKBONES)}"
        )
    return BackboneClassifier(
        _BACKBONES[architecture_id](),
        ARCHITECTURE_EMBEDDING_DIMS[architecture_id],
        num_classes,
        dropout_p,
    )
