"""Task-agnostic selection via a VAE and a seen/unseen discriminator.

A variational autoencoder learns a latent space over all images (labeled
and unlabeled, no class labels involved), while a discriminator on that
latent space is trained to tell labeled from unlabeled samples.  The VAE
is simultaneously pushed to make unlabeled latents look labeled, so the
discriminator concentrates on genuinely unrepresented regions.  Selection
takes the unlabeled points the discriminator is most confident are unseen.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .acquisition import LOWER, ScoredPool, select_top_k
from .models.engine import _batch_starts, to_input_tensor


class ConvVAE(nn.Module):
    """Small convolutional VAE for 32x32-ish RGB images."""

    def __init__(self, image_size: int = 32, latent_dim: int = 32):
        super().__init__()
        if image_size % 4 != 0:
            raise ValueError("image_size must be divisible by 4")
        self.image_size = image_size
        self.latent_dim = latent_dim
        s = image_size // 4  # two stride-2 convs
        self.enc = nn.Sequential(
            nn.Conv2d(3, 32, 4, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(32, 64, 4, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Flatten(),
        )
        self.fc_mu = nn.Linear(64 * s * s, latent_dim)
        self.fc_logvar = nn.Linear(64 * s * s, latent_dim)
        self.fc_dec = nn.Linear(latent_dim, 64 * s * s)
        self.dec = nn.Sequential(
            nn.Unflatten(1, (64, s, s)),
            nn.ConvTranspose2d(64, 32, 4, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(32, 3, 4, stride=2, padding=1),
            nn.Sigmoid(),
        )

    def encode(self, x):
        h = self.enc(x)
        return self.fc_mu(h), self.fc_logvar(h)

    def reparameterize(self, mu, logvar):
        return mu + torch.randn_like(mu) * torch.exp(0.5 * logvar)

    def forward(self, x):
        mu, logvar = self.encode(x)
        z = self.reparameterize(mu, logvar)
        return self.dec(self.fc_dec(z)), mu, logvar, z


class LatentDiscriminator(nn.Module):
    """Latent-space classifier: logit > 0 means "looks labeled"."""

    def __init__(self, latent_dim: int = 32, hidden: int = 64):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(latent_dim, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, 1),
        )

    def forward(self, z):
        return self.net(z).squeeze(-1)


@dataclass
class VAALModels:
    vae: ConvVAE
    discriminator: LatentDiscriminator


@dataclass
class VAALReport:
    epochs_run: int
    vae_losses: list[float] = field(default_factory=list)
    disc_losses: list[float] = field(default_factory=list)


def _vae_loss(recon, x, mu, logvar, beta: float):
    # per-sample sums keep reconstruction strong enough that the latent
    # stays informative instead of collapsing into the prior
    rec = F.mse_loss(recon, x, reduction="none").flatten(1).sum(1).mean()
    kld = -0.5 * (1 + logvar - mu.pow(2) - logvar.exp()).sum(1).mean()
    return rec + beta * kld


def fit_vaal(
    images: np.ndarray,
    labeled_indices: np.ndarray,
    unlabeled_indices: np.ndarray,
    torch_seed: int,
    shuffle_rng: np.random.Generator,
    epochs: int = 5,
    batch_size: int = 64,
    latent_dim: int = 32,
    beta: float = 1.0,
    adversary_weight: float = 1.0,
    device="cpu",
) -> tuple[VAALModels, VAALReport]:
    """Adversarial VAE/discriminator training on images only.

    Per step the VAE optimizes reconstruction + KL on both pools plus the
    adversarial term that asks the discriminator to call unlabeled latents
    labeled; then the discriminator optimizes the true labeled/unlabeled
    assignment on the same (detached) latents.
    """
    labeled_indices = np.asarray(labeled_indices, dtype=np.int64)
    unlabeled_indices = np.asarray(unlabeled_indices, dtype=np.int64)
    if len(labeled_indices) == 0 or len(unlabeled_indices) == 0:
        raise ValueError("both pools must be non-empty")
    image_size = images.shape[1]
    if images.shape[1] != images.shape[2]:
        raise ValueError("expected square images")

    torch.manual_seed(torch_seed)
    vae = ConvVAE(image_size=image_size, latent_dim=latent_dim).to(device)
    disc = LatentDiscriminator(latent_dim=latent_dim).to(device)
    opt_vae = torch.optim.Adam(vae.parameters(), lr=5e-4)
    opt_disc = torch.optim.Adam(disc.parameters(), lr=5e-4)
    bce = nn.BCEWithLogitsLoss()

    report = VAALReport(epochs_run=epochs)
    steps = max(1, len(unlabeled_indices) // batch_size)
    for _ in range(epochs):
        vae_sum = disc_sum = 0.0
        lab_order = shuffle_rng.permutation(labeled_indices)
        unlab_order = shuffle_rng.permutation(unlabeled_indices)
        for step in range(steps):
            lab_take = lab_order[
                np.arange(step * batch_size, (step + 1) * batch_size) % len(lab_order)
            ]
            unlab_take = unlab_order[
                np.arange(step * batch_size, (step + 1) * batch_size) % len(unlab_order)
            ]
            x_l = to_input_tensor(images[lab_take], device)
            x_u = to_input_tensor(images[unlab_take], device)

            recon_l, mu_l, logvar_l, z_l = vae(x_l)
            recon_u, mu_u, logvar_u, z_u = vae(x_u)
            adv = bce(disc(z_u), torch.ones(len(z_u), device=z_u.device))
            loss_vae = (
                _vae_loss(recon_l, x_l, mu_l, logvar_l, beta)
                + _vae_loss(recon_u, x_u, mu_u, logvar_u, beta)
                + adversary_weight * adv
            )
            opt_vae.zero_grad()
            loss_vae.backward()
            opt_vae.step()

            loss_disc = bce(
                disc(z_l.detach()), torch.ones(len(z_l), device=z_l.device)
            ) + bce(disc(z_u.detach()), torch.zeros(len(z_u), device=z_u.device))
            opt_disc.zero_grad()
            loss_disc.backward()
            opt_disc.step()

            vae_sum += loss_vae.item()
            disc_sum += loss_disc.item()
        report.vae_losses.append(vae_sum / steps)
        report.disc_losses.append(disc_sum / steps)
    return VAALModels(vae=vae, discriminator=disc), report


def score_seen(
    models: VAALModels,
    images: np.ndarray,
    pool: np.ndarray,
    batch_size: int = 256,
    device="cpu",
) -> ScoredPool:
    """Probability each pool image "looks labeled"; lower = more novel."""
    pool = np.asarray(pool, dtype=np.int64)
    models.vae.eval()
    models.discriminator.eval()
    scores = []
    with torch.no_grad():
        for s in _batch_starts(len(pool), batch_size):
            x = to_input_tensor(images[pool[s : s + batch_size]], device)
            mu, _ = models.vae.encode(x)  # deterministic latent for scoring
            scores.append(torch.sigmoid(models.discriminator(mu)).double().cpu().numpy())
    return ScoredPool(pool, np.concatenate(scores), LOWER)


def vaal_select(
    models: VAALModels,
    images: np.ndarray,
    pool: np.ndarray,
    k: int,
    batch_size: int = 256,
    device="cpu",
) -> np.ndarray:
    return select_top_k(score_seen(models, images, pool, batch_size, device), k)
