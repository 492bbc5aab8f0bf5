"""Controllable GAN training with a latent-factor model learned from
discriminator feature moments."""

__version__ = "0.1.0"
