"""Latent codec: the encoder/decoder pair between data space and latent space.

Toy data is generated directly in latent space, so the codec in use is the
identity. A pretrained autoencoder would plug in behind the same interface.
"""

from typing import Protocol, runtime_checkable

import numpy as np

__all__ = ["LatentCodec", "IdentityCodec", "codec_roundtrip"]


@runtime_checkable
class LatentCodec(Protocol):
    def encode(self, x: np.ndarray) -> np.ndarray: ...

    def decode(self, z: np.ndarray) -> np.ndarray: ...


class IdentityCodec:
    name = "identity"

    def encode(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)

    def decode(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z)


def codec_roundtrip(codec: LatentCodec, x: np.ndarray) -> np.ndarray:
    return codec.decode(codec.encode(x))
