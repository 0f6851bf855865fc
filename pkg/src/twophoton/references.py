"""Fitted sinusoid and four-channel reference-fringe containers."""
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError

CHANNELS = ("aa", "ab", "ba", "bb")


@dataclass(frozen=True)
class SinusoidFit:
    """``a + b cos(2 pi x / c - d)`` with ``x`` in metres of path length."""

    a: float
    b: float
    c: float
    d: float
    covariance: Optional[np.ndarray] = None
    residual_rms: float = 0.0

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"period must be positive, got {self.c!r}")

    def __call__(self, x):
        return self.a + self.b * np.cos(2.0 * math.pi * np.asarray(x) / self.c - self.d)

    def derivative(self, x):
        k = 2.0 * math.pi / self.c
        return -self.b * k * np.sin(k * np.asarray(x) - self.d)

    def errors(self):
        if self.covariance is None:
            return np.full(4, np.nan)
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def to_dict(self):
        return {
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "d": self.d,
            "residual_rms": self.residual_rms,
            "covariance": None if self.covariance is None else np.asarray(self.covariance).tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        cov = data.get("covariance")
        return cls(
            float(data["a"]),
            float(data["b"]),
            float(data["c"]),
            float(data["d"]),
            None if cov is None else np.asarray(cov, dtype=float),
            float(data.get("residual_rms", 0.0)),
        )


@dataclass(frozen=True)
class ReferenceFringeSet:
    """Fitted probability fringes for the channels AA, AB, BA, BB."""

    aa: SinusoidFit
    ab: SinusoidFit
    ba: SinusoidFit
    bb: SinusoidFit
    metadata: dict = field(default_factory=dict)

    @property
    def fits(self):
        return (self.aa, self.ab, self.ba, self.bb)

    def probabilities(self, x):
        """Array of shape ``(4,) + shape(x)`` in channel order AA, AB, BA, BB."""
        return np.stack([f(x) for f in self.fits])

    def derivatives(self, x):
        return np.stack([f.derivative(x) for f in self.fits])

    def period(self):
        """Mean fitted period of the four channels."""
        return float(np.mean([f.c for f in self.fits]))

    def check_normalization(self, x_min, x_max, lo=0.98, hi=1.02, samples=501):
        """Raise if the channel sum leaves ``[lo, hi]`` anywhere on the range."""
        total = self.probabilities(np.linspace(x_min, x_max, samples)).sum(axis=0)
        if total.min() < lo or total.max() > hi:
            raise DomainError(
                f"reference probabilities sum to [{total.min():.4f}, {total.max():.4f}]"
            )

    @classmethod
    def ideal(cls, period, visibility, phase=0.0, offsets=(0.25, 0.25, 0.25, 0.25)):
        """Noiseless split: coincidences ``1/4 (1 - V cos)``, same-port ``1/4 (1 + V cos)``."""
        signs = (1.0, -1.0, -1.0, 1.0)
        fits = [SinusoidFit(a, s * visibility * a, period, phase) for a, s in zip(offsets, signs)]
        return cls(*fits, metadata={"source": "ideal"})

    def to_json(self):
        doc = {"channels": {n: f.to_dict() for n, f in zip(CHANNELS, self.fits)},
               "metadata": self.metadata}
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        fits = [SinusoidFit.from_dict(doc["channels"][n]) for n in CHANNELS]
        return cls(*fits, metadata=doc.get("metadata", {}))
