"""
Segmentation model interface.

Inference and evaluation code talks to models only through
:class:`SegmentationModel`, so tests can drive the video pipeline with
small hand-written models.
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, Optional

import numpy as np


class SegmentationModel(ABC):
    """Abstract base class for anchor-conditioned frame segmenters."""

    @property
    @abstractmethod
    def stride(self) -> int:
        """Downsampling factor between a frame and its embedding grid."""
        pass

    @abstractmethod
    def encode(self, frame: np.ndarray) -> Any:
        """
        Embed one 3 x H x W frame.

        Returns:
            Any: Embedding object accepted back by ``forward``.
        """
        pass

    @abstractmethod
    def forward(self, anchor: np.ndarray, current: np.ndarray, mode: Any = "eval",
                rng: Optional[np.random.Generator] = None, anchor_embedding: Any = None) -> Any:
        """
        Predict a foreground heatmap for ``current`` given the ``anchor`` frame.

        Returns:
            Tensor: h x w probabilities at embedding resolution.
        """
        pass

    def get_info(self) -> Dict[str, Any]:
        return {"model": type(self).__name__, "stride": self.stride}
