"""Parameters of the set-to-set calibration transformer."""

from typing import Dict

import numpy as np

from fscil.exceptions import DimensionError
from fscil.models.tensor import Tensor

DROPOUT_POSITIONS = ("pre_norm", "post_norm", "branch")


class CalibrationParams:
    """One-layer, one-head, bias-free self-attention with a layer-norm output.

    W_Q, W_K, W_V map ℝ^d → ℝ^{d'}; W_FC maps the attended values back to ℝ^d.
    """

    def __init__(
        self,
        w_q: Tensor,
        w_k: Tensor,
        w_v: Tensor,
        w_fc: Tensor,
        gamma: Tensor,
        beta: Tensor,
        dropout_p: float = 0.5,
        dropout_position: str = "pre_norm",
        eps: float = 1e-5,
    ):
        d, d_attn = w_q.shape
        for name, t, shape in (
            ("w_k", w_k, (d, d_attn)),
            ("w_v", w_v, (d, d_attn)),
            ("w_fc", w_fc, (d_attn, d)),
            ("gamma", gamma, (d,)),
            ("beta", beta, (d,)),
        ):
            if t.shape != shape:
                raise DimensionError(f"{name} has shape {t.shape}, expected {shape}")
        if not 0.0 <= dropout_p < 1.0:
            raise ValueError(f"dropout probability {dropout_p} outside [0, 1)")
        if dropout_position not in DROPOUT_POSITIONS:
            raise ValueError(f"unknown dropout position '{dropout_position}'")
        self.w_q = w_q
        self.w_k = w_k
        self.w_v = w_v
        self.w_fc = w_fc
        self.gamma = gamma
        self.beta = beta
        self.dropout_p = dropout_p
        self.dropout_position = dropout_position
        self.eps = eps

    @classmethod
    def initialize(
        cls,
        dim: int,
        attn_dim: int,
        rng: np.random.Generator,
        dropout_p: float = 0.5,
        dropout_position: str = "pre_norm",
        eps: float = 1e-5,
    ) -> "CalibrationParams":
        """Fan-in scaled uniform projections, gamma = 1 and beta = 0."""

        def uniform(fan_in: int, shape: tuple) -> Tensor:
            bound = 1.0 / np.sqrt(fan_in)
            return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)

        return cls(
            w_q=uniform(dim, (dim, attn_dim)),
            w_k=uniform(dim, (dim, attn_dim)),
            w_v=uniform(dim, (dim, attn_dim)),
            w_fc=uniform(attn_dim, (attn_dim, dim)),
            gamma=Tensor(np.ones(dim), requires_grad=True),
            beta=Tensor(np.zeros(dim), requires_grad=True),
            dropout_p=dropout_p,
            dropout_position=dropout_position,
            eps=eps,
        )

    @property
    def dim(self) -> int:
        """Set element dimension d."""
        return self.w_q.shape[0]

    @property
    def attn_dim(self) -> int:
        """Projection dimension d'."""
        return self.w_q.shape[1]

    def parameters(self) -> Dict[str, Tensor]:
        """Named tensors."""
        return {
            "calibration.w_q": self.w_q,
            "calibration.w_k": self.w_k,
            "calibration.w_v": self.w_v,
            "calibration.w_fc": self.w_fc,
            "calibration.gamma": self.gamma,
            "calibration.beta": self.beta,
        }

    def copy(self) -> "CalibrationParams":
        """Independent copy with fresh gradient-tracked leaves."""
        fresh = {
            name.split(".", 1)[1]: Tensor(t.data, requires_grad=True)
            for name, t in self.parameters().items()
        }
        return CalibrationParams(
            **fresh,
            dropout_p=self.dropout_p,
            dropout_position=self.dropout_position,
            eps=self.eps,
        )
