"""
Recurrent and attention layers built on src.autodiff.

Sequences are lists of tensors, one per timestep, each of shape (..., features);
masks are lists of the same length holding booleans or boolean arrays over the
leading (batch) axes. A masked step carries the recurrent state unchanged.
"""
from dataclasses import dataclass, fields
from typing import Iterator, List, Sequence, Tuple

import numpy as np

from src import autodiff as ad
from src.autodiff import Tensor
from utils.custom_exception import ConfigurationError, DimensionError, PreconditionError

_GATES = ("i", "f", "g", "o")


@dataclass
class LstmCellParams:
    W_ii: Tensor
    W_hi: Tensor
    W_if: Tensor
    W_hf: Tensor
    W_ig: Tensor
    W_hg: Tensor
    W_io: Tensor
    W_ho: Tensor
    b_ii: Tensor
    b_hi: Tensor
    b_if: Tensor
    b_hf: Tensor
    b_ig: Tensor
    b_hg: Tensor
    b_io: Tensor
    b_ho: Tensor
    hidden_size: int

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator, prefix: str = "lstm") -> "LstmCellParams":
        """Uniform fan-in initialization in [-1/sqrt(hidden), 1/sqrt(hidden)]."""
        bound = 1.0 / np.sqrt(hidden_size)
        tensors = {}
        for gate in _GATES:
            tensors[f"W_i{gate}"] = ad.parameter(rng.uniform(-bound, bound, (hidden_size, input_size)), f"{prefix}.W_i{gate}")
            tensors[f"W_h{gate}"] = ad.parameter(rng.uniform(-bound, bound, (hidden_size, hidden_size)), f"{prefix}.W_h{gate}")
        for gate in _GATES:
            tensors[f"b_i{gate}"] = ad.parameter(rng.uniform(-bound, bound, hidden_size), f"{prefix}.b_i{gate}")
            tensors[f"b_h{gate}"] = ad.parameter(rng.uniform(-bound, bound, hidden_size), f"{prefix}.b_h{gate}")
        params = cls(hidden_size=hidden_size, **tensors)
        params.validate()
        return params

    @property
    def input_size(self) -> int:
        return self.W_ii.shape[1]

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        for f in fields(self):
            if f.name != "hidden_size":
                yield f.name, getattr(self, f.name)

    def validate(self) -> None:
        h = self.hidden_size
        for name, tensor in self.named_parameters():
            if name.startswith("W_h") and tensor.shape != (h, h):
                raise DimensionError(f"{tensor.name or name} must be {h}x{h}, got {tensor.shape}")
            if name.startswith("W_i") and (tensor.values.ndim != 2 or tensor.shape[0] != h):
                raise DimensionError(f"{tensor.name or name} must have {h} rows, got {tensor.shape}")
            if name.startswith("b_") and tensor.shape != (h,):
                raise DimensionError(f"{tensor.name or name} must have length {h}, got {tensor.shape}")

    def parameter_count(self) -> int:
        return int(np.sum([t.values.size for _, t in self.named_parameters()]))


def _gate(params: LstmCellParams, gate: str, e_t: Tensor, h_prev: Tensor) -> Tensor:
    return (ad.linear(e_t, getattr(params, f"W_i{gate}"), getattr(params, f"b_i{gate}"))
            + ad.linear(h_prev, getattr(params, f"W_h{gate}"), getattr(params, f"b_h{gate}")))


def lstm_step(params: LstmCellParams, e_t: Tensor, h_prev: Tensor, c_prev: Tensor) -> Tuple[Tensor, Tensor]:
    """One LSTM step with input, forget, cell and output gates."""
    if e_t.shape[-1] != params.input_size:
        raise DimensionError(f"lstm_step: input e_t has {e_t.shape[-1]} features, {params.W_ii.name} expects {params.input_size}")
    if h_prev.shape[-1] != params.hidden_size:
        raise DimensionError(f"lstm_step: h_prev has size {h_prev.shape[-1]}, hidden size is {params.hidden_size}")
    if c_prev.shape != h_prev.shape:
        raise DimensionError(f"lstm_step: c_prev shape {c_prev.shape} differs from h_prev shape {h_prev.shape}")

    i_t = ad.sigmoid(_gate(params, "i", e_t, h_prev))
    f_t = ad.sigmoid(_gate(params, "f", e_t, h_prev))
    g_t = ad.tanh(_gate(params, "g", e_t, h_prev))
    o_t = ad.sigmoid(_gate(params, "o", e_t, h_prev))
    c_t = f_t * c_prev + i_t * g_t
    h_t = o_t * ad.tanh(c_t)
    return h_t, c_t


def _step_mask(mask_t, batch_shape: tuple) -> np.ndarray:
    m = np.broadcast_to(np.asarray(mask_t, dtype=bool), batch_shape)
    return m[..., None]


def run_lstm(params: LstmCellParams, seq: Sequence[Tensor], mask: Sequence, reverse: bool = False) -> List[Tensor]:
    """Unroll one direction from a zero initial state; returns hidden states in input order."""
    batch_shape = seq[0].shape[:-1]
    h = ad.Tensor(np.zeros(batch_shape + (params.hidden_size,)))
    c = ad.Tensor(np.zeros(batch_shape + (params.hidden_size,)))
    outputs: List[Tensor] = [None] * len(seq)
    order = range(len(seq) - 1, -1, -1) if reverse else range(len(seq))
    for t in order:
        h_new, c_new = lstm_step(params, seq[t], h, c)
        keep = _step_mask(mask[t], batch_shape)
        if keep.all():
            h, c = h_new, c_new
        else:
            h = ad.where(keep, h_new, h)
            c = ad.where(keep, c_new, c)
        outputs[t] = h
    return outputs


def bilstm(forward: LstmCellParams, backward: LstmCellParams, seq: Sequence[Tensor], mask: Sequence) -> List[Tensor]:
    """Concatenate forward and backward hidden states at every timestep."""
    if len(seq) == 0:
        raise PreconditionError("bilstm: empty sequence")
    if len(mask) != len(seq):
        raise PreconditionError(f"bilstm: mask has {len(mask)} entries for {len(seq)} timesteps")
    fwd = run_lstm(forward, seq, mask)
    bwd = run_lstm(backward, seq, mask, reverse=True)
    return [ad.concat([f, b], axis=-1) for f, b in zip(fwd, bwd)]


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p) at train time, identity otherwise."""
    if not 0.0 <= p < 1.0:
        raise ConfigurationError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = rng.random(x.shape) >= p
    return x * (keep / (1.0 - p))


@dataclass
class AttentionParams:
    W: Tensor

    @classmethod
    def init(cls, input_size: int, rng: np.random.Generator, name: str = "attention") -> "AttentionParams":
        bound = 1.0 / np.sqrt(input_size)
        return cls(W=ad.parameter(rng.uniform(-bound, bound, input_size), f"{name}.W"))

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        yield "W", self.W


def attend(params: AttentionParams, xs: Sequence[Tensor], mask: Sequence) -> Tuple[Tensor, Tensor]:
    """
    Self-attention pooling: beta_t = x_t . W, alpha = softmax over unmasked t,
    o = sum_t alpha_t x_t.

    Returns:
        (o, alpha) where alpha has the timestep axis last and is 0 at masked positions.
    """
    if len(xs) == 0:
        raise PreconditionError("attention: empty sequence")
    batch_shape = xs[0].shape[:-1]
    mask_array = np.stack([np.broadcast_to(np.asarray(m, dtype=bool), batch_shape) for m in mask], axis=-1)
    if not np.all(mask_array.any(axis=-1)):
        raise PreconditionError("attention: all positions are masked")
    stacked = ad.stack(xs, axis=-2)
    beta = ad.matvec(stacked, params.W)
    alpha = ad.softmax(beta, mask=mask_array)
    return ad.weighted_sum(alpha, stacked), alpha


def attention(params: AttentionParams, xs: Sequence[Tensor], mask: Sequence) -> Tensor:
    output, _ = attend(params, xs, mask)
    return output
