"""Compile cell specs into parameterized recurrent step functions.

A genotype cell computes s0 = tanh(x W_x + h_prev W_h), then for each node
j with predecessor i applies a gated highway update
    c_j = sigmoid(s_i W_j^c)
    s_j = s_i + c_j * (act_j(s_i W_j^h) - s_i)
and outputs the mean of s_1..s_N. The LSTM kind is a standard four-gate
LSTM carrying (h, c).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import RandomStream, Tensor
from .errors import DimensionError, GenotypeError
from .genome import Genotype, validate_genotype

Manifest = list[tuple[str, tuple[int, ...]]]


@dataclass(frozen=True)
class CellSpec:
    kind: str  # "lstm" | "genotype"
    input_size: int
    hidden_size: int
    genotype: Genotype | None = None

    def __post_init__(self):
        if self.kind not in ("lstm", "genotype"):
            raise GenotypeError(f"unknown cell kind {self.kind!r}")
        if self.input_size < 1 or self.hidden_size < 1:
            raise GenotypeError("input_size and hidden_size must be positive")
        if self.kind == "genotype":
            if self.genotype is None:
                raise GenotypeError("genotype cell requires a genotype")
            problems = validate_genotype(self.genotype)
            if problems:
                raise GenotypeError("; ".join(problems))


def compile_cell(spec: CellSpec) -> Manifest:
    """Deterministic (name, shape) manifest; genotype cells have 2 + 2N matrices."""
    i, h = spec.input_size, spec.hidden_size
    if spec.kind == "lstm":
        return [
            ("w_ih", (i, 4 * h)),
            ("w_hh", (h, 4 * h)),
            ("b_ih", (4 * h,)),
            ("b_hh", (4 * h,)),
        ]
    manifest: Manifest = [("w_x", (i, h)), ("w_h", (h, h))]
    for j in range(1, len(spec.genotype.nodes) + 1):
        manifest.append((f"node{j}.w_h", (h, h)))
        manifest.append((f"node{j}.w_c", (h, h)))
    return manifest


def init_cell_params(spec: CellSpec, rng: RandomStream) -> dict[str, Tensor]:
    """Uniform(-a, a) init with a = 1/sqrt(fan_in); biases use the hidden fan-in."""
    params = {}
    for name, shape in compile_cell(spec):
        fan_in = shape[0] if len(shape) == 2 else spec.hidden_size
        a = fan_in**-0.5
        params[name] = Tensor(rng.uniform(-a, a, size=shape), requires_grad=True)
    return params


def init_cell_state(spec: CellSpec, batch: int) -> Tensor | None:
    """Initial carried state: the LSTM cell buffer, nothing for genotype cells."""
    if spec.kind == "lstm":
        return Tensor(np.zeros((batch, spec.hidden_size)))
    return None


def cell_step(
    spec: CellSpec,
    params: dict[str, Tensor],
    x: Tensor,
    h_prev: Tensor,
    state: Tensor | None,
) -> tuple[Tensor, Tensor | None]:
    """One recurrent step over a batch; returns (h, carried state)."""
    if x.shape[-1] != spec.input_size or h_prev.shape[-1] != spec.hidden_size:
        raise DimensionError(
            f"cell_step got x {x.shape}, h {h_prev.shape}; spec wants "
            f"input {spec.input_size}, hidden {spec.hidden_size}"
        )
    if spec.kind == "lstm":
        return _lstm_step(spec, params, x, h_prev, state)
    return _genotype_step(spec, params, x, h_prev), None


def _lstm_step(spec, params, x, h_prev, c_prev):
    h = spec.hidden_size
    z = x @ params["w_ih"] + h_prev @ params["w_hh"] + params["b_ih"] + params["b_hh"]
    i_gate = ad.sigmoid(ad.cols(z, 0, h))
    f_gate = ad.sigmoid(ad.cols(z, h, 2 * h))
    g_gate = ad.tanh(ad.cols(z, 2 * h, 3 * h))
    o_gate = ad.sigmoid(ad.cols(z, 3 * h, 4 * h))
    c = f_gate * c_prev + i_gate * g_gate
    return o_gate * ad.tanh(c), c


def _genotype_step(spec, params, x, h_prev):
    s = [ad.tanh(x @ params["w_x"] + h_prev @ params["w_h"])]
    for j, node in enumerate(spec.genotype.nodes, start=1):
        s_in = s[node.connection]
        gate = ad.sigmoid(s_in @ params[f"node{j}.w_c"])
        transformed = ad.elementwise(node.activation.value, s_in @ params[f"node{j}.w_h"])
        s.append(s_in + gate * (transformed - s_in))
    total = s[1]
    for s_j in s[2:]:
        total = total + s_j
    return total * (1.0 / len(spec.genotype.nodes))
