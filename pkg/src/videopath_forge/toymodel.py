"""Tiny dense stand-in for the vision-encoder / projector / LLM component
graph, used to verify stage plans actually freeze and tune the right blocks.

Forward map: z = tanh(Wg x), h = Wp z, out = tanh(Weff [h; q]) where
Weff = Wf + B A when the decoder runs in low-rank adapter mode. Loss is
0.5 * ||out - y||^2. Gradients are analytic and checked against central
finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COMPONENTS = ("vision_encoder", "projector", "llm")


@dataclass
class ToyBatch:
    x: np.ndarray  # visual input, (dx,)
    q: np.ndarray  # tokenized instruction embedding, (dq,)
    y: np.ndarray  # target output, (do,)


def toy_tokenizer(text: str, dim: int = 4) -> np.ndarray:
    """Deterministic toy embedding of an instruction string."""
    vec = np.zeros(dim)
    for i, ch in enumerate(text.encode()):
        vec[i % dim] += (ch % 31) / 31.0
    return vec / max(1, len(text))


class ToyModel:
    def __init__(self, dx: int = 6, dz: int = 8, dh: int = 8, dq: int = 4,
                 do: int = 5, lora_rank: int = 2, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.dx, self.dz, self.dh, self.dq, self.do = dx, dz, dh, dq, do
        self.Wg = rng.standard_normal((dz, dx)) * 0.3
        self.Wp = rng.standard_normal((dh, dz)) * 0.3
        self.Wf = rng.standard_normal((do, dh + dq)) * 0.3
        # adapter factors start small but nonzero so one step moves both
        self.A = rng.standard_normal((lora_rank, dh + dq)) * 0.05
        self.B = rng.standard_normal((do, lora_rank)) * 0.05

    # --- parameter access ----------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        return {"vision_encoder": self.Wg, "projector": self.Wp, "llm": self.Wf,
                "llm_adapter_a": self.A, "llm_adapter_b": self.B}

    def snapshot(self) -> dict[str, bytes]:
        return {k: v.tobytes() for k, v in self.params().items()}

    # --- forward / backward ----------------------------------------------------

    def forward(self, batch: ToyBatch, use_lora: bool = False) -> np.ndarray:
        z = np.tanh(self.Wg @ batch.x)
        h = self.Wp @ z
        u = np.concatenate([h, batch.q])
        weff = self.Wf + self.B @ self.A if use_lora else self.Wf
        return np.tanh(weff @ u)

    def loss(self, batch: ToyBatch, use_lora: bool = False) -> float:
        diff = self.forward(batch, use_lora) - batch.y
        return 0.5 * float(diff @ diff)

    def gradients(self, batch: ToyBatch, use_lora: bool = False) -> dict[str, np.ndarray]:
        z = np.tanh(self.Wg @ batch.x)
        h = self.Wp @ z
        u = np.concatenate([h, batch.q])
        weff = self.Wf + self.B @ self.A if use_lora else self.Wf
        out = np.tanh(weff @ u)

        d_out = (out - batch.y) * (1.0 - out ** 2)
        d_weff = np.outer(d_out, u)
        d_u = weff.T @ d_out
        d_h = d_u[: self.dh]
        d_wp = np.outer(d_h, z)
        d_z = self.Wp.T @ d_h
        d_wg = np.outer(d_z * (1.0 - z ** 2), batch.x)

        grads = {"vision_encoder": d_wg, "projector": d_wp, "llm": d_weff}
        if use_lora:
            grads["llm_adapter_a"] = self.B.T @ d_weff
            grads["llm_adapter_b"] = d_weff @ self.A.T
        return grads


def finite_difference_grads(model: ToyModel, batch: ToyBatch,
                            use_lora: bool = False, eps: float = 1e-6,
                            ) -> dict[str, np.ndarray]:
    """Central-difference gradients over every parameter block (the
    independent oracle for the analytic backward pass)."""
    blocks = {"vision_encoder": model.Wg, "projector": model.Wp, "llm": model.Wf}
    if use_lora:
        blocks["llm_adapter_a"] = model.A
        blocks["llm_adapter_b"] = model.B
    out = {}
    for name, w in blocks.items():
        g = np.zeros_like(w)
        it = np.nditer(w, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = w[idx]
            w[idx] = orig + eps
            lp = model.loss(batch, use_lora)
            w[idx] = orig - eps
            lm = model.loss(batch, use_lora)
            w[idx] = orig
            g[idx] = (lp - lm) / (2 * eps)
            it.iternext()
        out[name] = g
    return out


def make_batch(seed: int, model: ToyModel) -> ToyBatch:
    rng = np.random.default_rng(seed)
    return ToyBatch(
        x=rng.standard_normal(model.dx),
        q=toy_tokenizer("what is your diagnosis", model.dq),
        y=rng.standard_normal(model.do) * 0.5,
    )
