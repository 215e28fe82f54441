"""Named parameter storage, adaptive-moment updates and checkpoint files."""

from __future__ import annotations

import json

import numpy as np

from .autodiff import Tensor

CHECKPOINT_VERSION = 1


class MissingGradientError(RuntimeError):
    def __init__(self, name: str):
        super().__init__(f"parameter {name!r} has no gradient; run backward first")
        self.name = name


class ParameterStore:
    """Uniquely named trainable tensors with first/second moment accumulators.

    A store is confined to one worker; ``trainable=False`` builds frozen
    copies (target networks) whose tensors never track gradients.
    """

    def __init__(self, trainable: bool = True):
        self.params: dict[str, Tensor] = {}
        self.moment1: dict[str, np.ndarray] = {}
        self.moment2: dict[str, np.ndarray] = {}
        self.step_count = 0
        self.trainable = trainable
        self.meta: dict = {}

    def create(self, name: str, values: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(values, dtype=np.float64), requires_grad=self.trainable)
        self.params[name] = t
        self.moment1[name] = np.zeros_like(t.data)
        self.moment2[name] = np.zeros_like(t.data)
        return t

    def get_or_create(self, name: str, init_fn) -> Tensor:
        """Return the existing parameter or create it from ``init_fn()``.

        Lets network modules be rebuilt over a store loaded from a
        checkpoint without clobbering its values.
        """
        if name in self.params:
            return self.params[name]
        return self.create(name, init_fn())

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self):
        return list(self.params)

    def zero_grads(self):
        for t in self.params.values():
            t.grad = np.zeros_like(t.data)

    def grad_norm(self) -> float:
        total = 0.0
        for t in self.params.values():
            if t.grad is not None:
                total += float((t.grad * t.grad).sum())
        return float(np.sqrt(total))

    def copy_values_from(self, other: "ParameterStore"):
        """Bit-exact value copy (target network sync). Moments are not copied."""
        if set(self.params) != set(other.params):
            raise ValueError("parameter stores hold different names")
        for name, src in other.params.items():
            dst = self.params[name]
            if dst.data.shape != src.data.shape:
                raise ValueError(f"shape mismatch for {name!r}: {dst.data.shape} vs {src.data.shape}")
            dst.data = src.data.copy()

    # checkpoint io -------------------------------------------------------

    def save(self, path):
        arrays = {"__meta__": np.frombuffer(
            json.dumps({
                "format_version": CHECKPOINT_VERSION,
                "step_count": self.step_count,
                "names": list(self.params),
                "extra": self.meta,
            }).encode(), dtype=np.uint8)}
        for name, t in self.params.items():
            arrays["param." + name] = t.data
            arrays["m1." + name] = self.moment1[name]
            arrays["m2." + name] = self.moment2[name]
        with open(path, "wb") as f:
            np.savez(f, **arrays)

    @classmethod
    def load(cls, path, trainable: bool = True) -> "ParameterStore":
        with np.load(path) as z:
            meta = json.loads(bytes(z["__meta__"].tobytes()).decode())
            if meta.get("format_version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('format_version')!r}")
            store = cls(trainable=trainable)
            store.step_count = int(meta["step_count"])
            store.meta = meta.get("extra", {})
            for name in meta["names"]:
                store.create(name, z["param." + name])
                store.moment1[name] = z["m1." + name].copy()
                store.moment2[name] = z["m2." + name].copy()
        return store


def uniform_fan_in(rng: np.random.Generator, shape, fan_in: int | None = None) -> np.ndarray:
    """Uniform init scaled by 1/sqrt(fan_in); fan_in defaults to shape[0]."""
    if fan_in is None:
        fan_in = shape[0] if len(shape) > 1 else shape[0]
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def adam_step(
    store: ParameterStore,
    lr: float,
    l2_coef: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    max_grad_norm: float | None = None,
):
    """One adaptive-moment update over every parameter in the store.

    The L2 penalty is added to the raw gradient before the moment update.
    Gradients are left in place afterwards; callers reset via zero_grads.
    """
    for name, t in store.params.items():
        if t.grad is None:
            raise MissingGradientError(name)

    clip_scale = 1.0
    if max_grad_norm is not None:
        norm = store.grad_norm()
        if norm > max_grad_norm:
            clip_scale = max_grad_norm / (norm + 1e-12)

    store.step_count += 1
    t_step = store.step_count
    bc1 = 1.0 - beta1**t_step
    bc2 = 1.0 - beta2**t_step
    for name, p in store.params.items():
        g = p.grad * clip_scale + l2_coef * p.data
        m1 = store.moment1[name]
        m2 = store.moment2[name]
        m1 *= beta1
        m1 += (1.0 - beta1) * g
        m2 *= beta2
        m2 += (1.0 - beta2) * g * g
        p.data = p.data - lr * (m1 / bc1) / (np.sqrt(m2 / bc2) + eps)
