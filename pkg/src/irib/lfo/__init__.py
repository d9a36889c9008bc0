"""Look Forward Once: re-derive the projector's condition from its own LQ proxy and rerun."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..models import Condition, cosine, extract_condition
from ..numerics import Tensor, as_tensor, no_grad


@dataclass
class LfoTrace:
    """``conditions[i]`` produced ``lq_proxies[i] = f(x_elq; conditions[i])``."""

    conditions: list = field(default_factory=list)
    lq_proxies: list = field(default_factory=list)
    final_hq: Tensor | None = None
    final_condition: Condition | None = None

    @property
    def iterations(self) -> int:
        return len(self.conditions) - 1

    def dump(self, directory, save_image=None):
        """Write each condition as JSON and, given ``save_image(path, chw)``, each image."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        for i, c in enumerate(self.conditions, start=1):
            (out / f"condition_{i}.json").write_text(json.dumps(c.to_dict()))
        (out / "condition_final_lq.json").write_text(json.dumps(self.final_condition.to_dict()))
        if save_image is not None:
            for i, x in enumerate(self.lq_proxies, start=1):
                for b in range(x.shape[0]):
                    save_image(out / f"lq_proxy_{i}_{b}.png", x.data[b])
            for b in range(self.final_hq.shape[0]):
                save_image(out / f"final_{b}.png", self.final_hq.data[b])
        return out


def lfo_restore(x_elq, f, g, Y, iterations: int = 1) -> LfoTrace:
    """Run the ELQ -> LQ -> HQ chain with ``iterations`` look-ahead refinements.

    The projector always consumes the original ``x_elq``; only its condition
    changes between passes. The restorer's condition is extracted from the
    last LQ proxy.
    """
    if isinstance(iterations, bool) or int(iterations) != iterations or iterations < 0:
        raise ValueError(f"iterations must be a non-negative integer, got {iterations!r}")
    x = as_tensor(x_elq).detach()
    trace = LfoTrace()
    with no_grad():
        c = extract_condition(x, Y)
        for i in range(int(iterations) + 1):
            if i:
                c = extract_condition(trace.lq_proxies[-1], Y)
            trace.conditions.append(c)
            trace.lq_proxies.append(f(x, c))
        trace.final_condition = extract_condition(trace.lq_proxies[-1], Y)
        trace.final_hq = g(trace.lq_proxies[-1], trace.final_condition)
    return trace


def condition_alignment(trace: LfoTrace, z_hq, Y) -> np.ndarray:
    """Cosine of every ``conditions[i]`` with ``Y(z_hq)``; shape (iterations + 1, N)."""
    target = extract_condition(z_hq, Y)
    return np.stack([cosine(c, target) for c in trace.conditions])


__all__ = ["LfoTrace", "condition_alignment", "lfo_restore"]
