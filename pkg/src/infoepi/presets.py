"""Built-in scenarios for the six published numerical experiments.

Parameter values and initial conditions are copied verbatim from the
figure captions. The Fig-6 and Fig-7 experiments compare two reduced
slow systems, so those presets carry a pair of branches.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import Params

FULL_T_END = 15_000.0
FIG8_T_END = 20_000.0
REDUCED_TAU_END = 500.0

_SHARED_67 = dict(K=0.9, epsilon=1 / 50, eta=0.1, mu1=5.2143, mu2=5.2143, gamma=0.1667)


@dataclass(frozen=True)
class Preset:
    name: str
    params: Params
    mode: str  # "full" or "reduced"
    initial: tuple
    t_end: float | None = None
    tau_end: float | None = None
    branches: tuple = ()


PRESETS = {
    "fig3": Preset(
        "fig3",
        Params(b1=1.5, b2=0.9, K=0.9, beta=6.0, gamma=0.8, eta=0.08, mu1=1.0, mu2=1.0, epsilon=1 / 100),
        "full", (0.9, 0.15, 0.05, 0.8, 0.2, 0.0), t_end=FULL_T_END),
    "fig4": Preset(
        "fig4",
        Params(b1=1.1, b2=0.92, K=0.9, beta=6.0, gamma=1.2, eta=0.7, mu1=1.0, mu2=1.0, epsilon=1 / 100),
        "full", (0.8, 0.2, 0.0, 0.8, 0.2, 0.0), t_end=FULL_T_END),
    "fig5": Preset(
        "fig5",
        Params(b1=1.5, b2=0.9, K=0.9, beta=7.0, gamma=0.8, eta=0.08, mu1=1.0, mu2=1.0, epsilon=1 / 100),
        "full", (0.9, 0.15, 0.05, 0.8, 0.2, 0.0), t_end=FULL_T_END),
    "fig6": Preset(
        "fig6",
        Params(b1=6.7041, b2=5.9041, beta=4.8429, **_SHARED_67),
        "reduced", (0.8, 0.2, 0.0), tau_end=REDUCED_TAU_END, branches=("C00", "C01")),
    "fig7": Preset(
        "fig7",
        Params(b1=5.9041, b2=6.7041, beta=5.919, **_SHARED_67),
        "reduced", (0.8, 0.2, 0.0), tau_end=REDUCED_TAU_END, branches=("C00", "C02")),
    "fig8": Preset(
        "fig8",
        Params(b1=10.79, b2=10.44, K=0.9, beta=1.0897, gamma=0.0776, eta=0.4570, mu1=0.87, mu2=0.87,
               epsilon=1 / 100),
        "full", (0.5, 0.2, 0.3, 0.7, 0.3, 0.0), t_end=FIG8_T_END),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None
