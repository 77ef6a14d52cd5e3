"""Named kernel recipes.

Grid-searched scale/shape/moment settings for natural and synthetic blur.  The
published cutoff integers use an undocumented filter-library unit, so they are
kept as metadata only; every preset is synthesized with a 0.6*pi cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from .kernels import FirKernel, GGParams, HvsKernelSpec, synthesize

__all__ = ["KernelPreset", "PRESETS", "UnknownPresetError", "get_preset", "preset_kernels"]

DEFAULT_CUTOFF = 0.6 * math.pi

# Direction of the score: C = -ln(mu_m) grows as the image gets blurrier, so a
# higher quality image has a lower score.  Verified on the bundled blur series.
SCORE_ORIENTATION = -1


class UnknownPresetError(KeyError):
    pass


@dataclass(frozen=True)
class KernelPreset:
    name: str
    specs: tuple[HvsKernelSpec, ...]
    table_cutoffs: tuple[int, ...]
    note: str
    orientation: int = SCORE_ORIENTATION


def _spec(alpha, beta, moment):
    return HvsKernelSpec(gg=GGParams(alpha, beta), cutoff=DEFAULT_CUTOFF, terms=3,
                         tap_length=25, moment=moment)


PRESETS: dict[str, KernelPreset] = {
    p.name: p
    for p in (
        KernelPreset("natural-1", (_spec(1.7, 1.4, 12),), (13,),
                     "natural blur, single kernel; published cutoff index 13"),
        KernelPreset("natural-2", (_spec(1.7, 1.4, 12), _spec(0.7, 0.8, 4)), (13, 26),
                     "natural blur, two kernels; published cutoff indices 13, 26"),
        KernelPreset("synthetic-1", (_spec(0.7, 0.8, 20),), (19,),
                     "synthetic blur, single kernel; published cutoff index 19"),
        KernelPreset("synthetic-2", (_spec(0.7, 0.8, 20), _spec(0.7, 0.9, 12)), (19, 20),
                     "synthetic blur, two kernels; published cutoff indices 19, 20"),
    )
}


def get_preset(name: str) -> KernelPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise UnknownPresetError(
            f"unknown preset {name!r}; choose one of {', '.join(PRESETS)}"
        ) from None


@lru_cache(maxsize=None)
def _cached(spec: HvsKernelSpec) -> FirKernel:
    return synthesize(spec)


def preset_kernels(name: str) -> list[tuple[HvsKernelSpec, FirKernel]]:
    """Synthesized ``(spec, kernel)`` pairs for a preset (cached per process)."""
    return [(s, _cached(s)) for s in get_preset(name).specs]
