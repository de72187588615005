"""Photon trapping in embedded eigenstates of cavity-atom-waveguide systems.

Submodules: :mod:`model` (spectra and bound-state conditions), :mod:`onephoton`
(single-excitation transport), :mod:`twophoton` (two-photon real-space engine),
:mod:`coherent` (master equation under coherent drive), :mod:`protocols`
(trapping, release, sweeps and loss studies) and :mod:`cli`.
"""

__version__ = "0.1.0"

from .errors import EETrapError  # noqa: E402
from .model import (SystemParams, ThreeModeParams, bright_frequency, ee_frequency,  # noqa: E402
                    single_excitation_heff, solve_g_for_ee, solve_j_for_ee, three_mode_heff, with_ee_coupling)

__all__ = ["EETrapError", "SystemParams", "ThreeModeParams", "bright_frequency", "ee_frequency",
           "single_excitation_heff", "solve_g_for_ee", "solve_j_for_ee", "three_mode_heff", "with_ee_coupling",
           "__version__"]
