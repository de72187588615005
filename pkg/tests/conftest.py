import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from eetrap.model import SystemParams, ThreeModeParams, solve_g_for_ee, with_ee_coupling  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def reference():
    """Cavity + atom on the bound-state condition (w_A = 1, w_c = 0.96, V_A = 0.1, V_C = 0.05)."""
    return with_ee_coupling(SystemParams(omega_c=0.96, omega_a=1.0, v_a=0.1, v_c=0.05))


@pytest.fixture(scope="session")
def three_mode():
    q = ThreeModeParams(omega_1=1.0, omega_2=0.96, omega_a=1.0, j_coupling=0.003, g_coupling=0.0,
                        v_1=0.1, v_2=0.05)
    return q.replace(g_coupling=solve_g_for_ee(q))


@pytest.fixture(scope="session")
def figures_dir():
    return ROOT / "figures"
