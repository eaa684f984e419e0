import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from surftrap import CA40, Electrode, TrapLayout
from surftrap.datafiles import paper_layout
from surftrap.trap import rf_null, secular_modes

UM = 1e-6


@pytest.fixture(scope="session")
def paper_trap():
    return paper_layout()


@pytest.fixture(scope="session")
def paper_null(paper_trap):
    return rf_null(paper_trap)


@pytest.fixture(scope="session")
def paper_modes(paper_trap, paper_null):
    return secular_modes(paper_trap, CA40, null_point=paper_null)


@pytest.fixture()
def five_wire_symmetric():
    """Symmetric five-wire test layout: equal RF rails around a center rail."""
    L = 2000 * UM
    return TrapLayout(
        [
            Electrode("c", "DC", (-150 * UM, 150 * UM), (-L, L)),
            Electrode("rf_a", "RF", (150 * UM, 450 * UM), (-L, L)),
            Electrode("rf_b", "RF", (-450 * UM, -150 * UM), (-L, L)),
        ],
        rf_amplitude=100.0,
        rf_omega=2 * np.pi * 15e6,
    )


def rng(seed):
    return np.random.default_rng(seed)
