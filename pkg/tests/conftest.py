import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wcpqkd import DetectorParams

# reference parameter set used throughout: eta = 0.045, alpha = 0.21 dB/km,
# d = 8e-7 per gate, 3% modulation error, f = 1.18, 2 MHz clock
REF_ALPHA = 0.21
REF_CLOCK = 2e6
REF_F = 1.18


@pytest.fixture
def ref_detector():
    return DetectorParams(efficiency=0.045, dark_prob=8e-7, modulation_error=0.03)
