import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # makes plot_support importable

from plot_support import FAST_SIM, run_primary


@pytest.fixture(scope="session")
def sweep_dir(tmp_path_factory):
    """A small two-seed sweep produced through the simulator CLI."""
    root = tmp_path_factory.mktemp("sweep")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(FAST_SIM))
    run_primary(["sweep", "--config", str(cfg), "--seeds", "2",
                 "--out", str(root / "out")], cwd=root)
    return root / "out"
