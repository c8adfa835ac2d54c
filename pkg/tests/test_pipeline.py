"""End-to-end: train -> evaluate -> export -> render every figure kind.

The renderer is a separate package consuming only the exported CSVs, so it
is exercised through its console script rather than imported.
"""

import shutil
import subprocess

import pytest

from uavris.cli import main

TINY = [
    "--set", "num_uavs=3", "--set", "num_gts=3", "--set", "num_slots=8",
    "--set", "ris_rows=4", "--set", "ris_cols=4", "--set", "hidden_size=8",
    "--set", "encoder_size=8", "--set", "episodes=4", "--set", "rollout_len=8",
]

plotkit_bin = shutil.which("plotkit")


@pytest.fixture(scope="module")
def exported_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipeline")
    assert main(["train", "--seed", "0", "--out", str(out)] + TINY) == 0
    run = next(out.iterdir())
    ckpt = sorted((run / "checkpoints").glob("*.npz"))[-1]
    assert main(["evaluate", "--ckpt", str(ckpt), "--seeds", "0,1"]) == 0
    for what in ("metrics", "trajectories", "phases", "votes", "ma", "cdf"):
        assert main(["export", "--run", str(run), "--what", what]) == 0
    return run


def test_exports_exist(exported_run):
    for name in ("metrics.csv", "eval.csv", "phases.csv", "trajectories.csv",
                 "votes.csv", "ma.csv", "cdf.csv"):
        assert (exported_run / name).exists(), name


@pytest.mark.skipif(plotkit_bin is None, reason="plotkit console script not installed")
def test_all_seven_figures_render(exported_run, tmp_path):
    jobs = [
        ("reward", [exported_run / "metrics.csv"]),
        ("error", [exported_run / "metrics.csv"]),
        ("traj", [exported_run / "trajectories.csv"]),
        ("phase", [exported_run / "phases.csv"]),
        ("votes", [exported_run / "votes.csv"]),
        ("ma", [exported_run / "ma.csv"]),
        ("cdf", [exported_run / "cdf.csv"]),
    ]
    for kind, inputs in jobs:
        out = tmp_path / f"{kind}.png"
        proc = subprocess.run(
            [plotkit_bin, "plot", "--kind", kind, "--in", *map(str, inputs), "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, f"{kind}: {proc.stderr}"
        assert out.exists() and out.stat().st_size > 0
