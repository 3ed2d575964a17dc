"""Trains PPO on take-cover through the harness, then races it against the
scripted cover oracle on held-out episodes.

A short budget keeps the demo to a minute or two; the shipped config
``configs/take_cover_ppo.yaml`` is the full-size run.

    python3 demos/take_cover_train_and_compare.py [output_dir]
"""

import sys
import tempfile
from pathlib import Path

import yaml

from marlkit.harness.config import config_from_dict
from marlkit.harness.evaluation import compare_command
from marlkit.harness.training import train_command

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "take_cover_ppo.yaml"


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="take_cover_"))
    raw = yaml.safe_load(CONFIG.read_text())
    raw.update(seeds=[0], total_steps=120_000, output_dir=str(out), checkpoint_every=None)
    cfg = config_from_dict(raw)

    status, summaries = train_command(cfg)
    s = summaries[0]
    print(f"trained {s['steps']} steps in {s['seconds']:.0f}s, "
          f"trailing success {s['win_rate_trailing_500']:.2f}")

    report = compare_command(cfg, out / "seed_0" / "final.ckpt", out / "compare.csv")
    rl, oracle = report["learned"], report["oracle"]
    print(f"learned: success {rl['success_rate']:.2f}, median steps {rl['median_agent_steps']}")
    print(f"oracle:  success {oracle['success_rate']:.2f}, median steps {oracle['median_agent_steps']}")
    print(f"per-episode table: {out / 'compare.csv'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
