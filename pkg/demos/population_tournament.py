"""A tiny self-play population on the symmetric 2v2 arena.

Five MADDPG members train briefly against each other, meet in a round-robin
tournament, and the bottom fifth is replaced by perturbed copies of the top.

    python3 demos/population_tournament.py [output_dir]
"""

import sys
import tempfile
from pathlib import Path

import yaml

from marlkit.harness.config import config_from_dict
from marlkit.harness.population import tournament_command

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "arena_population.yaml"


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="arena_"))
    raw = yaml.safe_load(CONFIG.read_text())
    raw["output_dir"] = str(out)
    raw["population"].update(train_episodes=20, episodes_per_pair=4, generations=1)
    cfg = config_from_dict(raw)
    for gen in tournament_command(cfg):
        fit = ", ".join(f"{f:.2f}" for f in gen["fitness"])
        print(f"generation {gen['generation']}: fitness [{fit}] lineages {gen['lineages']}")
    print(f"checkpoints and tables under {out / 'population'}")


if __name__ == "__main__":
    main()
