from omegaconf import DictConfig
from rich import traceback
import hydra

traceback.install()

# Setup root directory
from rootutils import autosetup

autosetup()

from src.modules import cmd_run, setup_logging


@hydra.main(config_path="../configs", config_name="run", version_base="1.3")
def main(cfg: DictConfig) -> None:
    setup_logging(cfg["log_level"])

    code = cmd_run(
        scenario=cfg["scenario"],
        policy=cfg["policy"],
        seed=cfg["seed"],
        out=cfg["out"],
        check_invariants=cfg["check_invariants"],
    )
    if code:
        raise SystemExit(code)


if __name__ == "__main__":
    main()
