from omegaconf import DictConfig
from rich import traceback
import hydra

traceback.install()

# Setup root directory
from rootutils import autosetup

autosetup()

from src.modules import cmd_validate, setup_logging


@hydra.main(config_path="../configs", config_name="validate", version_base="1.3")
def main(cfg: DictConfig) -> None:
    setup_logging(cfg["log_level"])

    code = cmd_validate(cfg["scenario"])
    if code:
        raise SystemExit(code)


if __name__ == "__main__":
    main()
