from omegaconf import DictConfig, OmegaConf
from rich import traceback
import hydra

traceback.install()

# Setup root directory
from rootutils import autosetup

autosetup()

from src.modules import cmd_compare, setup_logging


@hydra.main(config_path="../configs", config_name="compare", version_base="1.3")
def main(cfg: DictConfig) -> None:
    setup_logging(cfg["log_level"])

    # Plain lists, so the runs can be shipped to worker processes
    options = OmegaConf.to_container(cfg, resolve=True)

    code = cmd_compare(
        scenario=options["scenario"],
        policies=options["policies"],
        seeds=options["seeds"],
        out=options["out"],
        sweep=options["sweep"],
        jobs=options["jobs"],
    )
    if code:
        raise SystemExit(code)


if __name__ == "__main__":
    main()
