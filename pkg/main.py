import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from utils.config import settings
from cli.models import Subcommand, load_config
from cli.routes import EXIT_IO, dispatch
from core.errors import ConfigError

# Configure logging
logging.basicConfig(
    level=logging.DEBUG if settings.DEBUG else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=[logging.StreamHandler(sys.stdout)]
)
logger = logging.getLogger(__name__)


def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="helmstab",
        description="Numerical lab for increasing stability of the inverse Helmholtz problem.",
    )
    parser.add_argument("subcommand", choices=[s.value for s in Subcommand])
    parser.add_argument("--config", help="JSON run document; every flag below overrides it")
    parser.add_argument("--k", type=_floats, help="frequencies, e.g. 2,4,8")
    parser.add_argument("--noise", type=_floats, help="target ||E||_* of injected noise, e.g. 1e-4")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--modes-per-face", dest="modes_per_face", type=int)
    parser.add_argument("--dim", type=int)
    parser.add_argument("--points", dest="points_per_axis", type=int)
    parser.add_argument("--mode", choices=["oracle", "blind", "truth"])
    parser.add_argument("--radius", type=float, help="single extraction radius (extract only)")
    parser.add_argument("--strict", action="store_true", default=None, help="keep certified band thresholds")
    parser.add_argument("--ladder", action="store_true", default=None, help="repeat --radius over the |zeta| ladder (extract, n = 3)")
    parser.add_argument("--random-pairs", dest="random_pairs", action="store_true", default=None,
                        help="draw random bump pairs for check-identity")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides: Dict[str, Any] = {key: value for key, value in vars(args).items() if key not in ("subcommand", "config")}
    try:
        config = load_config(args.config, overrides)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_IO
    return dispatch(Subcommand(args.subcommand), config)


if __name__ == "__main__":
    sys.exit(main())
