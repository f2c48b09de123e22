import argparse
import logging

from src.app import create_app
from src.cli import commands
from src.utils import abort_with
from src.utils.errors import BridgePixelCNNError

logger = logging.getLogger(__name__)


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bridge-pixelcnn",
        description="Synthesize bridge facades, train a PixelCNN and sample new bridges.",
    )
    parser.add_argument("--env", help="configuration environment (default: production)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="render the procedural bridge dataset")
    p.add_argument("--out", help="output directory (default: DATA_DIR)")
    p.add_argument("--per-subtype", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(handler=commands.dataset)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out", help="where to write the final checkpoint")
    p.set_defaults(handler=commands.train_)

    p = sub.add_parser("sample", help="generate images pixel by pixel")
    p.add_argument("--ckpt", required=True, action="append")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--temperature", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--seed-image")
    p.add_argument("--seed-rows", type=int, default=0)
    p.add_argument("--fast", action="store_true")
    p.add_argument("--train-dir", help="dataset used for nearest-image distances")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=commands.sample)

    p = sub.add_parser("eval", help="report bits/dim of a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", help="dataset directory (default: DATA_DIR)")
    p.add_argument("--batch-size", type=int, default=16)
    output = p.add_mutually_exclusive_group()
    output.add_argument("--csv", action="store_true")
    output.add_argument("--json", action="store_true")
    p.set_defaults(handler=commands.evaluate)

    p = sub.add_parser("check", help="run the invariant suite")
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=commands.check)
    return parser


def main(argv=None) -> int:
    args = create_parser().parse_args(argv)
    try:
        settings = create_app(config_name=args.env)
        return args.handler(args, settings)
    except (BridgePixelCNNError, OSError) as ex:
        return abort_with(ex)


if __name__ == "__main__":
    raise SystemExit(main())
