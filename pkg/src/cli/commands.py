import csv
import json
import sys

from marshmallow import ValidationError as SchemaError

from src.cli.check import run_checks
from src.models.sampling import SampleConfig
from src.schemas.serializers.config import TrainConfigSchema
from src.schemas.serializers.reports import EvalReportSchema, NllReportSchema
from src.services import checkpoint as checkpoint_io
from src.services import sampler
from src.services.dataset import build_dataset
from src.services.training import eval_nll, train
from src.utils.errors import (
    ExitStatus,
    FormatError,
    InvariantError,
    StorageError,
    ValidationError,
)


def load_train_config(path):
    """Parse a JSON training config file into a ``TrainConfig``."""
    try:
        with open(path) as f:
            payload = json.load(f)
    except OSError as ex:
        raise StorageError(path, ex.strerror or str(ex)) from ex
    except json.JSONDecodeError as ex:
        raise FormatError(f"{path}: {ex}") from ex
    try:
        return TrainConfigSchema().load(payload)
    except SchemaError as ex:
        raise ValidationError(f"{path}: {ex.messages}") from ex


def dataset(args, settings) -> int:
    out = args.out or settings["DATA_DIR"]
    manifest = build_dataset(
        out,
        per_subtype=args.per_subtype or settings["PER_SUBTYPE"],
        master_seed=settings["MASTER_SEED"] if args.seed is None else args.seed,
        width=args.width or settings["IMAGE_WIDTH"],
        height=args.height or settings["IMAGE_HEIGHT"],
        workers=args.workers or settings["WORKERS"],
    )
    print(f"wrote {len(manifest)} images to {out}")
    return ExitStatus.OK.value


def train_(args, settings) -> int:
    config = load_train_config(args.config)
    resume = checkpoint_io.load(args.resume, config.model) if args.resume else None
    checkpoint, rows = train(config, resume=resume)
    if args.out:
        checkpoint_io.save(args.out, checkpoint)
    print(f"trained {checkpoint.step} steps, final {rows[-1].bits_per_dim:.4f} bits/dim")
    return ExitStatus.OK.value


def sample(args, settings) -> int:
    config = SampleConfig(
        checkpoints=args.ckpt,
        count=args.n,
        temperature=(
            settings["SAMPLE_TEMPERATURE"] if args.temperature is None else args.temperature
        ),
        rng_seed=args.seed,
        seed_image=args.seed_image,
        seed_rows=args.seed_rows,
        out_dir=args.out,
        fast_mode=args.fast,
    )
    manifest = sampler.generate(config, train_dir=args.train_dir, workers=args.workers)
    print(f"wrote {len(manifest['files'])} samples to {args.out}")
    return ExitStatus.OK.value


def evaluate(args, settings) -> int:
    data_dir = args.data or settings["DATA_DIR"]
    reports = eval_nll(args.ckpt, data_dir, batch_size=args.batch_size)
    if args.json:
        payload = {
            "overall": reports["overall"],
            "subtypes": {k: v for k, v in reports.items() if k != "overall"},
        }
        print(json.dumps(EvalReportSchema().dump(payload), indent=2))
    elif args.csv:
        writer = csv.writer(sys.stdout)
        columns = ("pixel_count", "total_nats", "bits_per_dim")
        writer.writerow(("subtype",) + columns)
        for name, report in reports.items():
            row = NllReportSchema().dump(report)
            writer.writerow((name,) + tuple(row[key] for key in columns))
    else:
        print(f"{'subtype':<28}{'pixels':>12}{'bits/dim':>10}")
        for name, report in reports.items():
            print(f"{name:<28}{report.pixel_count:>12}{report.bits_per_dim:>10.2f}")
    return ExitStatus.OK.value


def check(args, settings) -> int:
    seed = settings["CHECK_SEED"] if args.seed is None else args.seed
    if not run_checks(seed):
        raise InvariantError("one or more invariant groups failed")
    return ExitStatus.OK.value
