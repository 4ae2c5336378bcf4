import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from dotenv import load_dotenv

from configs.config_manager import ConfigManager, RunConfig
from data.case_table import ReferenceCases
from data.dataset_manager import DatasetManager, load_dataset
from data.field_sample import Dataset, FieldSample, SampleMeta
from data.normalization import encode_condition
from data.sample_io import read_sample, write_sample
from data.synthetic import build_synthetic_dataset, cylinder_mask
from diffusion.forward_process import noise_generator
from models.checkpoint import load_checkpoint
from utils.ablation import run_ablation
from utils.archive_parser import import_archive
from utils.errors import ConfigError, DataError, FoilDiffError
from utils.evaluator import Evaluator, dump_prediction_fields
from utils.report_generator import ReportGenerator
from utils.run_directory import create_run_directory
from utils.trainer import train

logger = logging.getLogger("foildiff")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
EXIT_EMPTY_IMPORT = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foildiff", description="Diffusion surrogate for airfoil flow fields")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)

    def add_common(sub, out_help: str):
        sub.add_argument("--config", help="JSON run configuration merged onto the defaults")
        sub.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE",
                         help="override one config field, e.g. --set training.iterations=500")
        sub.add_argument("--seed", type=int, help="run seed (conflicts with a different --set seed=)")
        sub.add_argument("--out", required=True, help=out_help)

    sub = commands.add_parser("import", help="convert the upstream archive into the foildiff layout")
    sub.add_argument("archive", help="directory or zip of upstream .npz files")
    add_common(sub, "dataset directory to write")

    sub = commands.add_parser("synth", help="write a synthetic potential-flow dataset")
    add_common(sub, "dataset directory to write")

    for name, help_text in (("train", "train a denoiser"), ("sample", "generate fields for one condition"),
                            ("evaluate", "score a checkpoint against the reference statistics"),
                            ("ablate", "train and evaluate the ablation variants")):
        sub = commands.add_parser(name, help=help_text)
        add_common(sub, "directory receiving the run directory")
        sub.add_argument("--data", help="dataset directory (default: data.root or FOILDIFF_DATA_ROOT)")
        if name in ("sample", "evaluate"):
            sub.add_argument("--checkpoint", required=True, help="trained .fdc checkpoint")
    return parser


def resolve_config(args) -> RunConfig:
    """Defaults, environment, config file, overrides and seed, validated as a whole."""
    manager = ConfigManager()
    device = os.getenv("FOILDIFF_DEVICE")
    if device:
        manager.tree["device"] = device
    if args.config:
        manager.load(args.config)
    manager.apply_overrides(args.overrides)
    manager.apply_seed(args.seed)
    return manager.build()


def resolve_data_root(args, config: RunConfig) -> Path:
    root = getattr(args, "data", None) or config.data.root or os.getenv("FOILDIFF_DATA_ROOT")
    if not root:
        raise ConfigError("data.root: no dataset given (use --data, data.root or FOILDIFF_DATA_ROOT)")
    return Path(root)


def load_run_dataset(args, config: RunConfig) -> Dataset:
    return load_dataset(resolve_data_root(args, config), workers=config.data.workers)


def cmd_import(args, config: RunConfig) -> int:
    result = import_archive(args.archive, args.out)
    print(result.manifest)
    if result.empty:
        logger.warning("Import produced an empty manifest")
        return EXIT_EMPTY_IMPORT
    return 0


def cmd_synth(args, config: RunConfig) -> int:
    synth = config.synthetic
    manifest = build_synthetic_dataset(
        args.out, grid=synth.grid, replicates=synth.replicates, noise_scale=synth.noise_scale, seed=config.seed,
        alpha_deg=synth.alpha_deg, case_ids=synth.case_ids, radius=synth.radius, circulation=synth.circulation,
    )
    print(manifest)
    return 0


def cmd_train(args, config: RunConfig) -> int:
    dataset = load_run_dataset(args, config)
    run_dir = create_run_directory(args.out, "train", config.config_hash, config.tree)
    result = train(config, dataset, run_dir)
    print(run_dir)
    for path in result.checkpoints:
        print(path)
    print(result.loss_log)
    return 0


def manifest_re_max(root) -> float:
    """Dataset-wide Reynolds scale, read from the manifest alone."""
    frame = DatasetManager(root).read_manifest()
    if frame.empty:
        raise DataError(f"Dataset {root} has no cases to take re_max from; set sample.re_max instead")
    return float(frame["re_max"].iloc[0])


def sample_condition(args, config: RunConfig, image_size: int) -> np.ndarray:
    """Condition for the requested (Re, alpha, geometry)."""
    sample = config.sample
    re_max = sample.re_max
    if re_max is None:
        root = getattr(args, "data", None) or config.data.root or os.getenv("FOILDIFF_DATA_ROOT")
        re_max = manifest_re_max(root) if root else ReferenceCases.re_max()
    if sample.mask_from:
        mask = read_sample(sample.mask_from).mask
    else:
        mask = cylinder_mask((image_size, image_size), sample.radius)
    return encode_condition(mask, sample.reynolds, sample.alpha_deg, re_max)


def cmd_sample(args, config: RunConfig) -> int:
    model = load_checkpoint(args.checkpoint, device=config.device)
    condition = sample_condition(args, config, model.config.image_size)
    plan = config.sampler_plan()
    evaluator = Evaluator(model, config.noise_schedule(), plan, device=config.device)
    model.eval()
    prediction = evaluator.ensemble_predict(condition, config.sample.count,
                                            noise_generator(config.seed, 0, device=config.device))
    run_dir = create_run_directory(args.out, "sample", config.config_hash, config.tree)
    fluid = condition[0] < 0.5
    fields = [(f"member_{i:03d}.fds", i, member) for i, member in enumerate(prediction.members)]
    fields.append(("mean.fds", 0, prediction.mean))
    if prediction.std is not None:
        fields.append(("std.fds", 1, prediction.std))
    for name, replicate, values in fields:
        write_sample(run_dir / name, FieldSample(
            condition=condition.astype(np.float32),
            target=np.where(fluid, values, 0.0).astype(np.float32),
            meta=SampleMeta(case_id=0, reynolds=config.sample.reynolds, alpha_deg=config.sample.alpha_deg,
                            replicate=replicate),
        ))
    summary = {
        "reynolds": config.sample.reynolds,
        "alpha_deg": config.sample.alpha_deg,
        "count": prediction.size,
        "plan": f"{plan.kind.value} x{len(plan)}",
        "model_evaluations": prediction.model_evaluations,
        "seconds_per_sample": prediction.seconds_per_sample,
        "degenerate": prediction.degenerate,
    }
    with open(run_dir / "sample_summary.json", "w") as f:
        json.dump(summary, f, indent=2)
    print(run_dir)
    return 0


def cmd_evaluate(args, config: RunConfig) -> int:
    dataset = load_run_dataset(args, config)
    model = load_checkpoint(args.checkpoint, device=config.device, prefer_ema=config.evaluation.use_ema)
    evaluation = config.evaluation
    evaluator = Evaluator(model, config.noise_schedule(), config.sampler_plan(), device=config.device)
    report, details = evaluator.evaluate(dataset, evaluation.ensemble_size, seed=config.seed,
                                         case_ids=evaluation.case_ids, subset=evaluation.subset,
                                         shared_noise=evaluation.shared_noise)
    run_dir = create_run_directory(args.out, "evaluate", config.config_hash, config.tree)
    paths = ReportGenerator(run_dir).write_eval_report(report)
    if evaluation.dump_fields:
        paths.extend(dump_prediction_fields(run_dir / "fields", dataset, details))
    print(run_dir)
    for path in paths:
        print(path)
    return 0


def cmd_ablate(args, config: RunConfig) -> int:
    dataset = load_run_dataset(args, config)
    run_dir = create_run_directory(args.out, "ablate", config.config_hash, config.tree)
    _, paths = run_ablation(config, dataset, run_dir)
    print(run_dir)
    for path in paths:
        print(path)
    return 0


COMMANDS = {
    "import": cmd_import,
    "synth": cmd_synth,
    "train": cmd_train,
    "sample": cmd_sample,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
}


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)
    try:
        config = resolve_config(args)
        return COMMANDS[args.command](args, config)
    except FoilDiffError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
