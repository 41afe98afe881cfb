from __future__ import annotations

import argparse
import importlib.metadata
import logging
import sys
import tomllib
from datetime import datetime
from pathlib import Path

from gaugefuse_cli.config import PipelineConfig, resolve_config
from gaugefuse_cli.pipeline import (
    cmd_baseline,
    cmd_build_dataset,
    cmd_evaluate,
    cmd_fuse_inference,
    cmd_sanity_check,
)
from gaugefuse_core.errors import GaugefuseError, InternalError
from gaugefuse_ingest.gridpack import parse_utc

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


def _resolve_version() -> str:
    try:
        return importlib.metadata.version("gaugefuse")
    except importlib.metadata.PackageNotFoundError:
        pyproject = Path(__file__).resolve().parents[2] / "pyproject.toml"
        try:
            data = tomllib.loads(pyproject.read_text(encoding="utf-8"))
            return str(data["project"]["version"])
        except (FileNotFoundError, KeyError, OSError, tomllib.TOMLDecodeError):
            return "0.0.0-dev"


def _timestamp(text: str) -> datetime:
    try:
        return parse_utc(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an ISO 8601 timestamp: {text}") from exc


def _leads(text: str) -> list[int]:
    try:
        leads = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"leads must be comma-separated integers: {text}") from exc
    if not leads:
        raise argparse.ArgumentTypeError("leads must name at least one lead time")
    return leads


def _config(args: argparse.Namespace) -> PipelineConfig:
    config = resolve_config(Path(args.config) if args.config else None)
    return config.with_overrides(
        version=args.dataset_version,
        out=args.out,
        leads=args.leads,
        no_mask=args.no_mask,
    )


def _cmd_build_dataset(args: argparse.Namespace) -> int:
    result = cmd_build_dataset(_config(args), heatmap_at=args.export_heatmap)
    print(f"built {result.n_examples} examples: {result.x_path} {result.y_path}")
    print(f"wrote {result.manifest_path}")
    if result.heatmap_path:
        print(f"wrote {result.heatmap_path}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    json_path, csv_path = cmd_evaluate(Path(args.predictions), Path(args.observations), _config(args))
    print(f"wrote {json_path}")
    print(f"wrote {csv_path}")
    return 0


def _cmd_fuse_inference(args: argparse.Namespace) -> int:
    result = cmd_fuse_inference(_config(args), args.t0, heatmap_at=args.export_heatmap)
    print(f"fused {result.version}: {result.x_path}")
    print(f"wrote {result.manifest_path}")
    if result.heatmap_path:
        print(f"wrote {result.heatmap_path}")
    return 0


def _cmd_sanity_check(args: argparse.Namespace) -> int:
    outputs = cmd_sanity_check(
        _config(args),
        a=Path(args.a) if args.a else None,
        b=Path(args.b) if args.b else None,
        station=args.station,
    )
    for path in outputs:
        print(f"wrote {path}")
    return 0


def _cmd_baseline(args: argparse.Namespace) -> int:
    result = cmd_baseline(
        _config(args),
        args.method,
        args.split,
        dataset=Path(args.dataset) if args.dataset else None,
    )
    print(f"forecast {result.n_examples} examples: {result.pred_path} {result.obs_path}")
    return 0


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="path to gaugefuse.toml")
    common.add_argument(
        "--version",
        dest="dataset_version",
        default=None,
        metavar="VERSION",
        help="dataset version label, e.g. ERA5, ERA5+SIA, GFS+A",
    )
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--leads", type=_leads, default=None, help="comma-separated lead times")
    common.add_argument("--no-mask", action="store_true", help="evaluate over the whole grid")
    common.add_argument("-v", "--verbose", action="store_true", help="log debug output")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaugefuse")
    parser.add_argument("-V", action="version", version=f"gaugefuse {_resolve_version()}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_flags()

    p_build = sub.add_parser(
        "build-dataset", parents=[common], help="fuse, window and write the training tensors"
    )
    p_build.add_argument("--export-heatmap", type=_timestamp, default=None, metavar="T")
    p_build.set_defaults(fn=_cmd_build_dataset)

    p_eval = sub.add_parser(
        "evaluate", parents=[common], help="score predictions against observations"
    )
    p_eval.add_argument("predictions")
    p_eval.add_argument("observations")
    p_eval.set_defaults(fn=_cmd_evaluate)

    p_infer = sub.add_parser(
        "fuse-inference", parents=[common], help="fuse one input window over the NWP background"
    )
    p_infer.add_argument("--t0", type=_timestamp, required=True, help="last input hour (UTC)")
    p_infer.add_argument("--export-heatmap", type=_timestamp, default=None, metavar="T")
    p_infer.set_defaults(fn=_cmd_fuse_inference)

    p_sanity = sub.add_parser(
        "sanity-check", parents=[common], help="compare two grid sources and a station"
    )
    p_sanity.add_argument("--a", default=None, help="first grid pack (default: first train pack)")
    p_sanity.add_argument("--b", default=None, help="second grid pack (default: first inference pack)")
    p_sanity.add_argument("--station", default=None, help="station id for the time-series table")
    p_sanity.set_defaults(fn=_cmd_sanity_check)

    p_base = sub.add_parser(
        "baseline", parents=[common], help="write persistence or climatology forecasts"
    )
    p_base.add_argument("--method", choices=["persistence", "climatology"], default="persistence")
    p_base.add_argument("--split", choices=["train", "val", "test"], default="test")
    p_base.add_argument("--dataset", default=None, help="dataset stem (default: <out>/dataset)")
    p_base.set_defaults(fn=_cmd_baseline)
    return parser


def main() -> None:
    args = build_parser().parse_args()
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format=LOG_FORMAT,
        stream=sys.stderr,
    )
    try:
        code = args.fn(args)
    except GaugefuseError as exc:
        print(exc, file=sys.stderr)
        raise SystemExit(exc.exit_code) from exc
    except Exception as exc:  # noqa: BLE001
        err = InternalError(f"internal error: {exc}", code="GF1700")
        print(err, file=sys.stderr)
        raise SystemExit(err.exit_code) from exc
    raise SystemExit(code)


if __name__ == "__main__":
    main()
