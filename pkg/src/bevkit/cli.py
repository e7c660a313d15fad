"""Command-line client for the pipeline service.

Every subcommand reads documents from disk, calls the corresponding HTTP
endpoint and writes the response documents back out canonically. By
default the service runs in-process; pass --server to talk to a remote
instance instead. Exit codes: 0 success, 1 usage error, 2 data error
(malformed files, rejected requests, failed selftest).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import httpx
from pydantic import BaseModel

from . import __version__
from .documents import (
    ConfigDocument,
    DetectionSampleDoc,
    DetectionsDocument,
    GtDatabaseDocument,
    SceneDocument,
)
from .fileio import FileFormatError, load_document, save_document
from .service import schemas

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of calling sys.exit(2) on bad usage."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class Client:
    """Minimal wrapper around an httpx client bound to the service."""

    def __init__(self, server: str | None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=300.0)
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app(), raise_server_exceptions=False)

    def post(self, path: str, payload: BaseModel | None, response_model):
        body = payload.model_dump(mode="json") if payload is not None else {}
        resp = self._client.post(path, json=body)
        if resp.status_code != 200:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise ValueError(f"{path} failed ({resp.status_code}): {detail}")
        return response_model.model_validate(resp.json())

    def close(self):
        self._client.close()


def _load_config(path: str | None) -> ConfigDocument | None:
    return load_document(path, ConfigDocument) if path else None


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="pipeline config file (JSON)")
    p.add_argument("--server", help="base URL of a running service; default runs in-process")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bevkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"bevkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-objects", type=int, default=6)
    p.add_argument("--n-points", type=int, default=20000)
    p.add_argument("--n-cameras", type=int, default=6)
    p.add_argument("--sample-id")
    p.add_argument("--out", required=True, help="scene file to write")
    p.add_argument("--gt-out", help="also write the ground truth as a detections file")
    _add_common(p)

    p = sub.add_parser("pipeline", help="run both branches and dump BEV grids")
    p.add_argument("--scene", required=True, help="scene file")
    p.add_argument("--out", required=True, help="output directory for grid dumps")
    p.add_argument("--fused-only", action="store_true", help="skip per-branch grid dumps")
    _add_common(p)

    p = sub.add_parser("nms", help="suppress overlapping boxes in a detections file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iou-threshold", type=float)
    p.add_argument("--score-threshold", type=float)
    p.add_argument("--no-per-class", action="store_true", help="suppress across classes")
    _add_common(p)

    p = sub.add_parser("tta", help="expand a scene, detect on ground truth, collapse back")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True, help="pooled detections file to write")
    _add_common(p)

    p = sub.add_parser("wbf", help="fuse detection files with weighted box fusion")
    p.add_argument("--in", dest="infiles", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights", type=float, nargs="+", help="one weight per input file")
    _add_common(p)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True, help="predictions detections file")
    p.add_argument("--gt", required=True, help="ground-truth detections file")
    p.add_argument("--out", required=True, help="report file to write")
    p.add_argument("--json-out", help="also write the raw result document")
    _add_common(p)

    p = sub.add_parser("paste", help="paste database objects into a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--source", nargs="+", default=[], help="scene files to crop objects from")
    p.add_argument("--db", help="prebuilt object database file")
    p.add_argument("--db-out", help="write the (built) database file")
    p.add_argument("--quota", nargs="+", default=[], metavar="CLASS=N")
    p.add_argument("--seed", type=int)
    _add_common(p)

    p = sub.add_parser("selftest", help="run the built-in oracle battery")
    _add_common(p)

    p = sub.add_parser("serve", help="run the HTTP service with uvicorn")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8099)
    return parser


def _parse_quota(items: list[str]) -> dict[str, int] | None:
    if not items:
        return None
    quota = {}
    for item in items:
        name, _, count = item.partition("=")
        if not count or not count.lstrip("-").isdigit():
            raise UsageError(f"bad quota {item!r}, expected CLASS=N")
        quota[name] = int(count)
    return quota


def _cmd_synth(args, client: Client) -> int:
    req = schemas.SynthRequest(
        seed=args.seed,
        n_objects=args.n_objects,
        n_points=args.n_points,
        n_cameras=args.n_cameras,
        sample_id=args.sample_id,
        config=_load_config(args.config),
    )
    scene = client.post("/synth", req, SceneDocument)
    save_document(args.out, scene)
    print(f"wrote scene {scene.sample_id!r} to {args.out}")
    if args.gt_out:
        gt = DetectionsDocument(
            samples=[DetectionSampleDoc(sample_id=scene.sample_id, boxes=scene.boxes)]
        )
        save_document(args.gt_out, gt)
        print(f"wrote ground truth to {args.gt_out}")
    return EXIT_OK


def _cmd_pipeline(args, client: Client) -> int:
    req = schemas.PipelineRequest(
        scene=load_document(args.scene, SceneDocument),
        config=_load_config(args.config),
        include_branch_grids=not args.fused_only,
    )
    resp = client.post("/pipeline", req, schemas.PipelineResponse)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_document(out / "fused_bev.json", resp.fused)
    written = ["fused_bev.json"]
    if resp.camera is not None:
        save_document(out / "camera_bev.json", resp.camera)
        written.append("camera_bev.json")
    if resp.lidar is not None:
        save_document(out / "lidar_bev.json", resp.lidar)
        written.append("lidar_bev.json")
    save_document(out / "diagnostics.json", resp.diagnostics)
    written.append("diagnostics.json")
    shape = "x".join(str(s) for s in resp.fused.shape)
    print(f"fused grid {shape}; wrote {', '.join(written)} to {out}")
    return EXIT_OK


def _cmd_nms(args, client: Client) -> int:
    req = schemas.NmsRequest(
        detections=load_document(args.infile, DetectionsDocument),
        iou_threshold=args.iou_threshold,
        score_threshold=args.score_threshold,
        per_class=not args.no_per_class,
        config=_load_config(args.config),
    )
    out = client.post("/nms", req, DetectionsDocument)
    save_document(args.out, out)
    n = sum(len(s.boxes) for s in out.samples)
    print(f"kept {n} boxes across {len(out.samples)} samples -> {args.out}")
    return EXIT_OK


def _cmd_tta(args, client: Client) -> int:
    req = schemas.TtaRequest(
        scene=load_document(args.scene, SceneDocument), config=_load_config(args.config)
    )
    resp = client.post("/tta", req, schemas.TtaResponse)
    save_document(args.out, resp.detections)
    n = sum(len(s.boxes) for s in resp.detections.samples)
    print(f"collapsed {resp.n_variants} variants into {n} boxes -> {args.out}")
    return EXIT_OK


def _cmd_wbf(args, client: Client) -> int:
    req = schemas.WbfRequest(
        detection_sets=[load_document(f, DetectionsDocument) for f in args.infiles],
        weights=args.weights,
        config=_load_config(args.config),
    )
    out = client.post("/wbf", req, DetectionsDocument)
    save_document(args.out, out)
    n = sum(len(s.boxes) for s in out.samples)
    print(f"fused {len(args.infiles)} files into {n} boxes -> {args.out}")
    return EXIT_OK


def _cmd_eval(args, client: Client) -> int:
    req = schemas.EvalRequest(
        predictions=load_document(args.pred, DetectionsDocument),
        ground_truth=load_document(args.gt, DetectionsDocument),
        config=_load_config(args.config),
    )
    resp = client.post("/eval", req, schemas.EvalResponse)
    Path(args.out).write_text(resp.report)
    if args.json_out:
        save_document(args.json_out, resp.result)
    print(resp.report, end="")
    print(f"report -> {args.out}")
    return EXIT_OK


def _cmd_paste(args, client: Client) -> int:
    quota = _parse_quota(args.quota)
    req = schemas.PasteRequest(
        scene=load_document(args.scene, SceneDocument),
        sources=[load_document(f, SceneDocument) for f in args.source],
        database=load_document(args.db, GtDatabaseDocument) if args.db else None,
        quota=quota,
        seed=args.seed,
        include_database=bool(args.db_out),
        config=_load_config(args.config),
    )
    resp = client.post("/paste", req, schemas.PasteResponse)
    save_document(args.out, resp.scene)
    if args.db_out and resp.database is not None:
        save_document(args.db_out, resp.database)
    got = sum(resp.accepted.values())
    want = sum(resp.requested.values())
    print(f"pasted {got}/{want} requested objects -> {args.out}")
    if got < want:
        shortfall = {k: v - resp.accepted.get(k, 0) for k, v in resp.requested.items()}
        short = {k: v for k, v in shortfall.items() if v > 0}
        print(f"quota shortfall: {short}")
    return EXIT_OK


def _cmd_selftest(args, client: Client) -> int:
    resp = client.post("/selftest", None, schemas.SelftestResponse)
    for check in resp.checks:
        flag = "PASS" if check.passed else "FAIL"
        print(f"[{flag}] {check.name}: {check.detail}")
    print(f"{'all checks passed' if resp.passed else 'SELFTEST FAILED'}")
    return EXIT_OK if resp.passed else EXIT_DATA


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "pipeline": _cmd_pipeline,
    "nms": _cmd_nms,
    "tta": _cmd_tta,
    "wbf": _cmd_wbf,
    "eval": _cmd_eval,
    "paste": _cmd_paste,
    "selftest": _cmd_selftest,
}


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "serve":
            return _cmd_serve(args)
        client = Client(getattr(args, "server", None))
        try:
            return _COMMANDS[args.command](args, client)
        finally:
            client.close()
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except (FileFormatError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
