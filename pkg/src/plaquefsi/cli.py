"""Command-line client.

Every verb is a request to the HTTP service: in-process by default, or to a
running server with ``--server URL``.  ``serve`` starts that server.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import httpx

EXIT_ABORT = 1


def _client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    with warnings.catch_warnings():
        # starlette nags about its httpx backend; irrelevant for in-process calls
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .api.app import app
    return TestClient(app)


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise SystemExit(f"cannot read {path}: {exc.strerror}") from exc


def _fail(resp) -> int:
    try:
        body = resp.json()
    except ValueError:
        body = {"detail": resp.text}
    detail = body.get("detail")
    if isinstance(detail, list):  # request validation errors
        detail = "; ".join(f"{'.'.join(map(str, d.get('loc', [])))}: {d.get('msg')}"
                           for d in detail)
    print(f"error: {detail}", file=sys.stderr)
    for p in body.get("problems", []):
        print(f"  {p}", file=sys.stderr)
    return EXIT_ABORT


def cmd_run(client, args) -> int:
    resp = client.post("/run", json={"config_text": _read(args.config),
                                     "output_dir": args.output})
    if resp.status_code != 200:
        return _fail(resp)
    r = resp.json()
    print(f"status = {r['status']}")
    if r["message"]:
        print(f"message = {r['message']}")
    print(f"iterations = {r['iterations']}")
    print(f"max_q = {r['max_q']:.6g}")
    for k, v in r["residuals"].items():
        print(f"residual_{k} = {v:.3e}")
    for k, v in r["positivity"].items():
        print(f"{k} = {v}")
    if r["output_dir"]:
        print(f"output = {r['output_dir']}")
    return int(r["exit_code"])


def cmd_study(client, args) -> int:
    resp = client.post("/study", json={"kind": args.kind, "config_text": _read(args.config),
                                       "output_dir": args.output})
    if resp.status_code != 200:
        return _fail(resp)
    r = resp.json()
    print(",".join(r["columns"]))
    for row in r["rows"]:
        print(",".join("nan" if v is None else str(v) for v in row))
    print(r["summary"])
    if r["csv_path"]:
        print(f"csv = {r['csv_path']}")
    return 0


def cmd_check(client, args) -> int:
    resp = client.post("/check-config", json={"config_text": _read(args.config)})
    if resp.status_code != 200:
        return _fail(resp)
    r = resp.json()
    if not r["valid"]:
        print("invalid configuration:", file=sys.stderr)
        for p in r["problems"]:
            print(f"  {p}", file=sys.stderr)
        return EXIT_ABORT
    print(f"valid ({r['nsteps']} steps)")
    if args.show:
        print(r["normalized"])
    return 0


def cmd_export(client, args) -> int:
    text = _read(args.config) if args.config else ""
    resp = client.post("/export-mesh", json={"config_text": text, "path": args.path})
    if resp.status_code != 200:
        return _fail(resp)
    r = resp.json()
    print(f"wrote {r['path']} ({r['vertices']} vertices, {r['cells']} cells, "
          f"{r['facets']} facets)")
    return 0


def cmd_serve(args) -> int:
    import uvicorn
    uvicorn.run("plaquefsi.api.app:app", host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plaquefsi", description=__doc__.splitlines()[0])
    p.add_argument("--server", help="base URL of a running service (default: in-process)")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run a scenario and write its artifact directory")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="artifact directory (default: output.directory)")
    r.set_defaults(fn=cmd_run)

    s = sub.add_parser("study", help="run a convergence study, sweep or eigen report")
    s.add_argument("kind", help="space-convergence | time-convergence | T-sweep | "
                                "kappa-sweep | eigen")
    s.add_argument("config")
    s.add_argument("-o", "--output", help="directory for the study CSV")
    s.set_defaults(fn=cmd_study)

    c = sub.add_parser("check-config", help="validate a configuration file")
    c.add_argument("config")
    c.add_argument("--show", action="store_true", help="print the normalized configuration")
    c.set_defaults(fn=cmd_check)

    e = sub.add_parser("export-mesh", help="write the strip mesh as plain text")
    e.add_argument("path")
    e.add_argument("--config", help="configuration supplying the geometry block")
    e.set_defaults(fn=cmd_export)

    v = sub.add_parser("serve", help="start the HTTP service")
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=8000)
    v.set_defaults(fn=None)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verb == "serve":
        return cmd_serve(args)
    try:
        with _client(args.server) as client:
            return args.fn(client, args)
    except httpx.HTTPError as exc:
        print(f"error: cannot reach {args.server}: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(f"error: {exc.code}", file=sys.stderr)
            return EXIT_ABORT
        raise


if __name__ == "__main__":
    sys.exit(main())
