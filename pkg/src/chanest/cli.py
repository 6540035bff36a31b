"""Thin-client CLI for the estimation service.

Every subcommand is an HTTP call: against an in-process ASGI transport by
default (no server required), or against a remote instance with --server.
File handling stays on the client; all computation and rendering happen
behind the service endpoints.

    chanest generate --config scen.cfg --seed 7 --out scenario.chs
    chanest estimate --scenario scenario.chs --out result.txt
    chanest sweep --config manifest.cfg --out results/ --trials 32 --threads 4
    chanest report --result results/sweep_result.json --out rendered/
    chanest serve --host 0.0.0.0 --port 8000
"""

from __future__ import annotations

import argparse
import asyncio
import base64
import json
import sys
from pathlib import Path

import httpx

from . import __version__
from .fileio import parse_keyvalues, render_keyvalues


def _client(args):
    if args.server:
        return httpx.AsyncClient(base_url=args.server, timeout=None)
    from .service import create_app

    transport = httpx.ASGITransport(app=create_app())
    return httpx.AsyncClient(
        transport=transport, base_url="http://chanest.local", timeout=None
    )


async def _post(args, path, payload):
    async with _client(args) as client:
        resp = await client.post(path, json=payload)
        if resp.status_code != 200:
            try:
                detail = resp.json().get("detail", resp.text)
            except Exception:
                detail = resp.text
            sys.exit(f"error: {path} failed ({resp.status_code}): {detail}")
        return resp.json()


def _load_config(path):
    if path is None:
        return {}
    return parse_keyvalues(Path(path).read_text(encoding="utf-8"))


def cmd_generate(args):
    overrides = _load_config(args.config)
    if args.seed is not None:
        overrides["seed"] = args.seed
    payload = {"noiseless": args.noiseless}
    if overrides:
        payload["config"] = overrides
    data = asyncio.run(_post(args, "/generate", payload))
    out = Path(args.out)
    out.write_bytes(base64.b64decode(data["scenario_b64"]))
    print(f"wrote {out} (paths per user: {data['path_counts']}, "
          f"grid: {data['grid_shape']})")


def cmd_estimate(args):
    blob = Path(args.scenario).read_bytes()
    payload = {"scenario_b64": base64.b64encode(blob).decode("ascii")}
    est = _load_config(args.config)
    if est:
        payload["estimator"] = est
    data = asyncio.run(_post(args, "/estimate", payload))
    out = Path(args.out)
    out.write_text(data["result_text"], encoding="utf-8")
    if args.json:
        Path(args.json).write_text(
            json.dumps({k: data[k] for k in
                        ("users", "L_est", "objective", "counters")},
                       indent=2),
            encoding="utf-8",
        )
    print(f"wrote {out} (L_est: {data['L_est']}, "
          f"objective: {data['objective']:.6g})")


def cmd_sweep(args):
    payload = {"manifest_text": Path(args.config).read_text(encoding="utf-8")}
    if args.seed is not None:
        payload["master_seed"] = args.seed
    if args.trials is not None:
        payload["trials"] = args.trials
    if args.threads is not None:
        payload["threads"] = args.threads
    data = asyncio.run(_post(args, "/sweep", payload))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "sweep.csv").write_text(data["csv"], encoding="utf-8", newline="")
    (outdir / "sweep_result.json").write_text(
        json.dumps(data["result"]), encoding="utf-8"
    )
    (outdir / "manifest.cfg").write_text(data["manifest_text"], encoding="utf-8")
    for name, content in data["plot_data"].items():
        (outdir / name).write_text(content, encoding="utf-8")
    print(f"wrote {outdir}/sweep.csv and {len(data['plot_data'])} plot files")


def cmd_report(args):
    result = json.loads(Path(args.result).read_text(encoding="utf-8"))
    data = asyncio.run(_post(args, "/report", {"result": result}))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "sweep.csv").write_text(data["csv"], encoding="utf-8", newline="")
    for name, content in data["plot_data"].items():
        (outdir / name).write_text(content, encoding="utf-8")
    print(f"wrote {outdir}/sweep.csv and {len(data['plot_data'])} plot files")


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)


def build_parser():
    p = argparse.ArgumentParser(
        prog="chanest",
        description="Multiuser MIMO-OFDM uplink path estimation client",
    )
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--server", default=None,
                   help="service base URL (default: run in-process)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a scenario to a file")
    g.add_argument("--config", help="flat key=value scenario config file")
    g.add_argument("--seed", type=int, help="override the scenario seed")
    g.add_argument("--noiseless", action="store_true",
                   help="skip the observation noise")
    g.add_argument("--out", required=True, help="output scenario file")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("estimate", help="estimate paths from a scenario file")
    e.add_argument("--scenario", required=True, help="input scenario file")
    e.add_argument("--config", help="flat key=value estimator config file")
    e.add_argument("--out", required=True, help="output result table")
    e.add_argument("--json", help="optionally also dump the result as JSON")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("sweep", help="run a Monte Carlo power sweep")
    s.add_argument("--config", required=True, help="sweep manifest file")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, help="override the master seed")
    s.add_argument("--trials", type=int, help="override trials per point")
    s.add_argument("--threads", type=int, help="worker processes")
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="re-render CSV/plot data from a result")
    r.add_argument("--result", required=True, help="sweep_result.json path")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_report)

    v = sub.add_parser("serve", help="host the estimation service")
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=8000)
    v.set_defaults(func=cmd_serve)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
