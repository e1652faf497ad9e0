"""Command-line surface of the toolkit.

Batch commands (simulate, nullcache, calibrate, bench, coverage, report) call
the library directly.  Interactive query commands (bound, clusters, drill,
curve) also accept ``--server URL`` to reuse a calibrated session on a
running service instance instead of recalibrating per invocation; pass the
printed session id back via ``--session`` on follow-up queries.

Exit codes: 0 success; 2 invalid parameters or violated numeric contracts;
3 unreadable, unparsable, or unwritable files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import (
    ALL_METHODS,
    BenchConfig,
    analyze,
    coverage_experiment,
    default_curve_ks,
    run_benchmark,
)
from .bounds import Selection, confidence_curve, tdp_bound_linear, topk_order
from .clusters import cluster_table, drill_down, extract_clusters
from .errors import ContractError, FormatError, IoError, ParamError, PostHocError
from .phdat import read_phdat, read_pnul, write_phdat, write_pnul
from .reports import (
    cluster_csv_from_payload,
    cluster_table_json_dict,
    curve_csv_from_payload,
    curve_json_dict,
    curve_svg_from_payload,
    emit_coverage,
    emit_report,
    emit_report_from_bundle,
    scatter_svg_from_payload,
)
from .simulate import Region, SimConfig, simulate_dataset
from .stats import NullPValueMatrix, sign_flip_null


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ParamError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ParamError(f"expected comma-separated integers, got {text!r}")


def _region(text: str) -> Region:
    parts = _floats(text)
    if len(parts) != 5:
        raise ParamError(
            f"region must be cx,cy,cz,radius,effect (5 numbers), got {text!r}"
        )
    return Region(center=parts[:3], radius=parts[3], effect=parts[4])


def _formats(text: str) -> tuple[str, ...]:
    out = tuple(v.strip() for v in text.split(",") if v.strip())
    bad = set(out) - {"csv", "json", "svg"}
    if bad:
        raise ParamError(f"unknown formats {sorted(bad)}; choose from csv,json,svg")
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--alpha", type=float, default=0.05)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--b", type=int, default=1000, help="pARI permutations")
    common.add_argument("--b-train", type=int, default=1000, help="Notip training permutations")
    common.add_argument("--b-calib", type=int, default=500, help="Notip calibration permutations")
    common.add_argument("--delta", type=int, default=27, help="pARI template shift")
    common.add_argument("--kmax", type=int, default=None, help="Notip curve length (default 2%% of m)")
    common.add_argument("--connectivity", type=int, choices=(6, 18, 26), default=26)
    common.add_argument("--z", type=_floats, default=(3.0, 3.5, 4.0), help="cluster-forming Z thresholds")
    common.add_argument("--format", type=_formats, default=("csv", "json"), help="artifact formats: csv,json,svg")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--input", type=Path, default=None, help="PHDAT stack to analyze")
    common.add_argument("--methods", type=str, default=",".join(ALL_METHODS))
    common.add_argument("--sidedness", choices=("two-sided", "one-sided"), default="two-sided")

    server = argparse.ArgumentParser(add_help=False)
    server.add_argument("--server", type=str, default=None, help="service URL for remote sessions")
    server.add_argument("--session", type=str, default=None, help="existing remote session id")

    parser = argparse.ArgumentParser(
        prog="posthoc",
        description="simultaneous true-discovery-proportion bounds for statistical maps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic PHDAT dataset")
    p.add_argument("--grid", type=_ints, default=(30, 30, 30))
    p.add_argument("--voxel-size", type=_floats, default=(3.0, 3.0, 3.0))
    p.add_argument("--n-subjects", type=int, default=20)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--region", type=_region, action="append", default=[],
                   help="cx,cy,cz,radius,effect (repeatable)")
    p.add_argument("--name", type=str, default="sim")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("nullcache", parents=[common], help="precompute a sign-flip null p-value matrix")
    p.set_defaults(func=cmd_nullcache)

    p = sub.add_parser("calibrate", parents=[common], help="calibrate templates and save them")
    p.add_argument("--nulls-pari", type=Path, default=None)
    p.add_argument("--nulls-train", type=Path, default=None)
    p.add_argument("--nulls-calib", type=Path, default=None)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("bound", parents=[common, server], help="TDP bound for an explicit voxel set")
    p.add_argument("--select", type=_ints, default=None, help="comma-separated voxel indices")
    p.add_argument("--select-file", type=Path, default=None, help="JSON array of voxel indices")
    p.add_argument("--topk", type=int, default=None, help="use the top-k voxels by |Z|")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("clusters", parents=[common, server], help="cluster table per z threshold")
    p.set_defaults(func=cmd_clusters)

    p = sub.add_parser("drill", parents=[common, server], help="re-threshold inside one cluster")
    p.add_argument("--cluster-id", type=int, required=True)
    p.add_argument("--z-new", type=float, required=True)
    p.set_defaults(func=cmd_drill)

    p = sub.add_parser("curve", parents=[common, server], help="TDP confidence curve over top-k sets")
    p.add_argument("--curve-points", type=int, default=200)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("bench", parents=[common], help="full benchmark with report artifacts")
    p.add_argument("--sim", type=Path, default=None, help="simulation config JSON (used when no --input)")
    p.add_argument("--curve-points", type=int, default=200)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("coverage", parents=[common], help="violation-frequency experiment")
    p.add_argument("--sim", type=Path, default=None)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--curve-points", type=int, default=50)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("report", parents=[common], help="re-render artifacts from a saved bench.json")
    p.add_argument("--bundle", type=Path, required=True)
    p.set_defaults(func=cmd_report)
    return parser


def _bench_config(args, z=None) -> BenchConfig:
    return BenchConfig(
        methods=tuple(m.strip() for m in args.methods.split(",") if m.strip()),
        alpha=args.alpha,
        b=args.b,
        b_train=args.b_train,
        b_calib=args.b_calib,
        delta=args.delta,
        k_max=args.kmax,
        z_thresholds=z if z is not None else args.z,
        connectivity=args.connectivity,
        seed=args.seed,
        sidedness=args.sidedness,
    )


def _require_input(args) -> Path:
    if args.input is None:
        raise ParamError("this command needs --input <phdat>")
    return args.input


def _load_analysis(args, nulls=None):
    stack = read_phdat(_require_input(args))
    return stack, analyze(stack, _bench_config(args), nulls=nulls)


def _effective_config(args) -> dict:
    cfg = _bench_config(args).to_json_dict()
    return {"bench": cfg, "input": str(args.input) if args.input else None}


def _emit(path: Path, text: str) -> Path:
    from .reports import _write_text

    return _write_text(path, text)


def cmd_simulate(args) -> None:
    nx, ny, nz = args.grid
    cfg = SimConfig(
        nx=nx, ny=ny, nz=nz,
        voxel_size=args.voxel_size,
        n_subjects=args.n_subjects,
        sigma=args.sigma,
        regions=tuple(args.region),
        seed=args.seed,
    )
    stack, h0 = simulate_dataset(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    phdat = args.out / f"{args.name}.phdat"
    write_phdat(phdat, stack)
    truth = {
        "config": cfg.to_json_dict(),
        "signal_indices": np.flatnonzero(~h0).tolist(),
        "pi0": float(h0.mean()),
    }
    truth_path = args.out / f"{args.name}.truth.json"
    truth_path.write_text(json.dumps(truth, indent=2, sort_keys=True))
    print(phdat)
    print(truth_path)


def cmd_nullcache(args) -> None:
    stack = read_phdat(_require_input(args))
    null = sign_flip_null(stack, args.b, seed=args.seed, sidedness=args.sidedness)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"nulls_b{args.b}_seed{args.seed}.pnul"
    write_pnul(path, null.rows, args.seed)
    print(path)


def _injected_nulls(args) -> dict[str, NullPValueMatrix]:
    nulls = {}
    for key, path in (
        ("pari", args.nulls_pari),
        ("train", args.nulls_train),
        ("calib", args.nulls_calib),
    ):
        if path is not None:
            rows, seed = read_pnul(path)
            nulls[key] = NullPValueMatrix(rows, seed)
    return nulls


def cmd_calibrate(args) -> None:
    _, analysis = _load_analysis(args, nulls=_injected_nulls(args))
    payload = {"config": _effective_config(args), "templates": {}, "calibration": {}}
    for method, template in analysis.templates.items():
        payload["templates"][method] = template.to_json_dict()
    for method, res in analysis.calibrations.items():
        payload["calibration"][method] = {
            "lambda_star": res.lambda_star,
            "k_alpha": res.k_alpha,
            "curve_index": res.curve_index,
        }
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "calibration.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(path)


def _http(args, method: str, route: str, **kwargs):
    import httpx

    url = args.server.rstrip("/") + route
    response = httpx.request(method, url, timeout=600.0, **kwargs)
    if response.status_code >= 400:
        detail = response.json().get("detail", response.text)
        if response.status_code == 422:
            raise ParamError(f"server rejected the request: {detail}")
        raise ContractError(f"server error {response.status_code}: {detail}")
    return response.json()


def _remote_session(args) -> str:
    if args.session:
        return args.session
    payload = _require_input(args).read_bytes()
    params = {
        "alpha": args.alpha, "b": args.b, "b_train": args.b_train,
        "b_calib": args.b_calib, "delta": args.delta, "seed": args.seed,
        "methods": args.methods, "sidedness": args.sidedness,
    }
    if args.kmax is not None:
        params["kmax"] = args.kmax
    info = _http(args, "POST", "/sessions", params=params, content=payload)
    print(f"session {info['session_id']}", file=sys.stderr)
    return info["session_id"]


def _remote_config(args, session: str) -> dict:
    # artifacts must describe the calibration actually used, which lives
    # server-side; local flags only describe this invocation
    info = _http(args, "GET", f"/sessions/{session}")
    return {"server": args.server, "session": info}


def _selection_indices(args, zmap=None) -> np.ndarray:
    given = [v is not None for v in (args.select, args.select_file, args.topk)]
    if sum(given) != 1:
        raise ParamError("choose exactly one of --select, --select-file, --topk")
    if args.select is not None:
        return np.asarray(args.select, dtype=np.int64)
    if args.select_file is not None:
        data = json.loads(args.select_file.read_text())
        return np.asarray(data, dtype=np.int64)
    if zmap is None:
        raise ParamError("--topk needs a local analysis; use --select with --server")
    if args.topk < 1:
        raise ParamError(f"--topk must be >= 1, got {args.topk}")
    return topk_order(zmap)[: args.topk]


def cmd_bound(args) -> None:
    if args.server:
        session = _remote_session(args)
        indices = _selection_indices(args)
        result = _http(
            args, "POST", f"/sessions/{session}/bound",
            json={"indices": [int(i) for i in indices]},
        )
        result["session"] = session
    else:
        _, analysis = _load_analysis(args)
        indices = _selection_indices(args, analysis.zmap)
        selection = Selection(indices)
        if int(selection.indices[-1]) >= analysis.p.p.size:
            raise ParamError(
                f"selection index {int(selection.indices[-1])} outside mask"
                f" of size {analysis.p.p.size}"
            )
        sorted_p = np.sort(analysis.p.p[selection.indices])
        result = {
            "size": selection.size,
            "bounds": {
                method: tdp_bound_linear(sorted_p, template)
                for method, template in analysis.templates.items()
            },
        }
    print(json.dumps(result, indent=2, sort_keys=True))


def _write_cluster_artifacts(payloads, formats, out: Path) -> None:
    from .reports import _ztag

    out.mkdir(parents=True, exist_ok=True)
    for payload in payloads:
        tag = _ztag(payload["z_threshold"])
        if "csv" in formats:
            path = _emit(out / f"clusters_z{tag}.csv", cluster_csv_from_payload(payload))
            print(path)
        if "json" in formats:
            path = _emit(
                out / f"clusters_z{tag}.json",
                json.dumps(payload, indent=2, sort_keys=True),
            )
            print(path)
        if "svg" in formats:
            path = _emit(out / f"scatter_z{tag}.svg", scatter_svg_from_payload(payload))
            print(path)


def cmd_clusters(args) -> None:
    payloads = []
    if args.server:
        session = _remote_session(args)
        config = _remote_config(args, session)
        for z in args.z:
            response = _http(
                args, "GET", f"/sessions/{session}/clusters",
                params={"z": z, "connectivity": args.connectivity},
            )
            response["config"] = config
            payloads.append(response)
    else:
        config = _effective_config(args)
        _, analysis = _load_analysis(args)
        for z in args.z:
            found = extract_clusters(analysis.zmap, z, args.connectivity)
            table = cluster_table(found, analysis.p, analysis.templates, args.connectivity)
            payloads.append(cluster_table_json_dict(table, config))
    _write_cluster_artifacts(payloads, args.format, args.out)


def cmd_drill(args) -> None:
    parent_z = args.z[0]
    if args.server:
        session = _remote_session(args)
        result = _http(
            args, "POST", f"/sessions/{session}/drill",
            json={
                "z": parent_z, "cluster_id": args.cluster_id,
                "z_new": args.z_new, "connectivity": args.connectivity,
            },
        )
    else:
        _, analysis = _load_analysis(args)
        parents = extract_clusters(analysis.zmap, parent_z, args.connectivity)
        parent = next((c for c in parents if c.id == args.cluster_id), None)
        if parent is None:
            raise ParamError(f"no cluster {args.cluster_id} at z={parent_z:g}")
        children = drill_down(parent, analysis.zmap, args.z_new, args.connectivity)
        result = {
            "parent_id": parent.id, "z": parent_z, "z_new": args.z_new,
            "children": [],
        }
        for child in children:
            sorted_p = np.sort(analysis.p.p[child.selection.indices])
            result["children"].append(
                {
                    "peak_world": list(child.peak_world),
                    "peak_stat": child.peak_stat,
                    "size_vox": child.size,
                    "size_mm3": child.size_mm3,
                    "bounds": {
                        method: tdp_bound_linear(sorted_p, template)
                        for method, template in analysis.templates.items()
                    },
                }
            )
    print(json.dumps(result, indent=2, sort_keys=True))


def cmd_curve(args) -> None:
    if args.server:
        session = _remote_session(args)
        payload = _http(
            args, "GET", f"/sessions/{session}/curve",
            params={"points": args.curve_points},
        )
        payload["config"] = _remote_config(args, session)
        payload["guide_z"] = [3.0, 3.5, 4.0, 4.5]
    else:
        config = _effective_config(args)
        stack, analysis = _load_analysis(args)
        ks = default_curve_ks(stack.m, args.curve_points)
        curve = confidence_curve(analysis.zmap, analysis.p, analysis.templates, ks)
        payload = curve_json_dict(curve, config)
    args.out.mkdir(parents=True, exist_ok=True)
    if "csv" in args.format:
        print(_emit(args.out / "curve.csv", curve_csv_from_payload(payload)))
    if "json" in args.format:
        print(_emit(args.out / "curve.json", json.dumps(payload, indent=2, sort_keys=True)))
    if "svg" in args.format:
        print(_emit(args.out / "curve.svg", curve_svg_from_payload(payload)))


def _sim_config(args) -> SimConfig:
    if getattr(args, "sim", None) is not None:
        try:
            d = json.loads(args.sim.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{args.sim}: not valid JSON ({exc})")
        # accept a bare SimConfig dict or a truth.json wrapper around one
        if isinstance(d.get("config"), dict):
            d = d["config"]
        try:
            return SimConfig.from_json_dict(d)
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{args.sim}: not a simulation config ({exc!r})")
    return SimConfig(seed=args.seed)


def cmd_bench(args) -> None:
    cfg = replace(_bench_config(args), curve_points=args.curve_points)
    source = args.input if args.input is not None else _sim_config(args)
    result = run_benchmark(cfg, source)
    for path in emit_report(result, args.format, args.out):
        print(path)


def cmd_coverage(args) -> None:
    report = coverage_experiment(
        _sim_config(args),
        _bench_config(args),
        n_reps=args.reps,
        curve_points=args.curve_points,
        progress=lambda i, n: print(f"\r{i}/{n}", end="", file=sys.stderr),
    )
    print("", file=sys.stderr)
    for method in report.methods:
        lo, hi = report.wilson[method]
        print(
            f"{method}: {report.violations[method]}/{report.n_reps}"
            f" = {report.frequency[method]:.4f}"
            f" (95% CI {lo:.4f}-{hi:.4f}, budget {report.budget:.4f})"
        )
    for path in emit_coverage(report, args.format, args.out):
        print(path)


def cmd_report(args) -> None:
    try:
        bundle = json.loads(args.bundle.read_text())
    except OSError as exc:
        raise IoError(f"cannot read {args.bundle}: {exc}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{args.bundle} is not valid JSON: {exc}") from exc
    for path in emit_report_from_bundle(bundle, args.format, args.out):
        print(path)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        # parse inside the handler: flag converters raise ParamError too
        args = parser.parse_args(argv)
        args.func(args)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    except (ParamError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PostHocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
