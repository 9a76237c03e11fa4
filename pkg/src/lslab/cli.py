"""``lslab`` command line: solver runs, sweeps, checks and the ladder pipeline.

Every command writes into ``--out`` (default ``runs/<command>``) a
``manifest.json`` that echoes the resolved configuration, plus command
specific tables. Outputs carry no timestamps, so equal configurations give
equal bytes.

Exit codes: 0 success, 1 a check did not pass, 2 bad input, 3 solver did not
converge, 4 file system error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import shutil
import sys
from pathlib import Path

import numpy as np

from . import construction, kernels, verification
from .errors import IncompleteRun, LSLabError, ParseError
from .geometry import (
    apply_pinch,
    chain,
    chain_from_spec,
    chain_to_spec,
    handbag_pinch,
    make_handbag,
    make_line,
    neck_host,
    segment_from_spec,
)
from .solver import SolverOptions, map_tasks, minimize_log_sobolev

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_PARSE = 2
EXIT_NONCONVERGED = 3
EXIT_IO = 4

VERSION = "0.1.0"


# ---------------------------------------------------------------------------
# spec files


def _segment_lines(text: str) -> list:
    """Line number of each element of the top-level ``segments`` array."""
    key = text.find('"segments"')
    if key < 0:
        return []
    pos = text.find("[", key)
    dec = json.JSONDecoder()
    lines = []
    pos += 1
    while True:
        while pos < len(text) and text[pos] in " \t\r\n,":
            pos += 1
        if pos >= len(text) or text[pos] == "]":
            return lines
        lines.append(text.count("\n", 0, pos) + 1)
        try:
            _, pos = dec.raw_decode(text, pos)
        except json.JSONDecodeError:
            return lines


def load_spec(path):
    """Read a JSON domain spec; errors carry the offending line."""
    text = Path(path).read_text()
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from None
    if not isinstance(spec, dict):
        raise ParseError("domain spec must be a JSON object", 1)
    lines = _segment_lines(text)
    segs = spec.get("segments")
    if isinstance(segs, list):
        for i, s in enumerate(segs):
            line = lines[i] if i < len(lines) else None
            if not isinstance(s, dict):
                raise ParseError(f"segment {i} is not an object", line)
            try:
                segment_from_spec(s)
            except (LSLabError, TypeError, ValueError) as exc:
                raise ParseError(f"segment {i}: {exc}", line) from None
    try:
        return chain_from_spec(spec)
    except ParseError as exc:
        if exc.line is None:
            raise ParseError(str(exc), 1) from None
        raise
    except (LSLabError, TypeError, ValueError, KeyError) as exc:
        raise ParseError(str(exc), 1) from None


def domain_hash(D) -> str:
    blob = json.dumps(chain_to_spec(D), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# writers


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def write_field_csv(path, field, D):
    with open(path, "w", newline="") as fh:
        fh.write(f"# domain_hash={domain_hash(D)}\n")
        w = csv.writer(fh)
        w.writerow(["x", "v"])
        for x, v in zip(field.x, field.values):
            w.writerow([repr(float(x)), repr(float(v))])


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in r])


# ---------------------------------------------------------------------------
# commands


def _opts(args) -> SolverOptions:
    kw = {}
    for name in ("dx", "restarts", "tol", "seed"):
        val = getattr(args, name)
        if val is not None:
            kw[name] = val
    return SolverOptions(**kw)


def _one(values, default):
    return default if not values else values[0]


def cmd_lambda(args, out: Path, opts: SolverOptions) -> tuple:
    if args.spec is None:
        raise ParseError("the lambda command needs --spec")
    D = load_spec(args.spec)
    res = minimize_log_sobolev(D, opts)
    result = dict(res.summary(), domain_hash=domain_hash(D), length=D.length, extremal_csv="extremal.csv")
    write_json(out / "result.json", result)
    write_field_csv(out / "extremal.csv", res.extremal, D)
    return result, res.converged, True


def _sweep_domain(family, h, l, p):
    if family == "neck":
        return neck_host(h, l)
    return apply_pinch(handbag_pinch(make_handbag(h, l)), p)


def cmd_sweep(args, out: Path, opts: SolverOptions) -> tuple:
    hs = args.h or [0.2]
    ls = args.l or [4.0]
    ps = args.p or [0.0]
    if args.family == "neck":
        ps = [0.0]
    grid = [(h, l, p) for h in hs for l in ls for p in ps]

    def one(point):
        h, l, p = point
        D = _sweep_domain(args.family, h, l, p)
        res = minimize_log_sobolev(D, opts)
        if args.family == "neck":
            lo, hi = D.segment_bounds(D.find("N")[0])
            v_mid = float(np.interp(0.5 * (lo + hi), res.extremal.x, res.extremal.values))
        else:
            v_mid = math.nan
        return {"h": h, "l": l, "p": p, "lambda": res.lam, "residual": res.residual,
                "converged": res.converged, "v_mid": v_mid}

    rows = map_tasks(one, grid)
    write_rows(out / "sweep.csv", ["h", "l", "p", "lambda", "residual", "converged", "v_mid"],
               [[r[k] for k in ("h", "l", "p", "lambda", "residual", "converged", "v_mid")] for r in rows])
    result = {"points": len(rows), "rows": rows}
    if args.family == "neck":
        result["decay"] = _decay_table(rows)
        write_rows(out / "decay.csv", ["h", "l", "v_mid", "fitted_rate", "r_squared"],
                   [[d["h"], d["l"], d["v_mid"], d["fitted_rate"], d["r_squared"]] for d in result["decay"]])
    write_json(out / "sweep.json", result)
    return result, all(r["converged"] for r in rows), True


def _decay_table(rows):
    table = []
    for h in sorted({r["h"] for r in rows}):
        sub = sorted((r for r in rows if r["h"] == h), key=lambda r: r["l"])
        good = [r for r in sub if r["v_mid"] > verification.UNDERFLOW]
        if len(good) >= 2:
            slope, _, r2 = verification.line_fit([r["l"] for r in good], [math.log(r["v_mid"]) for r in good])
            rate = -slope
        else:
            rate, r2 = math.nan, math.nan
        table += [{"h": h, "l": r["l"], "v_mid": r["v_mid"], "fitted_rate": rate, "r_squared": r2}
                  for r in sub]
    return table


def _line_result(opts):
    D = chain([make_line(-10.0, 10.0)])
    return D, minimize_log_sobolev(D, opts)


def run_lemma(lemma: str, args, opts: SolverOptions) -> list:
    """Reports for one check id with the command-line overrides applied."""
    h, l, p = _one(args.h, None), _one(args.l, None), _one(args.p, None)
    if lemma in ("2.2", "2.3") and args.spec is None:
        D, res = _line_result(opts)
    elif lemma in ("2.2", "2.3"):
        D = load_spec(args.spec)
        res = minimize_log_sobolev(D, opts)
    if lemma == "2.2":
        return [verification.check_max_lower_bound(res, D)]
    if lemma == "2.3":
        origin = 0.5 * D.length if args.spec else 10.0
        return [verification.fit_gaussian_decay(res, D, origin).report]
    if lemma == "2.1":
        D = neck_host(h or 0.2, l or 4.0)
        lo, hi = D.segment_bounds(D.find("N")[0])
        return [verification.check_mean_value(minimize_log_sobolev(D, opts), D, 0.5 * (lo + hi), opts=opts)]
    if lemma == "2.1-h":
        return [verification.mean_value_spread(args.h or (0.05, 0.1, 0.2), l or 4.0, opts)]
    if lemma == "2.5":
        fam = handbag_pinch(make_handbag(h or 0.03, l or 9.0))
        return [verification.check_pinch_continuity(fam, p if p is not None else 1.0,
                                                    [0.5, 0.25, 0.125, 0.0], opts)]
    if lemma == "3.2":
        return verification.check_neck_middle_decay(h or 0.2, args.l or range(4, 13), opts)
    if lemma == "3.3":
        return verification.check_neck_end_decay(h or 0.2, args.l or range(2, 9), opts)
    if lemma == "3.4":
        F = neck_host(h or 0.5, l or 3.0)
        resF = minimize_log_sobolev(F, opts)
        E = chain(F.segments[1:-1])
        eta = verification.ramp_cutoff(resF.extremal.grid, 1.0, F.length - 1.0)
        return [verification.check_cutoff_comparison(resF, E, eta, offset=1.0, opts=opts)]
    if lemma == "3.5":
        fam = handbag_pinch(make_handbag(h or 0.2, 3.0, 0.2))
        base = apply_pinch(fam, p if p is not None else 12.0)
        return verification.check_neck_extension(base, "Z", args.l or [0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4], opts)
    if lemma in ("3.6", "3.6-h"):
        return verification.check_tube_collapse(args.h or (1e-1, 1e-2, 1e-3))
    raise ParseError(f"unknown check id {lemma!r}; choose from {', '.join(verification.LEMMA_IDS)}")


def cmd_verify(args, out: Path, opts: SolverOptions) -> tuple:
    lemmas = args.lemma or list(verification.LEMMA_IDS)
    reports, seen = [], set()
    for lemma in lemmas:
        key = "3.6" if lemma == "3.6-h" else lemma
        if key in seen:
            continue
        seen.add(key)
        reports += run_lemma(lemma, args, opts)
    verification.write_reports(reports, out / "reports.jsonl", out / "reports.csv")
    result = {"reports": [r.to_dict() for r in reports], "passed": all(r.passed for r in reports)}
    return result, True, result["passed"]


def cmd_construct(args, out: Path, opts: SolverOptions) -> tuple:
    h = _one(args.h, 0.03)
    K = args.K if args.K is not None else 3
    l = _one(args.l, None)
    if l is None:
        l = construction.choose_neck_length(args.a, args.A, 2.0)
    manifest = construction.run_pipeline(h, K, l, opts, a=args.a, A=args.A)
    comps = manifest["_components"]
    construction.write_ladder_csv(out / "ladder.csv", comps)
    construction.dump_manifest(manifest, out / "pipeline.json")
    for c in comps:
        write_field_csv(out / f"component_{c.k}.csv", c.extremal, c.chain)
    result = {k: v for k, v in manifest.items() if not k.startswith("_") and k != "assembled_spec"}
    ok = all(c.converged for c in comps) and manifest["assembled"]["converged"]
    return result, ok, manifest["certificate"]["contradiction_value"] > 0


def cmd_certify(args, out: Path, opts: SolverOptions) -> tuple:
    path = args.ladder or args.spec
    if path is None:
        raise ParseError("the certify command needs --ladder")
    try:
        rows = construction.read_ladder_csv(path)
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad ladder table: {exc}") from None
    if not rows:
        raise ParseError("ladder table is empty")
    ks = [k for k, _ in rows]
    lams = [lam for _, lam in rows]
    masses = args.masses or [1.0 / len(rows)] * len(rows)
    l = _one(args.l, None)
    if l is None:
        l = construction.choose_neck_length(args.a, args.A, 2.0)
    cert = construction.no_extremal_certificate(lams, masses, args.a, args.A, l, infimum=args.infimum, ks=ks)
    result = cert.to_dict()
    write_json(out / "certificate.json", result)
    return result, True, cert.contradiction_value > 0


COMMANDS = {
    "lambda": cmd_lambda,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "construct": cmd_construct,
    "certify": cmd_certify,
}


# ---------------------------------------------------------------------------
# export


def export_results(run_dir) -> list:
    """Consolidate a run directory into ``run_dir/export``; returns the files."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.is_file():
        raise IncompleteRun(f"{run_dir} has no manifest.json")
    manifest = json.loads(manifest_path.read_text())
    dest = run_dir / "export"
    dest.mkdir(exist_ok=True)
    written = []
    command = manifest.get("config", {}).get("command")
    if command == "construct":
        src = run_dir / "ladder.csv"
        if not src.is_file():
            raise IncompleteRun("ladder.csv missing")
        rows = list(csv.DictReader(src.open()))
        write_rows(dest / "ladder.csv", ["k", "p_k", "lambda_k"],
                   [[r["k"], r["p_k"], r["lambda_k"]] for r in rows])
        written.append(dest / "ladder.csv")
    elif command == "sweep":
        for name in ("sweep.csv", "decay.csv"):
            if (run_dir / name).is_file():
                shutil.copyfile(run_dir / name, dest / name)
                written.append(dest / name)
        if not written:
            raise IncompleteRun("sweep.csv missing")
        if (run_dir / "decay.csv").is_file():
            rows = list(csv.DictReader((run_dir / "decay.csv").open()))
            write_rows(dest / "decay_fit.csv", ["l", "v_mid", "fitted_rate"],
                       [[r["l"], r["v_mid"], r["fitted_rate"]] for r in rows])
            written.append(dest / "decay_fit.csv")
    elif command == "verify":
        src = run_dir / "reports.csv"
        if not src.is_file():
            raise IncompleteRun("reports.csv missing")
        shutil.copyfile(src, dest / "reports.csv")
        written.append(dest / "reports.csv")
        fits = []
        for r in verification.read_reports(run_dir / "reports.jsonl"):
            m = r.measured
            if "rate" in m or "value_rate" in m:
                fits.append([r.lemma, json.dumps(r.inputs, sort_keys=True), m.get("rate", m.get("value_rate")),
                             m.get("r_squared"), r.passed])
        if fits:
            write_rows(dest / "decay_fits.csv", ["lemma", "params", "rate", "r_squared", "pass"], fits)
            written.append(dest / "decay_fits.csv")
    else:
        for name in ("result.json", "certificate.json"):
            if (run_dir / name).is_file():
                shutil.copyfile(run_dir / name, dest / name)
                written.append(dest / name)
    for f in sorted(run_dir.glob("*.csv")):
        if f.name.startswith(("extremal", "component_")):
            shutil.copyfile(f, dest / f.name)
            written.append(dest / f.name)
    if not written:
        raise IncompleteRun(f"{run_dir} holds no exportable artifacts")
    return written


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lslab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "export"):
        p = sub.add_parser(name)
        p.add_argument("--out", type=Path, default=None)
        if name == "export":
            continue
        p.add_argument("--spec", type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--dx", type=float)
        p.add_argument("--restarts", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--lemma", action="append")
        p.add_argument("--h", type=float, nargs="+")
        p.add_argument("--l", type=float, nargs="+")
        p.add_argument("--p", type=float, nargs="+")
        p.add_argument("--K", type=int)
        p.add_argument("--a", type=float, default=1.0)
        p.add_argument("--A", type=float, default=1.0)
        p.add_argument("--ladder", type=Path)
        p.add_argument("--masses", type=float, nargs="+")
        p.add_argument("--infimum", type=float)
        p.add_argument("--family", choices=("handbag", "neck"), default="handbag")
    return parser


def _config(args, opts) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("out",)}
    cfg["solver"] = opts.to_dict()
    cfg["backend"] = kernels.BACKEND
    cfg["version"] = VERSION
    return cfg


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_PARSE
    out = args.out or Path("runs") / args.command
    try:
        if args.command == "export":
            for f in export_results(out):
                print(f)
            return EXIT_OK
        opts = _opts(args)
        out.mkdir(parents=True, exist_ok=True)
        config = _config(args, opts)
        result, converged, passed = COMMANDS[args.command](args, out, opts)
        status = "ok" if converged and passed else ("not_converged" if not converged else "check_failed")
        write_json(out / "manifest.json", {"config": config, "status": status, "result": result})
        print(json.dumps(result, sort_keys=True, default=_json_default))
        if not converged:
            return EXIT_NONCONVERGED
        return EXIT_OK if passed else EXIT_CHECK
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (OSError, IncompleteRun) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except LSLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
