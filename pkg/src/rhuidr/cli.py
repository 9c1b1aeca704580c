"""Command-line entry point: ``rhuidr {synth,degrade,unmix,metrics,run}``.

Exit status is 0 on success, 2 on usage errors and 1 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as rio
from . import model, simulate
from .core import Dims, EndmemberLibrary, HSCube
from .metrics import report

log = logging.getLogger("rhuidr")


class UsageError(Exception):
    pass


def _seeds(seed: int, k: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(k)]


def synthesize(n1, n2, l, m, k, seed, smoothness=0.25, library=None):
    """Library, true abundances and clean cube for one seed."""
    lib_seed, ab_seed = _seeds(seed, 2)
    dims = Dims(n1, n2, l, m)
    E = library if library is not None else simulate.gen_endmembers(l, m, lib_seed)
    A = simulate.gen_abundance(simulate.SceneSpec(dims, k, ab_seed, smoothness), m)
    return E, A, simulate.clean_scene(E, A, dims)


def _solver_params(cfg: model.RhuidrConfig) -> dict:
    return {
        "reg": cfg.regularizer, "lambda1": float(cfg.lambda1), "lambda2": float(cfg.lambda2),
        "lambda3": float(cfg.lambda3), "epsilon": float(cfg.epsilon), "eta": float(cfg.eta),
        "omega": float(cfg.omega), "max_iter": cfg.max_iter, "tol": float(cfg.tol),
        "stride": cfg.stride,
    }


def write_unmix_outputs(res: model.UnmixResult, V: HSCube, out: Path, extra: dict | None = None):
    out.mkdir(parents=True, exist_ok=True)
    rio.write_matrix_csv(res.A, out / "abundance.csv")
    rio.write_cube(HSCube(V.dims, res.S), out / "S.cube")
    rio.write_cube(HSCube(V.dims, res.L), out / "L.cube")
    rio.write_cube(res.reconstructed, out / "reconstructed.cube")
    params = {**(extra or {}), **_solver_params(res.config),
              "iterations": res.trace.iterations, "termination": res.termination_reason}
    rio.write_trace_csv(res.trace.records, out / "trace.csv", params)
    rio.export_abundance_pgm(res.A, V.dims, out / "pgm")


# subcommands

def cmd_synth(args):
    E, A, V = synthesize(args.n1, args.n2, args.bands, args.library_size, args.active,
                         args.seed, args.smoothness)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rio.write_cube(V, out / "clean.cube")
    rio.write_matrix_csv(E.matrix, out / "library.csv")
    rio.write_matrix_csv(A, out / "abundance_true.csv")


def cmd_degrade(args):
    V0 = rio.read_cube(args.cube)
    V, truth, case = simulate.make_case(V0, args.case, args.seed, args.stripe_fraction)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rio.write_cube(V, out / "degraded.cube")
    for key in ("N", "S", "L"):
        rio.write_cube(HSCube(V.dims, truth[key]), out / f"noise_{key}.cube")
    rio.write_matrix_csv(np.atleast_1d(truth["sigma"]), out / "sigma.csv")
    with open(out / "case.txt", "w") as fh:
        fh.write(f"case_id={case.case_id} sigma={case.sigma!r} sigma_range={case.sigma_range} "
                 f"p_s={case.p_s!r} stripe_range={case.stripe_range}\n")


def _config_from_args(args, nl: int) -> model.RhuidrConfig:
    if args.reg == "none" and args.lambda2 not in (None, 0.0):
        raise UsageError("--reg none cannot be combined with --lambda2 > 0")
    eps = args.epsilon
    if eps is None:
        eps = model.default_epsilon(args.sigma, args.p_s, nl, args.alpha_sigma)
    eta = args.eta
    if eta is None:
        eta = model.default_eta(args.p_s, nl, args.alpha_eta)
    try:
        return model.RhuidrConfig(
            epsilon=eps, eta=eta, lambda1=args.lambda1, lambda2=args.lambda2,
            lambda3=args.lambda3, regularizer=args.reg, omega=args.omega,
            max_iter=args.max_iter, tol=args.tol, stride=args.stride)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_unmix(args):
    V = rio.read_cube(args.cube)
    E = EndmemberLibrary(rio.read_matrix_csv(args.library))
    cfg = _config_from_args(args, V.dims.n * V.dims.l)
    res = model.unmix(V, E, cfg)
    write_unmix_outputs(res, V, Path(args.out))
    print(f"iterations={res.trace.iterations} termination={res.termination_reason}")


def cmd_metrics(args):
    A_true = rio.read_matrix_csv(args.true_abundance) if args.true_abundance else None
    A_est = rio.read_matrix_csv(args.est_abundance) if args.est_abundance else None
    H_true = rio.read_cube(args.true_cube) if args.true_cube else None
    H_est = rio.read_cube(args.est_cube) if args.est_cube else None
    if (A_true is None) != (A_est is None) or (H_true is None) != (H_est is None):
        raise UsageError("truth and estimate must be given in pairs")
    if A_true is None and H_true is None:
        raise UsageError("nothing to compare")
    rep = report(A_true, A_est, H_true, H_est)
    line = rep.as_record()
    print(line)
    if args.csv:
        _write_metrics_csv(rep, args.csv)


def _write_metrics_csv(rep, path):
    items = [(k, v) for k, v in vars(rep).items() if v is not None]
    with open(path, "w") as fh:
        fh.write(",".join(k for k, _ in items) + "\n")
        fh.write(",".join(repr(float(v)) for _, v in items) + "\n")


MANIFEST_DEFAULTS = {
    "seed": 0,
    "case_id": 5,
    "stripe_fraction": 1.0,
    "library": {"generator": "gaussian-bumps"},
    "solver": {},
}


def load_manifest(path) -> dict:
    """Read a JSON run manifest and fill defaults.

    Keys: ``seed``, ``scene`` (``n1``, ``n2``, ``bands``, ``library_size``,
    ``active``, ``smoothness``), ``case_id``, ``stripe_fraction``,
    ``library`` (``{"path": csv}`` or ``{"generator": "gaussian-bumps"}``),
    ``solver`` (``reg``, ``lambda1``, ``lambda2``, ``lambda3``, ``epsilon``,
    ``eta``, ``alpha_sigma``, ``alpha_eta``, ``omega``, ``max_iter``,
    ``tol``, ``stride``) and ``output`` (directory, relative to the
    manifest).
    """
    path = Path(path)
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict) or "scene" not in raw:
        raise UsageError(f"{path}: manifest needs a 'scene' object")
    man = {**MANIFEST_DEFAULTS, **raw}
    unknown = set(man) - {"seed", "scene", "case_id", "stripe_fraction", "library", "solver", "output"}
    if unknown:
        raise UsageError(f"{path}: unknown manifest keys {sorted(unknown)}")
    out = Path(man.get("output", "run_output"))
    man["output"] = out if out.is_absolute() else path.parent / out
    if "path" in man["library"]:
        lib = Path(man["library"]["path"])
        man["library"] = {"path": lib if lib.is_absolute() else path.parent / lib}
    return man


def cmd_run(args):
    man = load_manifest(args.manifest)
    if args.out:
        man["output"] = Path(args.out)
    sc = man["scene"]
    try:
        n1, n2, l, m, k = (int(sc[key]) for key in ("n1", "n2", "bands", "library_size", "active"))
    except KeyError as exc:
        raise UsageError(f"scene is missing {exc}") from None
    library = None
    if "path" in man["library"]:
        library = EndmemberLibrary(rio.read_matrix_csv(man["library"]["path"]))
        if library.matrix.shape != (l, m):
            raise UsageError(f"library is {library.matrix.shape}, scene needs ({l}, {m})")
    seed = int(man["seed"])
    E, A0, V0 = synthesize(n1, n2, l, m, k, seed, float(sc.get("smoothness", 0.25)), library)
    V, truth, case = simulate.make_case(V0, int(man["case_id"]), seed, float(man["stripe_fraction"]))

    sv = dict(man["solver"])
    nl = V.dims.n * V.dims.l
    eps = sv.pop("epsilon", None)
    if eps is None:
        eps = model.default_epsilon(truth["sigma"], case.p_s, nl, float(sv.get("alpha_sigma", 1.0)))
    eta = sv.pop("eta", None)
    if eta is None:
        eta = model.default_eta(case.p_s, nl, float(sv.get("alpha_eta", 0.9)))
    sv.pop("alpha_sigma", None)
    sv.pop("alpha_eta", None)
    if "reg" in sv:
        sv["regularizer"] = sv.pop("reg")
    try:
        cfg = model.RhuidrConfig(epsilon=eps, eta=eta, **sv)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"solver settings: {exc}") from None

    out = Path(man["output"])
    out.mkdir(parents=True, exist_ok=True)
    rio.write_matrix_csv(E.matrix, out / "library.csv")
    rio.write_matrix_csv(A0, out / "abundance_true.csv")
    rio.write_cube(V0, out / "clean.cube")
    rio.write_cube(V, out / "degraded.cube")
    for key in ("N", "S", "L"):
        rio.write_cube(HSCube(V.dims, truth[key]), out / f"noise_{key}.cube")
    res = model.unmix(V, E, cfg)
    write_unmix_outputs(res, V, out, {"seed": seed, "case_id": case.case_id})
    rep = report(A0, res.A, V0, res.reconstructed)
    with open(out / "metrics.txt", "w") as fh:
        fh.write(rep.as_record() + "\n")
    _write_metrics_csv(rep, out / "metrics.csv")
    print(rep.as_record())


# parser

def _add_solver_flags(p):
    p.add_argument("--reg", choices=model.REGULARIZERS, default="htv")
    p.add_argument("--lambda1", type=float, default=model.DEFAULT_LAMBDA1)
    p.add_argument("--lambda2", type=float, default=None,
                   help=f"default {model.DEFAULT_LAMBDA2} (0 with --reg none)")
    p.add_argument("--lambda3", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=None,
                   help="fidelity radius; default derived from --sigma, --p-s, --alpha-sigma")
    p.add_argument("--eta", type=float, default=None,
                   help="sparse-noise radius; default derived from --p-s, --alpha-eta")
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--p-s", type=float, default=0.0)
    p.add_argument("--alpha-sigma", type=float, default=1.0)
    p.add_argument("--alpha-eta", type=float, default=0.9)
    p.add_argument("--omega", type=float, default=0.05)
    p.add_argument("--max-iter", type=int, default=50000)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--stride", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rhuidr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--n1", type=int, default=32)
    p.add_argument("--n2", type=int, default=32)
    p.add_argument("--bands", type=int, default=16)
    p.add_argument("--library-size", type=int, default=8)
    p.add_argument("--active", type=int, default=3)
    p.add_argument("--smoothness", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("degrade", help="apply one of the eight noise cases")
    p.add_argument("--cube", required=True)
    p.add_argument("--case", type=int, required=True, choices=range(1, 9))
    p.add_argument("--stripe-fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("unmix", help="estimate abundances, sparse and stripe noise")
    p.add_argument("--cube", required=True)
    p.add_argument("--library", required=True)
    p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; unmixing is deterministic")
    _add_solver_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_unmix)

    p = sub.add_parser("metrics", help="compare estimates with ground truth")
    p.add_argument("--true-abundance")
    p.add_argument("--est-abundance")
    p.add_argument("--true-cube")
    p.add_argument("--est-cube")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("run", help="full pipeline from a JSON manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="override the manifest's output directory")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"rhuidr: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"rhuidr: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
