"""Command-line front end: ``qblend <command> <scenario> [flags]``.

Exit status is 0 on success, 2 when a checked bound is violated and 1 on
any error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from .certify import (
    CertificateError,
    GainCertificate,
    initial_dispersion,
    kc_star_theorem1,
    kc_star_theorem2,
    kc_star_theorem3,
    kc_star_theorem4,
    spectral_constants,
    verify_bound,
)
from .dynamics import (
    TimeGrid,
    coherent_error,
    distance_to_state,
    evolve_blended_coherent,
    evolve_blended_reduced,
    evolve_full,
    evolve_reduced,
    reduced_of_full,
    steady_state,
    symmetrization_error,
)
from .emit import observable_table, write_json, write_manifest, write_table, write_trajectory_json
from .network import separable_decomposition
from .scenario import OUTPUTS, Scenario, ScenarioError, load_scenario
from .sweep import TARGETS, halving_ratios, scales_inversely, sweep_floors

log = logging.getLogger("qblend")

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for bound violations here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


# -- argument parsing -----------------------------------------------------


def parse_grid(text: str) -> TimeGrid:
    """``"t_end"`` or ``"t_end:samples"``."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return TimeGrid(float(parts[0]))
        if len(parts) == 2:
            return TimeGrid(float(parts[0]), int(parts[1]))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}: {exc}") from None
    raise argparse.ArgumentTypeError(f"bad grid {text!r}; expected t_end[:samples]")


def parse_gains(text: str) -> list[float]:
    try:
        gains = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad gain list {text!r}") from None
    if not gains or any(not math.isfinite(k) or k < 0 for k in gains):
        raise argparse.ArgumentTypeError("gains must be finite and non-negative")
    return gains


def parse_observables(text: str) -> list[str]:
    names = [x.strip() for x in text.split(",") if x.strip()]
    bad = set(names) - OUTPUTS
    if bad:
        raise argparse.ArgumentTypeError(f"unknown observables {sorted(bad)}; choose from {sorted(OUTPUTS)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qblend", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("scenario", help="built-in name (example1..3) or a YAML/JSON file")
    common.add_argument("--grid", type=parse_grid, help="t_end[:samples]")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--dicke-pair-order", choices=("lt", "gt"), default="lt",
                        help="index order of pairs(a, b) products")
    common.add_argument("--observables", type=parse_observables,
                        help=f"comma list from {sorted(OUTPUTS)}")

    s = sub.add_parser("simulate", parents=[common], help="network, reduced and blended flows")
    s.add_argument("--kc", type=float)
    b = sub.add_parser("blend", parents=[common], help="blended coherent flow and its lift")
    b.add_argument("--kc", type=float, help="gain of the network run compared against")

    c = sub.add_parser("certify", parents=[common], help="gain certificates checked in closed loop")
    c.add_argument("--theorem", choices=("1", "2", "3", "4", "all"), default="all")
    c.add_argument("--eta", type=float, default=0.01)
    c.add_argument("--t1", type=float, default=0.5)
    c.add_argument("--t2", type=float, default=4.0)
    c.add_argument("--slack", type=float, default=0.0)

    w = sub.add_parser("sweep", parents=[common], help="error floor versus gain")
    w.add_argument("--kc", type=parse_gains, help="comma-separated gains")
    w.add_argument("--target", choices=TARGETS, default="symmetrization")
    w.add_argument("--workers", type=int)
    w.add_argument("--check-scaling", action="store_true",
                   help="exit 2 unless each floor ratio matches the gain ratio within 25%%")

    sub.add_parser("induced-graph", parents=[common], help="dump the induced graph as JSON")
    return p


# -- commands -------------------------------------------------------------


def _stem(sc: Scenario) -> str:
    return sc.spec.name or Path(sc.source).stem or "scenario"


def _emit(traj, table, out: Path, fmt: str, meta: dict) -> Path:
    path = out.with_suffix(f".{fmt}")
    if fmt == "json":
        return write_trajectory_json(traj, path, table, meta)
    return write_table(table, path, "csv")


def cmd_simulate(sc: Scenario, args, grid: TimeGrid) -> tuple[int, list]:
    spec = sc.spec
    kc = spec.kc if args.kc is None else args.kc
    outputs = args.observables or sc.outputs
    meta = {"spec_hash": spec.spec_hash(), "kc": kc}
    files = []
    full = evolve_full(spec, grid=grid, kc=kc)
    dec = separable_decomposition(spec)
    stem = args.out / _stem(sc)
    if not dec:
        errs = {"sym_err": symmetrization_error(full)}
        files.append(_emit(full, observable_table(full, outputs, errs), Path(f"{stem}_full"), args.format, meta))
        return EXIT_OK, files

    red = evolve_reduced(dec, spec.graph, kc, grid)
    blend = evolve_blended_reduced(dec, grid)
    rho_r = steady_state(dec.blended_generator())
    ref = rho_r if isinstance(rho_r, np.ndarray) else blend.states
    label = "ss" if isinstance(rho_r, np.ndarray) else "blend"
    meta["reference"] = "steady_state" if label == "ss" else "blended_path"

    def per_qubit(states):
        return {f"err_q{j + 1}": distance_to_state(states[:, j : j + 1], ref) for j in range(spec.n)}

    files.append(_emit(full, observable_table(full, outputs, per_qubit(reduced_of_full(full))),
                       Path(f"{stem}_full"), args.format, meta))
    files.append(_emit(red, observable_table(red, outputs, per_qubit(red.states)),
                       Path(f"{stem}_reduced"), args.format, meta))
    berr = {}
    if label == "ss":
        berr["err_b"] = distance_to_state(blend.states[:, None], rho_r)
    files.append(_emit(blend, observable_table(blend, outputs, berr), Path(f"{stem}_blended"), args.format, meta))
    return EXIT_OK, files


def cmd_blend(sc: Scenario, args, grid: TimeGrid) -> tuple[int, list]:
    spec = sc.spec
    kc = spec.kc if args.kc is None else args.kc
    outputs = args.observables or sc.outputs
    coh = evolve_blended_coherent(spec, grid=grid)
    full = evolve_full(spec, grid=grid, kc=kc)
    errs = {"coh_err": coherent_error(full, coh), "sym_err": symmetrization_error(full)}
    meta = {"spec_hash": spec.spec_hash(), "kc": kc,
            "lifted_min_eigenvalue": coh.metadata["lifted_min_eigenvalue"]}
    path = _emit(coh, observable_table(coh, outputs, errs), args.out / f"{_stem(sc)}_coherent", args.format, meta)
    return EXIT_OK, [path]


def _same_step(grid: TimeGrid, t_end: float) -> TimeGrid:
    return TimeGrid(t_end, max(2, math.ceil(t_end / grid.dt - 1e-9) + 1))


def _certificates(sc: Scenario, args):
    """Yield ``(theorem, certificate or None, decomposition or skip reason)``."""
    spec = sc.spec
    dec = separable_decomposition(spec)
    consts = spectral_constants(spec, dec)
    wanted = ["1", "2", "3", "4"] if args.theorem == "all" else [args.theorem]
    strict = args.theorem != "all"
    for th in wanted:
        try:
            if th in ("1", "2"):
                if not spec.graph.is_connected():
                    raise CertificateError("graph is not connected")
                if not dec:
                    raise CertificateError(f"network is not separable: {dec.reason}")
                disp = initial_dispersion(dec)
            if th == "1":
                cert = kc_star_theorem1(consts, disp, args.eta)
            elif th == "2":
                cert = kc_star_theorem2(consts, disp, args.eta, args.t1, args.t2)
            elif th == "3":
                cert = kc_star_theorem3(spec, args.eta, args.t1, args.t2, constants=consts)
            else:
                cert = kc_star_theorem4(spec, args.eta, args.t1, constants=consts)
        except CertificateError as exc:
            if strict:
                raise
            log.info("theorem %s skipped: %s", th, exc)
            yield th, None, str(exc)
            continue
        yield th, cert, dec


def _closed_loop(sc: Scenario, cert: GainCertificate, dec, grid: TimeGrid, slack: float):
    spec = sc.spec
    k = cert.kc_star
    if cert.theorem == 1:
        g = _same_step(grid, max(grid.t_end, 1.2 * cert.extras["t_switch"]))
        return verify_bound(evolve_reduced(dec, spec.graph, k, g), cert, slack=slack)
    if cert.theorem == 2:
        g = _same_step(grid, cert.inputs["T2"])
        red = evolve_reduced(dec, spec.graph, k, g)
        return verify_bound(red, cert, reference=evolve_blended_reduced(dec, g), slack=slack)
    if cert.theorem == 3:
        g = _same_step(grid, cert.inputs["T2"])
        full = evolve_full(spec, grid=g, kc=k)
        return verify_bound(full, cert, reference=evolve_blended_coherent(spec, grid=g), slack=slack)
    g = grid if grid.t_end > cert.inputs["T1"] else _same_step(grid, 2 * cert.inputs["T1"])
    return verify_bound(evolve_full(spec, grid=g, kc=k), cert, slack=slack)


def cmd_certify(sc: Scenario, args, grid: TimeGrid) -> tuple[int, list]:
    entries, status = [], EXIT_OK
    for th, cert, info in _certificates(sc, args):
        if cert is None:
            entries.append({"theorem": int(th), "skipped": info})
            continue
        report = _closed_loop(sc, cert, info, grid, args.slack)
        entry = cert.to_dict()
        entry.update(report.to_dict())
        entries.append(entry)
        print(f"theorem {th}: K_c* = {cert.kc_star:.6g}  max_violation = {report.max_violation:.3e}  "
              f"{'PASS' if report.passed else 'FAIL'}")
        if not report.passed:
            status = EXIT_VIOLATION
    doc = {"scenario": sc.source, "spec_hash": sc.spec.spec_hash(), "certificates": entries}
    path = write_json(doc, args.out / f"{_stem(sc)}_certify.json")
    return status, [path]


def cmd_sweep(sc: Scenario, args, grid: TimeGrid) -> tuple[int, list]:
    kcs = args.kc or sc.kcs
    results = sweep_floors(sc.spec, kcs, args.target, grid, args.workers)
    ratios = halving_ratios(results)
    stem = args.out / f"{_stem(sc)}_sweep_{args.target}"
    if args.format == "csv":
        path = stem.with_suffix(".csv")
        lines = ["kc,floor,ratio,method"]
        for r, q in zip(results, ratios):
            lines.append(f"{r.kc:.12g},{r.floor:.12g},{'' if q is None else f'{q:.12g}'},{r.method}")
        path.write_text("\n".join(lines) + "\n")
    else:
        path = write_json({
            "target": args.target,
            "rows": [{"kc": r.kc, "floor": r.floor, "ratio": q, "method": r.method}
                     for r, q in zip(results, ratios)],
        }, stem.with_suffix(".json"))
    for r, q in zip(results, ratios):
        print(f"K_c = {r.kc:<8g} floor = {r.floor:.6e}" + ("" if q is None else f"  ratio = {q:.3f}"))
    ok = scales_inversely(results)
    if args.check_scaling:
        print("scaling " + ("PASS" if ok else "FAIL"))
    return (EXIT_VIOLATION if args.check_scaling and not ok else EXIT_OK), [path]


def cmd_induced(sc: Scenario, args, grid: TimeGrid) -> tuple[int, list]:
    path = write_json(sc.spec.induced.to_dict(), args.out / f"{_stem(sc)}_induced.json")
    return EXIT_OK, [path]


COMMANDS = {
    "simulate": cmd_simulate,
    "blend": cmd_blend,
    "certify": cmd_certify,
    "sweep": cmd_sweep,
    "induced-graph": cmd_induced,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        if not args.out.is_dir():
            raise UsageError(f"output directory {args.out} does not exist")
        sc = load_scenario(args.scenario, args.dicke_pair_order)
        t_load = time.perf_counter() - t0
        grid = args.grid or sc.grid
        status, files = COMMANDS[args.command](sc, args, grid)
    except (ScenarioError, UsageError, CertificateError, ValueError, TypeError,
            OSError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    flags = {k: (str(v) if isinstance(v, (Path, TimeGrid)) else v)
             for k, v in sorted(vars(args).items()) if k not in ("command", "scenario", "verbose")}
    write_manifest(
        args.out, command=args.command, scenario=sc.source, spec_hash=sc.spec.spec_hash(),
        flags=flags, files=files,
        timings={"load": t_load, "total": time.perf_counter() - t0},
        status={EXIT_OK: "ok", EXIT_VIOLATION: "violation"}[status],
    )
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
