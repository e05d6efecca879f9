"""Command-line pipeline: simulate-state, sample, learn, estimate, qpca.

Every run writes its primary artifact plus a JSON manifest listing the
sha256 of each input and output file, the resolved configuration, and
library versions. Artifacts themselves contain no timestamps, so reruns
with the same seed are byte-identical. Set SHADOW_MPO_THREADS to cap BLAS
threads (read at package import, before numpy loads).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _json
from .errors import ShadowMpoError
from .learner import LearnerConfig, learn
from .measure import generate_dataset, read_dataset, write_dataset
from .mpo import (
    MPOperator,
    MPState,
    expectation,
    load_state,
    mpo_overlap,
    mpo_trace,
    mps_to_mpo,
    renyi2_entropy,
    save_state,
)
from .qpca import mitigated_expectation, principal_component
from .shadows import (
    estimate_afc_fidelity,
    estimate_afc_purity,
    estimate_observable,
    fit_depolarization_prior,
)
from .states import (
    CircuitSpec,
    GibbsSpec,
    apply_depolarizing,
    ising_gibbs,
    kicked_ising_state,
    random_mpdo,
)


class CliError(Exception):
    """User/validation error: exits with code 2."""


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"input file not found: {p}")
    return p


def _write_manifest(
    subcommand: str,
    inputs: list[Path],
    outputs: list[Path],
    config: dict,
    manifest_path: Path,
    started: float,
) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "versions": {
            "shadow_mpo": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "wall_time_s": time.perf_counter() - started,
    }
    manifest_path.write_text(_json.dumps(manifest) + "\n")


def _manifest_path(args, primary_output: Path) -> Path:
    if getattr(args, "manifest", None):
        return Path(args.manifest)
    return primary_output.with_name(primary_output.name + ".manifest.json")


def _write_json(path: Path, payload) -> None:
    path.write_text(_json.dumps(payload) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, float):
                cells.append(_json.format_float(cell))
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# simulate-state


_SPEC_FIELDS = {
    "gibbs": {"state", "num_qubits", "beta", "g", "h", "svd_cutoff", "trotter_step", "chi_cap", "depolarize"},
    "kicked_ising": {"state", "num_qubits", "depth", "depolarize"},
    "random_mpdo": {"state", "num_qubits", "chi", "seed", "depolarize"},
}


def _build_state(spec: dict):
    kind = spec.get("state")
    if kind not in _SPEC_FIELDS:
        raise CliError(f"invalid field 'state': {kind!r} (use gibbs | kicked_ising | random_mpdo)")
    unknown = set(spec) - _SPEC_FIELDS[kind]
    if unknown:
        raise CliError(f"invalid field for state={kind}: {sorted(unknown)[0]!r}")
    try:
        if kind == "gibbs":
            gspec = GibbsSpec(
                num_qubits=int(spec["num_qubits"]),
                beta=float(spec["beta"]),
                g=float(spec["g"]),
                h=float(spec["h"]),
                svd_cutoff=float(spec.get("svd_cutoff", 1e-20)),
                trotter_step=float(spec.get("trotter_step", 0.01)),
            )
            gspec.validate()
            state = ising_gibbs(gspec, chi_cap=int(spec.get("chi_cap", 128)))
        elif kind == "kicked_ising":
            cspec = CircuitSpec(num_qubits=int(spec["num_qubits"]), depth=int(spec["depth"]))
            cspec.validate()
            state = kicked_ising_state(cspec)
        else:
            state = random_mpdo(int(spec["num_qubits"]), int(spec["chi"]), int(spec["seed"]))
    except KeyError as exc:
        raise CliError(f"spec is missing field {exc}") from exc
    except ValueError as exc:
        raise CliError(f"invalid spec: {exc}") from exc
    p = spec.get("depolarize")
    if p is not None:
        if isinstance(state, MPState):
            state = mps_to_mpo(state)
        try:
            state = apply_depolarizing(state, p)
        except ValueError as exc:
            raise CliError(f"invalid field 'depolarize': {exc}") from exc
    return state


def cmd_simulate_state(args) -> int:
    started = time.perf_counter()
    spec_path = _require_file(args.spec)
    try:
        spec = json.loads(spec_path.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"{spec_path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(spec, dict):
        raise CliError(f"{spec_path}: spec must be a JSON object")
    state = _build_state(spec)
    out = Path(args.output)
    save_state(state, out)
    config = dict(spec)
    config["bond_dimensions"] = state.bond_dimensions()
    config["kind"] = "mpo" if isinstance(state, MPOperator) else "mps"
    _write_manifest("simulate-state", [spec_path], [out], config, _manifest_path(args, out), started)
    print(f"wrote {config['kind']} with max bond {max(config['bond_dimensions'])} to {out}")
    return 0


# ---------------------------------------------------------------------------
# sample


def cmd_sample(args) -> int:
    started = time.perf_counter()
    state_path = _require_file(args.state)
    state = load_state(state_path)
    if args.learning is None:
        args.learning = args.bases
    if not 0 <= args.learning <= args.bases:
        raise CliError(f"--learning {args.learning} must lie in [0, {args.bases}]")
    if args.shots < 1 or args.bases < 1:
        raise CliError("--bases and --shots must be positive")
    dataset = generate_dataset(state, args.bases, args.shots, args.learning, args.seed)
    out = Path(args.output)
    write_dataset(dataset, out)
    config = {
        "bases": args.bases,
        "shots": args.shots,
        "learning": args.learning,
        "seed": args.seed,
        "num_qubits": dataset.num_qubits,
    }
    _write_manifest("sample", [state_path], [out], config, _manifest_path(args, out), started)
    print(f"wrote {args.bases} bases x {args.shots} shots to {out}")
    return 0


# ---------------------------------------------------------------------------
# learn


def cmd_learn(args) -> int:
    started = time.perf_counter()
    config = LearnerConfig(
        ell=args.ell,
        chi_max=args.chi,
        n_sweeps=args.sweeps,
        update_mode=args.mode,
        lambda_reg=args.lambda_reg,
        monitor_k=args.monitor_k,
        use_crm=args.crm_target is not None,
        seed=args.seed,
    )
    try:
        config.validate()
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    inputs: list[Path] = []
    dataset = None
    if args.data is not None:
        data_path = _require_file(args.data)
        inputs.append(data_path)
        dataset = read_dataset(data_path)
    exact_target = None
    if args.exact_state is not None:
        exact_path = _require_file(args.exact_state)
        inputs.append(exact_path)
        exact_target = load_state(exact_path)
        if isinstance(exact_target, MPState):
            exact_target = mps_to_mpo(exact_target)
    if dataset is None and exact_target is None:
        raise CliError("provide a dataset, --exact-state, or both")
    prior = None
    if args.crm_target is not None:
        if dataset is None:
            raise CliError("--crm-target needs a dataset")
        crm_path = _require_file(args.crm_target)
        inputs.append(crm_path)
        psi = load_state(crm_path)
        if not isinstance(psi, MPState):
            raise CliError(f"{crm_path}: --crm-target must be an MPS")
        prior = fit_depolarization_prior(dataset, psi, ell=args.ell)
    report = learn(dataset, config, prior=prior, exact_target=exact_target)
    out = Path(args.output)
    save_state(report.sigma, out)
    outputs = [out]
    payload = {
        "selected_sweep": report.selected_sweep,
        "monitor_mode": report.monitor_mode,
        "config": {
            "ell": config.ell,
            "chi_max": config.chi_max,
            "n_sweeps": config.n_sweeps,
            "update_mode": config.update_mode,
            "lambda_reg": config.lambda_reg,
            "monitor_k": config.monitor_k,
            "use_crm": config.use_crm,
            "seed": config.seed,
        },
        "final": {
            "trace": float(mpo_trace(report.sigma).real),
            "purity": float(mpo_overlap(report.sigma, report.sigma).real),
            "bond_dimensions": report.sigma.bond_dimensions(),
        },
        "sweep_trace": [
            {
                "sweep": row.sweep,
                "f_max_afc": row.f_max_afc,
                "f_gm_afc": row.f_gm_afc,
                "trace": row.trace,
                "hermiticity": row.hermiticity,
                "max_truncation": row.max_truncation,
                "error": row.error,
            }
            for row in report.sweep_trace
        ],
    }
    if prior is not None:
        payload["crm_fitted_p"] = {f"{a}-{b}": p for (a, b), p in sorted(prior.fitted_p.items())}
    if args.report:
        report_path = Path(args.report)
        _write_json(report_path, payload)
        outputs.append(report_path)
    _write_manifest("learn", inputs, outputs, payload["config"], _manifest_path(args, out), started)
    best = report.selected_sweep
    score = None
    if best is not None:
        score = report.sweep_trace[best - 1].f_max_afc
    print(f"selected sweep {best} (f_max {score}) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# estimate


def _load_sigma(args) -> tuple[MPOperator | None, list[Path]]:
    if args.sigma is not None and args.target is not None:
        raise CliError("give either --sigma or --target, not both")
    if args.sigma is not None:
        path = _require_file(args.sigma)
        obj = load_state(path)
        if isinstance(obj, MPState):
            obj = mps_to_mpo(obj)
        return obj, [path]
    if args.target is not None:
        path = _require_file(args.target)
        obj = load_state(path)
        if not isinstance(obj, MPState):
            raise CliError(f"{path}: --target must be an MPS (use --sigma for MPOs)")
        return mps_to_mpo(obj), [path]
    return None, []


def _prefix_renyi2(sigma: MPOperator, n: int) -> float:
    """Exact S2 of sigma reduced to qubits 1..n."""
    if n == sigma.num_qubits:
        return renyi2_entropy(sigma)
    env = np.ones(1, dtype=complex)
    for j in range(sigma.num_qubits, n, -1):
        env = np.einsum("lssr,r->l", sigma.tensors[j - 1], env)
    closed = np.einsum("lstr,r->lst", sigma.tensors[n - 1], env)
    reduced = MPOperator(sigma.tensors[: n - 1] + [closed.reshape(*closed.shape, 1)])
    return renyi2_entropy(reduced)


def cmd_estimate(args) -> int:
    started = time.perf_counter()
    data_path = _require_file(args.data)
    dataset = read_dataset(data_path)
    sigma, extra_inputs = _load_sigma(args)
    out = Path(args.output)
    outputs = [out]
    csv_path = Path(args.csv) if args.csv else None
    payload: dict = {"what": args.what, "split": args.split}
    csv_header: list[str] = []
    csv_rows: list[list] = []

    if args.what == "fidelity":
        if sigma is None:
            raise CliError("--what fidelity needs --sigma or --target")
        try:
            est = estimate_afc_fidelity(dataset, sigma, args.k, split=args.split)
        except ShadowMpoError:
            raise
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        payload.update(
            {
                "k": args.k,
                "f_max_afc": est.f_max_afc,
                "f_gm_afc": est.f_gm_afc,
                "overlap": est.overlap,
                "purity_rho": est.purity_rho,
                "purity_sigma": est.purity_sigma,
                "factors": [
                    {
                        "window": list(f["window"]),
                        "role": f["role"],
                        "overlap": f["overlap"],
                        "purity_rho": f["purity_rho"],
                        "purity_sigma": f["purity_sigma"],
                    }
                    for f in est.factors
                ],
            }
        )
        csv_header = ["window_first", "window_last", "role", "overlap", "purity_rho", "purity_sigma"]
        csv_rows = [
            [f["window"][0], f["window"][1], f["role"], f["overlap"], f["purity_rho"], f["purity_sigma"]]
            for f in est.factors
        ]
        print(f"f_max_afc={est.f_max_afc:.6f} f_gm_afc={est.f_gm_afc:.6f} (k={args.k})")
    elif args.what in ("purity", "entropy"):
        if 2 * args.k > dataset.num_qubits:
            raise CliError(
                f"--k {args.k} needs at least {2 * args.k} qubits (dataset has {dataset.num_qubits})"
            )
        rows = []
        for n in range(2 * args.k, dataset.num_qubits + 1):
            purity = estimate_afc_purity(dataset, args.k, last=n, split=args.split)
            row = {"n": n, "afc_purity": purity}
            if purity > 0:
                row["s2"] = -math.log2(purity)
            else:
                row["s2"] = None
            if sigma is not None:
                row["sigma_s2_exact"] = _prefix_renyi2(sigma, n)
            rows.append(row)
        payload.update({"k": args.k, "rows": rows})
        csv_header = ["n", "afc_purity", "s2"] + (["sigma_s2_exact"] if sigma is not None else [])
        csv_rows = [[r["n"], r["afc_purity"], r["s2"]] + ([r["sigma_s2_exact"]] if sigma is not None else []) for r in rows]
        full = rows[-1]
        print(f"prefix table up to N={full['n']}: purity={full['afc_purity']:.6g} s2={full['s2']:.6g}")
    elif args.what == "observable":
        if not args.pauli:
            raise CliError("--what observable needs --pauli")
        try:
            value = estimate_observable(dataset, args.pauli, split=args.split)
        except ShadowMpoError:
            raise
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        payload.update({"pauli": args.pauli.upper(), "estimate": value})
        csv_header = ["pauli", "estimate"]
        row = [args.pauli.upper(), value]
        if sigma is not None:
            exact = expectation(sigma, args.pauli)
            payload["sigma_value"] = exact
            csv_header.append("sigma_value")
            row.append(exact)
        csv_rows = [row]
        print(f"<{args.pauli.upper()}> = {value:.6f}")
    else:
        raise CliError(f"unknown estimate kind {args.what!r}")

    _write_json(out, payload)
    if csv_path is not None:
        _write_csv(csv_path, csv_header, csv_rows)
        outputs.append(csv_path)
    config = {"what": args.what, "k": args.k, "split": args.split, "pauli": args.pauli}
    _write_manifest(
        "estimate", [data_path] + extra_inputs, outputs, config, _manifest_path(args, out), started
    )
    return 0


# ---------------------------------------------------------------------------
# qpca


def cmd_qpca(args) -> int:
    started = time.perf_counter()
    sigma_path = _require_file(args.sigma)
    sigma = load_state(sigma_path)
    if isinstance(sigma, MPState):
        raise CliError(f"{sigma_path}: qpca needs an MPO")
    result = principal_component(
        sigma,
        chi_mps=args.chi_mps,
        epsilon=args.epsilon,
        n_sweeps=args.sweeps,
        seed=args.seed,
    )
    out = Path(args.output)
    save_state(result.principal_state, out)
    outputs = [out]
    payload = {
        "eigenvalue": result.eigenvalue,
        "energy_trace": result.energy_trace,
        "converged": result.converged,
        "chi_mps": result.chi_mps,
        "epsilon": result.epsilon,
        "bond_dimensions": result.principal_state.bond_dimensions(),
    }
    if args.observables == "z":
        table = []
        for j in range(1, sigma.num_qubits + 1):
            pauli = {j: "Z"}
            table.append(
                {
                    "site": j,
                    "mitigated": mitigated_expectation(result, pauli),
                    "mpo": expectation(sigma, pauli),
                }
            )
        payload["observables_z"] = table
    if args.report:
        report_path = Path(args.report)
        _write_json(report_path, payload)
        outputs.append(report_path)
    config = {
        "chi_mps": args.chi_mps,
        "epsilon": args.epsilon,
        "sweeps": args.sweeps,
        "seed": args.seed,
    }
    _write_manifest("qpca", [sigma_path], outputs, config, _manifest_path(args, out), started)
    print(f"principal eigenvalue {result.eigenvalue:.8f} (converged={result.converged}) -> {out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shadow-mpo",
        description="MPO tomography from local randomized measurements",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-state", help="build a reference state from a JSON spec")
    p.add_argument("spec", help="JSON file: {state: gibbs|kicked_ising|random_mpdo, ...}")
    p.add_argument("-o", "--output", required=True, help="output state JSON")
    p.add_argument("--manifest", help="manifest path (default: <output>.manifest.json)")
    p.set_defaults(func=cmd_simulate_state)

    p = sub.add_parser("sample", help="simulate a randomized-measurement dataset")
    p.add_argument("state", help="state JSON from simulate-state")
    p.add_argument("--bases", type=int, required=True, help="number of random bases N_u")
    p.add_argument("--shots", type=int, required=True, help="shots per basis N_M")
    p.add_argument("--learning", type=int, default=None, help="bases in the learning split (default: all)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True, help="output dataset (.jsonl)")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("learn", help="reconstruct an MPO from measurement data")
    p.add_argument("data", nargs="?", default=None, help="dataset (.jsonl); optional with --exact-state")
    p.add_argument("--ell", type=int, default=2, help="window half-width")
    p.add_argument("--chi", type=int, default=4, help="bond-dimension cap chi'")
    p.add_argument("--sweeps", type=int, default=20)
    p.add_argument("--mode", choices=["one-site", "two-site"], default="two-site")
    p.add_argument("--lambda-reg", type=float, default=1e-10, dest="lambda_reg")
    p.add_argument("--monitor-k", type=int, default=None, dest="monitor_k")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crm-target", help="pure-target MPS for the noise-model prior", dest="crm_target")
    p.add_argument("--exact-state", help="learn from exact window marginals of this state", dest="exact_state")
    p.add_argument("-o", "--output", required=True, help="output sigma MPO JSON")
    p.add_argument("--report", help="write the sweep trace as JSON")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("estimate", help="estimate fidelity/purity/entropy/observable from data")
    p.add_argument("data", help="dataset (.jsonl)")
    p.add_argument("--what", choices=["fidelity", "purity", "entropy", "observable"], required=True)
    p.add_argument("--sigma", help="MPO JSON to compare against")
    p.add_argument("--target", help="MPS JSON to compare against (converted to an MPO)")
    p.add_argument("--k", type=int, default=2, help="factorization window size")
    p.add_argument("--pauli", help="Pauli string for --what observable")
    p.add_argument("--split", choices=["learning", "testing", "all"], default="testing")
    p.add_argument("-o", "--output", required=True, help="output report JSON")
    p.add_argument("--csv", help="also write a CSV table")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("qpca", help="extract the principal component of a learned MPO")
    p.add_argument("sigma", help="MPO JSON")
    p.add_argument("--chi-mps", type=int, default=16, dest="chi_mps")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--sweeps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--observables", choices=["z"], default=None, help="also tabulate per-site <Z>")
    p.add_argument("-o", "--output", required=True, help="output principal-state MPS JSON")
    p.add_argument("--report", help="write eigenvalue/energy trace as JSON")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_qpca)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ShadowMpoError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
