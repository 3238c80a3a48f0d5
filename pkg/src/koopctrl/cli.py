"""Command-line pipeline: collect, fit, synthesize, simulate, verify.

One JSON config document drives every stage (no environment variables);
artifacts land in the output directory and carry the sha256 of their
inputs. All randomness flows from the single config seed with fixed
per-stage offsets: collect uses seed, certificate sampling seed+1,
region Monte-Carlo checks seed+2.

Exit codes: 0 success, 2 infeasible synthesis, 3 verification violation or
diverged closed loop, 4 configuration/I-O error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import edmd, lifting, sdp, sim, synthesis
from .errors import (
    ConfigError,
    EmptyRunError,
    InfeasibleSynthesisError,
    KoopctrlError,
)

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_VIOLATION = 3
EXIT_CONFIG = 4

DEFAULT_CONFIG = {
    "system": {"name": "vanderpol", "mu": 1.0},
    "data": {
        "tau_s": 0.01,
        "duration": 20.0,
        "seed": 227,
        "input_range": [-1.0, 1.0],
        "x0": [-0.128, -0.948],
        "warmup": 15,
    },
    "liftings": [
        {"kind": "monomial", "n": 2, "degree": 5},
        {"kind": "delay", "n": 2, "dx": 15, "du": 0},
    ],
    "region": {"c_z": 0.01},
    "synthesis": {
        "mode": "nominal",
        "l_eps": {"source": "fixed", "value": 0.0, "inflation": 1.5},
        "beta": 1e5,
        "delta": 1e-6,
        "gain_shaping": False,
        "max_iter": 600,
    },
    "verification": {"samples": 10000},
    "closed_loop": {"x0": [1.0, -0.6], "steps": 2000},
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None):
    """Config with defaults; a user file overrides keys recursively."""
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    try:
        with open(path) as fh:
            user = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return _merge(DEFAULT_CONFIG, user)


def _system_from_config(cfg):
    spec = cfg["system"]
    if spec["name"] != "vanderpol":
        raise ConfigError(f"unknown system {spec['name']!r}")
    return sim.vanderpol(float(spec.get("mu", 1.0)))


def _liftings_from_config(cfg):
    return [lifting.LiftingSpec.from_json(obj) for obj in cfg["liftings"]]


def _lifting_tag(spec):
    if spec.kind == lifting.MONOMIAL:
        return f"monomial_d{spec.degree}"
    return f"delay_dx{spec.dx}_du{spec.du}"


def _region_from_config(cfg, dim):
    reg = cfg["region"]
    if "c_z" in reg:
        return synthesis.region_ball(dim, float(reg["c_z"]))
    return synthesis.region_from_qsr(
        np.asarray(reg["q"], dtype=float),
        np.asarray(reg["s"], dtype=float), float(reg["r"]))


def _sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


def _sha256_file(path):
    return _sha256_bytes(Path(path).read_bytes())


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_collect(cfg, out_dir):
    """Simulate the excitation run and write dataset CSV + meta JSON."""
    data = cfg["data"]
    tau_s = float(data["tau_s"])
    steps = int(round(float(data["duration"]) / tau_s))
    if steps <= 0:
        raise EmptyRunError("data collection needs a positive duration")
    warmup = int(data["warmup"])
    seed = int(data["seed"])
    lo, hi = (float(v) for v in data["input_range"])
    system = _system_from_config(cfg)

    excitation = sim.generate_excitation(seed, lo, hi, steps)
    inputs = np.concatenate([np.zeros(warmup), excitation])
    traj = sim.simulate_open(system, np.asarray(data["x0"], dtype=float), inputs, tau_s)
    if traj.diverged:
        raise ConfigError("excitation run diverged; adjust the input range")
    dataset = edmd.dataset_from_trajectory(
        traj, n_warmup=warmup, seed=seed, source=system.label)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "dataset.csv"
    csv_path.write_text(edmd.dataset_to_csv(dataset))
    _write_json(out / "dataset_meta.json", {
        "tau_s": tau_s,
        "n_warmup": warmup,
        "seed": seed,
        "source": system.label,
        "samples": dataset.length,
        "inputs": {"config_sha256": _sha256_bytes(
            json.dumps(cfg, sort_keys=True).encode())},
        "data_sha256": edmd.dataset_hash(dataset),
    })
    log.info("collected %d samples (+%d warm-up) -> %s", dataset.length, warmup, csv_path)
    return EXIT_OK


def _load_dataset(out_dir):
    out = Path(out_dir)
    csv_path, meta_path = out / "dataset.csv", out / "dataset_meta.json"
    if not csv_path.exists() or not meta_path.exists():
        raise ConfigError(f"missing dataset files under {out_dir}; run collect first")
    meta = json.loads(meta_path.read_text())
    return edmd.dataset_from_csv(
        csv_path.read_text(), meta["tau_s"], meta["n_warmup"],
        meta.get("seed"), meta.get("source", "")), meta


def cmd_fit(cfg, out_dir):
    """Fit one model per configured lifting; write model + error reports."""
    dataset, _ = _load_dataset(out_dir)
    data_sha = _sha256_file(Path(out_dir) / "dataset.csv")
    for spec in _liftings_from_config(cfg):
        tag = _lifting_tag(spec)
        model = edmd.fit_dataset(dataset, spec)
        report = edmd.residuals(model, dataset)
        payload = model.to_json()
        payload["provenance"].update({
            "dataset_csv_sha256": data_sha,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        })
        _write_json(Path(out_dir) / f"model_{tag}.json", payload)
        _write_json(Path(out_dir) / f"errors_{tag}.json", report.summary())
        log.info("fitted %s: N=%d, l_hat=%.3e, rms=%.3e",
                 tag, model.dimension, report.l_hat, report.rms)
    return EXIT_OK


def _load_model(out_dir, tag):
    path = Path(out_dir) / f"model_{tag}.json"
    if not path.exists():
        raise ConfigError(f"missing model file {path}; run fit first")
    return edmd.BilinearModel.from_json(json.loads(path.read_text())), _sha256_file(path)


def _resolve_l_eps(cfg, out_dir, tag):
    conf = cfg["synthesis"]["l_eps"]
    if conf.get("source", "fixed") == "fixed":
        return float(conf.get("value", 0.0))
    path = Path(out_dir) / f"errors_{tag}.json"
    if not path.exists():
        raise ConfigError(f"l_eps source 'estimated' needs {path}; run fit first")
    summary = json.loads(path.read_text())
    return float(conf.get("inflation", 1.5)) * float(summary["l_hat"])


def cmd_synthesize(cfg, out_dir):
    """Solve the synthesis LMI for every configured lifting."""
    syn = cfg["synthesis"]
    mode = syn["mode"]
    for spec in _liftings_from_config(cfg):
        tag = _lifting_tag(spec)
        model, model_sha = _load_model(out_dir, tag)
        region = _region_from_config(cfg, model.dimension)
        l_eps = _resolve_l_eps(cfg, out_dir, tag) if mode == synthesis.ROBUST else 0.0
        started = time.monotonic()
        controller = synthesis.synthesize(
            model, region, mode=mode, l_eps=l_eps,
            beta=float(syn["beta"]), delta=float(syn["delta"]),
            solver_options=sdp.SolverOptions(max_iter=int(syn.get("max_iter", 600))),
            gain_shaping=bool(syn.get("gain_shaping", False)))
        elapsed = time.monotonic() - started
        payload = controller.to_json()
        payload["inputs"] = {"model_sha256": model_sha}
        payload["diagnostics"]["wall_clock_s"] = elapsed
        _write_json(Path(out_dir) / f"controller_{tag}.json", payload)
        log.info("synthesized %s controller for %s in %.1fs (c=%.3e)",
                 mode, tag, elapsed, controller.c)
    return EXIT_OK


def _load_controller(out_dir, tag):
    path = Path(out_dir) / f"controller_{tag}.json"
    if not path.exists():
        raise ConfigError(f"missing controller file {path}; run synthesize first")
    return synthesis.Controller.from_json(json.loads(path.read_text())), _sha256_file(path)


def cmd_simulate(cfg, out_dir):
    """Closed-loop runs from the configured initial condition, plus an
    open-loop comparison series; CSV outputs."""
    system = _system_from_config(cfg)
    closed = cfg["closed_loop"]
    x0 = np.asarray(closed["x0"], dtype=float)
    steps = int(closed["steps"])
    tau_s = float(cfg["data"]["tau_s"])
    worst = EXIT_OK
    open_traj = sim.simulate_open(system, x0, np.zeros(steps), tau_s)
    for spec in _liftings_from_config(cfg):
        tag = _lifting_tag(spec)
        controller, _ = _load_controller(out_dir, tag)
        traj = sim.simulate_closed(system, spec, controller.k, x0, steps, tau_s)
        (Path(out_dir) / f"closedloop_{tag}.csv").write_text(sim.trajectory_to_csv(traj))
        (Path(out_dir) / f"phase_{tag}.csv").write_text(sim.phase_csv([open_traj, traj]))
        final = float(np.linalg.norm(traj.states[-1]))
        log.info("closed loop %s: %d steps, final |x| = %.3e%s",
                 tag, traj.inputs.shape[0], final, " (diverged)" if traj.diverged else "")
        if traj.diverged:
            worst = EXIT_VIOLATION
    return worst


def _closed_loop_monotone(system, spec, controller, x0, steps, tau_s):
    """Check Lyapunov decrease along a simulated closed loop (after the
    delay warm-up, while above the numerical floor)."""
    traj = sim.simulate_closed(system, spec, controller.k, x0, steps, tau_s)
    if traj.diverged:
        return False, traj
    start = spec.dx if spec.kind == lifting.DELAY else 0
    values = []
    for k in range(start, traj.states.shape[0]):
        if spec.kind == lifting.MONOMIAL:
            z = lifting.monomial_lift(traj.states[k], spec.degree)
        else:
            x_hist = traj.states[k - spec.dx:k + 1]
            u_hist = traj.inputs[k - spec.du:k] if spec.du else np.empty(0)
            z = lifting.delay_lift(x_hist, u_hist, spec)
        values.append(controller.lyapunov(z))
    values = np.array(values)
    inside = values <= controller.c
    active = inside[:-1] & (values[:-1] > 1e-9)
    ok = bool(np.all(values[1:][active] < values[:-1][active]))
    return ok, traj


def cmd_verify(cfg, out_dir):
    """Certificate re-verification + closed-loop monotonicity check."""
    system = _system_from_config(cfg)
    seed = int(cfg["data"]["seed"]) + 1
    samples = int(cfg["verification"]["samples"])
    worst = EXIT_OK
    for spec in _liftings_from_config(cfg):
        tag = _lifting_tag(spec)
        model, _ = _load_model(out_dir, tag)
        controller, _ = _load_controller(out_dir, tag)
        region = _region_from_config(cfg, model.dimension)
        report = synthesis.verify_certificate(
            model, controller, region, n_samples=samples, seed=seed)
        monotone, _ = _closed_loop_monotone(
            system, spec, controller, np.asarray(cfg["closed_loop"]["x0"], dtype=float),
            int(cfg["closed_loop"]["steps"]), float(cfg["data"]["tau_s"]))
        payload = report.to_json()
        payload["closed_loop_monotone"] = monotone
        _write_json(Path(out_dir) / f"verify_{tag}.json", payload)
        status = "pass" if (report.passed and monotone) else "FAIL"
        print(f"verify {tag}: {status} ({report.violations} violations, "
              f"min decrease {report.min_decrease:.3e})")
        if not (report.passed and monotone):
            worst = EXIT_VIOLATION
    return worst


def cmd_repro_vdp(out_dir, verbose=False):
    """Full benchmark pipeline under the pinned default config, both
    liftings, plus a robust-feasibility probe on the monomial model."""
    cfg = load_config(None)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cmd_collect(cfg, out)
    cmd_fit(cfg, out)
    cmd_synthesize(cfg, out)
    sim_code = cmd_simulate(cfg, out)
    verify_code = cmd_verify(cfg, out)

    dataset, _ = _load_dataset(out)
    system = _system_from_config(cfg)
    rows = []
    for spec in _liftings_from_config(cfg):
        tag = _lifting_tag(spec)
        model, _ = _load_model(out, tag)
        controller, _ = _load_controller(out, tag)
        region = _region_from_config(cfg, model.dimension)
        robust_problem = synthesis.build_robust_lmi(model, region, l_eps=0.0)
        traj = sim.simulate_closed(
            system, spec, controller.k, np.asarray(cfg["closed_loop"]["x0"]),
            int(cfg["closed_loop"]["steps"]), float(cfg["data"]["tau_s"]))
        norms = np.linalg.norm(traj.states, axis=1)
        converged_at = np.argmax(norms <= 1e-2) if np.any(norms <= 1e-2) else -1
        rows.append({
            "lifting": tag,
            "N": model.dimension,
            "lmi_dim": 3 * model.dimension + 1,
            "n_vars": robust_problem.n_vars,
            "feasible": True,
            "c": controller.c,
            "steps_to_converge": int(converged_at),
            "final_norm": float(norms[-1]),
        })

    # robust probe on the monomial model at the benchmark error bound
    mono_spec = _liftings_from_config(cfg)[0]
    model, _ = _load_model(out, _lifting_tag(mono_spec))
    region = _region_from_config(cfg, model.dimension)
    probe = {"l_eps": 1e-5}
    try:
        robust = synthesis.synthesize(
            model, region, mode=synthesis.ROBUST, l_eps=1e-5,
            beta=float(cfg["synthesis"]["beta"]),
            solver_options=sdp.SolverOptions(max_iter=600), gain_shaping=False)
        probe.update({"feasible": True, "c": robust.c})
    except InfeasibleSynthesisError as exc:
        probe.update({"feasible": False, "margin": exc.margin})

    summary = {"rows": rows, "robust_probe_monomial": probe}
    _write_json(out / "summary.json", summary)
    header = f"{'lifting':<18}{'N':>4}{'LMI':>6}{'vars':>6}{'feasible':>10}" \
             f"{'c':>12}{'converge@':>11}"
    print(header)
    for row in rows:
        print(f"{row['lifting']:<18}{row['N']:>4}{row['lmi_dim']:>6}{row['n_vars']:>6}"
              f"{str(row['feasible']):>10}{row['c']:>12.3e}{row['steps_to_converge']:>11}")
    print(f"robust probe (monomial, l_eps=1e-5): "
          f"{'feasible' if probe.get('feasible') else 'infeasible'}")
    return max(sim_code, verify_code)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="koopctrl",
        description="Bilinear lifted-model identification and LMI controller synthesis")
    parser.add_argument("--verbose", action="store_true", help="per-stage logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("collect", "fit", "synthesize", "simulate", "verify"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", default=None, help="JSON config path (defaults pinned)")
        cmd.add_argument("--out", required=True, help="artifact directory")
    repro = sub.add_parser("repro-vdp", help="run the full benchmark pipeline")
    repro.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "repro-vdp":
            return cmd_repro_vdp(args.out, verbose=args.verbose)
        cfg = load_config(args.config)
        Path(args.out).mkdir(parents=True, exist_ok=True)
        handler = {
            "collect": cmd_collect,
            "fit": cmd_fit,
            "synthesize": cmd_synthesize,
            "simulate": cmd_simulate,
            "verify": cmd_verify,
        }[args.command]
        return handler(cfg, args.out)
    except InfeasibleSynthesisError as exc:
        print(f"infeasible synthesis: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, EmptyRunError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KoopctrlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
