"""Batch front end: run configs, metric snapshots, trajectory CSV, sweeps,
and the cross-module invariant suite.

File formats (all diffable text):

* metric snapshot: one JSON object {"n", "tau": [re, im], "volume_target",
  "u": [n*n reals, row-major, row = constant y]}, reals written with 17
  significant digits so write -> read -> write is byte-identical.
* trajectory CSV: fixed header
  t,dt,volume,R0,sup_resid,var_R,logdet_polyakov,rate_formula,rate_fd,gb_defect
  (rate_fd empty at the endpoints).
* sweep CSV: eps,logdet,delta_vs_flat plus a final "# c = <value>" line.

Exit codes: 0 success, 1 config/IO error, 2 numerical abort, 3 rejected
heat-trace fit, 4 invariant-suite failure.

All randomness sits behind named integer seeds feeding numpy's PCG64
generator; identical config and seed give identical output bytes on one
platform.
"""
import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import analysis, flow, geometry, spectral
from .errors import ConfigError, FitRejected, IterationFailure
from .flow import DiagnosticRow, FlowConfig, Termination
from .geometry import ConformalMetric, TorusModulus

CSV_HEADER = "t,dt,volume,R0,sup_resid,var_R,logdet_polyakov,rate_formula,rate_fd,gb_defect"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# run configuration

@dataclass(frozen=True)
class InitSpec:
    kind: str
    mode: tuple | None
    seed: int | None
    amplitude: float
    bandlimit: int | None


@dataclass(frozen=True)
class DetSpec:
    K: int = 400
    zeta_route: bool = False


@dataclass(frozen=True)
class RunConfig:
    grid_n: int
    tau: TorusModulus
    volume_target: float
    init: InitSpec
    flow: FlowConfig
    det: DetSpec


def _take(d: dict, section: str, known: dict):
    """Pop known keys with defaults; reject anything left over."""
    out = {}
    d = dict(d)
    for key, default in known.items():
        out[key] = d.pop(key) if key in d else default
    if d:
        raise ConfigError(f"unknown key '{section}.{next(iter(d))}'")
    return out


_REQUIRED = object()


def parse_run_config(data: dict) -> RunConfig:
    top = _take(data, "", {"grid_n": _REQUIRED, "tau": _REQUIRED,
                           "volume_target": 1.0, "init": _REQUIRED,
                           "flow": _REQUIRED, "det": {}})
    for key, val in top.items():
        if val is _REQUIRED:
            raise ConfigError(f"missing required key '{key}'")

    tau_pair = top["tau"]
    if (not isinstance(tau_pair, (list, tuple)) or len(tau_pair) != 2):
        raise ConfigError("'tau' must be a [re, im] pair")
    try:
        tau = TorusModulus(float(tau_pair[0]), float(tau_pair[1]))
    except ValueError as exc:
        raise ConfigError(f"'tau': {exc}") from exc

    n = top["grid_n"]
    if not isinstance(n, int) or n < 8 or (n & (n - 1)) != 0:
        raise ConfigError(f"'grid_n' must be a power of two >= 8, got {n!r}")
    vt = float(top["volume_target"])
    if not vt > 0:
        raise ConfigError(f"'volume_target' must be positive, got {vt}")

    init_d = _take(top["init"], "init", {"kind": _REQUIRED, "mode": None,
                                         "seed": None, "amplitude": 0.0,
                                         "bandlimit": None})
    kind = init_d["kind"]
    if kind is _REQUIRED or kind not in ("flat", "mode", "random"):
        raise ConfigError(f"'init.kind' must be flat|mode|random, got {kind!r}")
    if kind == "mode":
        if (not isinstance(init_d["mode"], (list, tuple))
                or len(init_d["mode"]) != 2):
            raise ConfigError("'init.mode' must be an [m, k] pair")
        init_d["mode"] = (int(init_d["mode"][0]), int(init_d["mode"][1]))
    if kind == "random" and init_d["seed"] is None:
        raise ConfigError("'init.seed' is required for random initial data")
    init = InitSpec(kind=kind, mode=init_d["mode"], seed=init_d["seed"],
                    amplitude=float(init_d["amplitude"]),
                    bandlimit=init_d["bandlimit"])

    flow_d = _take(top["flow"], "flow", {"t_max": _REQUIRED, "cfl_safety": 0.25,
                                         "tol_stationary": 1e-8,
                                         "record_every": 1,
                                         "renormalize_volume": True})
    if flow_d["t_max"] is _REQUIRED:
        raise ConfigError("missing required key 'flow.t_max'")
    try:
        fcfg = FlowConfig(t_max=float(flow_d["t_max"]),
                          cfl_safety=float(flow_d["cfl_safety"]),
                          tol_stationary=float(flow_d["tol_stationary"]),
                          record_every=int(flow_d["record_every"]),
                          renormalize_volume=bool(flow_d["renormalize_volume"]))
    except ValueError as exc:
        raise ConfigError(f"'flow': {exc}") from exc

    det_d = _take(top["det"], "det", {"K": 400, "zeta_route": False})
    det = DetSpec(K=int(det_d["K"]), zeta_route=bool(det_d["zeta_route"]))
    return RunConfig(grid_n=n, tau=tau, volume_target=vt, init=init,
                     flow=fcfg, det=det)


def load_run_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("run config must be a JSON object")
    return parse_run_config(data)


def initial_metric(cfg: RunConfig) -> ConformalMetric:
    n, tau, vt = cfg.grid_n, cfg.tau, cfg.volume_target
    init = cfg.init
    if init.kind == "flat":
        return geometry.flat_metric(n, tau, vt)
    if init.kind == "mode":
        return geometry.mode_metric(n, tau, init.mode, init.amplitude, vt)
    return geometry.random_metric(n, tau, init.seed, init.amplitude,
                                  init.bandlimit, vt)


# ---------------------------------------------------------------------------
# snapshots and CSV

def dump_metric(m: ConformalMetric) -> str:
    u_flat = ", ".join(_fmt(x) for x in m.u.ravel())
    return ('{"n": %d, "tau": [%s, %s], "volume_target": %s, "u": [%s]}\n'
            % (m.n, _fmt(m.tau.re), _fmt(m.tau.im), _fmt(m.volume_target), u_flat))


def save_metric(m: ConformalMetric, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_metric(m))


def load_metric(path: str) -> ConformalMetric:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    for key in ("n", "tau", "volume_target", "u"):
        if key not in data:
            raise ConfigError(f"snapshot missing key '{key}'")
    extra = set(data) - {"n", "tau", "volume_target", "u"}
    if extra:
        raise ConfigError(f"snapshot has unknown key '{sorted(extra)[0]}'")
    n = int(data["n"])
    u = np.asarray([float(x) for x in data["u"]], dtype=float)
    if u.size != n * n:
        raise ConfigError(f"snapshot u has {u.size} values, expected {n * n}")
    tau = TorusModulus(float(data["tau"][0]), float(data["tau"][1]))
    return ConformalMetric(n, tau, u.reshape(n, n),
                           float(data["volume_target"]))


def _row_to_csv(r: DiagnosticRow) -> str:
    fd = "" if r.rate_fd is None else _fmt(r.rate_fd)
    return ",".join([_fmt(r.t), _fmt(r.dt), _fmt(r.volume), _fmt(r.r0),
                     _fmt(r.sup_resid), _fmt(r.var_r),
                     _fmt(r.logdet_polyakov), _fmt(r.rate_formula), fd,
                     _fmt(r.gb_defect)])


def write_diagnostics(rows, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in rows:
            fh.write(_row_to_csv(r) + "\n")


def read_diagnostics(path: str):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ConfigError(f"unexpected CSV header: {header!r}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) != 10:
                raise ConfigError(f"malformed CSV row: {line!r}")
            vals = [None if p == "" else float(p) for p in parts]
            rows.append(DiagnosticRow(t=vals[0], dt=vals[1], volume=vals[2],
                                      r0=vals[3], sup_resid=vals[4],
                                      var_r=vals[5], logdet_polyakov=vals[6],
                                      rate_formula=vals[7], rate_fd=vals[8],
                                      gb_defect=vals[9]))
    return rows


# ---------------------------------------------------------------------------
# subcommands

def cmd_flow(config_path: str, out_path: str, snapshot_dir: str | None = None) -> int:
    try:
        cfg = load_run_config(config_path)
        m0 = initial_metric(cfg)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    callback = None
    if snapshot_dir is not None:
        import os

        try:
            os.makedirs(snapshot_dir, exist_ok=True)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1

        def callback(index, row, u):
            snap = ConformalMetric(m0.n, m0.tau, u, m0.volume_target)
            save_metric(snap, os.path.join(snapshot_dir, f"metric_{index:06d}.json"))

    traj = flow.evolve(m0, cfg.flow, record_callback=callback)
    try:
        write_diagnostics(traj.samples, out_path)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    summary = {
        "termination": traj.termination.value,
        "t_final": traj.final.t,
        "steps_recorded": len(traj.samples),
        "residual": traj.final.residual,
        "logdet_polyakov": traj.samples[-1].logdet_polyakov,
    }
    if cfg.det.zeta_route:
        try:
            summary["logdet_zeta"] = spectral.logdet_zeta(traj.final.metric, cfg.det.K)
        except (FitRejected, IterationFailure, ValueError) as exc:
            print(f"warning: zeta route failed: {exc}", file=sys.stderr)
    print(json.dumps(summary))
    return 2 if traj.termination is Termination.STEP_UNDERFLOW else 0


def _report_json(rep: spectral.DetReport) -> str:
    pairs = [("logdet_polyakov", rep.logdet_polyakov)]
    if rep.logdet_zeta is not None:
        pairs.append(("logdet_zeta", rep.logdet_zeta))
    pairs += [("flat_reference", rep.flat_reference),
              ("anomaly_term", rep.anomaly_term),
              ("rate_formula", rep.rate_formula),
              ("volume", rep.volume)]
    return "{" + ", ".join(f'"{k}": {_fmt(v)}' for k, v in pairs) + "}"


def cmd_det(metric_path: str, method: str = "polyakov", K: int = 400) -> int:
    try:
        m = load_metric(metric_path)
    except (ConfigError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        rep = spectral.det_report(m, K=K, with_zeta=(method == "zeta"))
    except FitRejected as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except IterationFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(_report_json(rep))
    return 0


def cmd_spectrum(metric_path: str, K: int) -> int:
    try:
        m = load_metric(metric_path)
    except (ConfigError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        s = spectral.eigenvalues(m, K)
    except (IterationFailure, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    eig = ", ".join(_fmt(x) for x in s.eigenvalues)
    print('{"eigenvalues": [%s], "count": %d, "zero_mode_error": %s}'
          % (eig, s.count, _fmt(s.zero_mode_error)))
    return 0


def cmd_sweep(out_path: str, mode=None, seed=None, bandlimit=None,
              eps_list=None, tau=(0.0, 1.0), n: int = 64,
              volume_target: float = 1.0) -> int:
    try:
        tau_m = TorusModulus(float(tau[0]), float(tau[1]))
        if (mode is None) == (seed is None):
            raise ConfigError("exactly one of --mode / --seed is required")
        if eps_list is None:
            eps_list = [0.02, 0.04, 0.08, 0.16]
        if mode is not None:
            direction = tuple(mode)
        else:
            direction = geometry.band_limited_field(
                n, bandlimit if bandlimit is not None else n // 8, seed)
        rows, c = analysis.maximality_sweep(direction, eps_list, tau_m, n,
                                            volume_target)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write("eps,logdet,delta_vs_flat\n")
            for r in rows:
                fh.write(f"{_fmt(r.eps)},{_fmt(r.logdet)},{_fmt(r.delta_vs_flat)}\n")
            fh.write(f"# c = {_fmt(c)}\n")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"c = {_fmt(c)}")
    return 0


# ---------------------------------------------------------------------------
# invariant suite

def _verify_checks(corpus_dir=None, corrupt_cp=None):
    """Yield (name, passed, detail) for the cross-module invariant table."""
    tau_i = TorusModulus(0.0, 1.0)
    tau_q = TorusModulus(0.3, 1.7)

    # Gauss-Bonnet on random band-limited metrics
    worst = 0.0
    for seed in range(20):
        m = geometry.random_metric(32, tau_i if seed % 2 else tau_q, seed,
                                   0.3, bandlimit=4)
        curv = geometry.scalar_curvature(m)
        cell = m.tau.im / m.n**2
        abs_int = cell * float((np.abs(curv.r) * np.exp(m.u)).sum())
        worst = max(worst, abs(curv.gb_defect) / (1.0 + abs_int))
    yield "gauss_bonnet", worst <= 1e-8, f"worst |int R dmu| ratio {worst:.2e}"

    # Fourier symbol against the closed form
    worst = 0.0
    for tau in (tau_i, tau_q):
        for mk in ((1, 0), (0, 1), (2, 3)):
            f = geometry.mode_field(32, mk)
            lap = geometry.flat_laplacian(f, tau)
            lam_ref = (4 * np.pi**2 / tau.im**2) * abs(mk[0] * tau.as_complex - mk[1])**2
            worst = max(worst, float(np.max(np.abs(lap + lam_ref * f))) / lam_ref)
    yield "fourier_symbol", worst <= 1e-12, f"worst mode error {worst:.2e}"

    # scaling laws
    d1 = abs(spectral.flat_logdet(tau_i, 2.0) - spectral.flat_logdet(tau_i, 1.0)
             - np.log(2.0))
    m = geometry.random_metric(32, tau_i, 5, 0.2, bandlimit=4)
    m_shift = ConformalMetric(m.n, m.tau, m.u + 0.7, m.volume_target)
    r_a = geometry.scalar_curvature(m).r
    r_b = geometry.scalar_curvature(m_shift).r
    d2 = float(np.max(np.abs(r_b - np.exp(-0.7) * r_a))) / float(np.max(np.abs(r_a)))
    d3 = abs(spectral.det_rate(m_shift) - np.exp(-0.7) * spectral.det_rate(m)) \
        / spectral.det_rate(m)
    ok = d1 <= 1e-12 and d2 <= 1e-12 and d3 <= 1e-10
    yield "scaling_laws", ok, f"area {d1:.1e}, shift {d2:.1e}, rate {d3:.1e}"

    # modular invariance of the unit-volume flat determinant
    t = tau_q.as_complex
    images = [t, t + 1, -1 / t]
    vals = [spectral.flat_logdet(TorusModulus(x.real, x.imag), 1.0) for x in images]
    spread = max(vals) - min(vals)
    yield "modular_invariance", spread <= 1e-12, f"spread {spread:.2e}"

    # rate identity + finite-difference bridge on a short seeded run
    # (bandlimit 2 keeps the fastest decay scale resolvable by the n=32
    # CFL step, so the centered difference is trustworthy at 1e-3)
    cp_eff = spectral.RATE_COEFF * (corrupt_cp if corrupt_cp is not None else 1.0)
    m0 = geometry.random_metric(32, tau_i, 7, 0.2, bandlimit=2)
    traj = flow.evolve(m0, FlowConfig(t_max=0.08, record_every=1))
    mfin = traj.final.metric
    lhs = spectral.det_rate(mfin)
    rhs_val = cp_eff * analysis.cauchy_gap(mfin) * geometry.volume(mfin)
    d_id = abs(lhs - rhs_val) / max(lhs, 1e-300)
    worst_fd = 0.0
    for row in traj.samples:
        if row.rate_fd is not None and row.rate_formula > 1e-6:
            rate_chk = row.rate_formula * (corrupt_cp if corrupt_cp is not None else 1.0)
            worst_fd = max(worst_fd, abs(row.rate_fd - rate_chk) / rate_chk)
    ok = d_id <= 1e-10 and worst_fd <= 1e-3
    yield "rate_identity", ok, f"identity {d_id:.1e}, fd bridge {worst_fd:.1e}"

    # monotonicity certificates on seeded runs
    all_pass, min_rate = True, np.inf
    for seed in (1, 2, 3):
        m0 = geometry.random_metric(32, tau_i, seed, 0.2, bandlimit=4)
        traj = flow.evolve(m0, FlowConfig(t_max=2.0, record_every=8))
        rep = analysis.monotonicity_certificate(traj, tol=1e-9)
        all_pass &= rep.passed and traj.termination is Termination.STATIONARY
        min_rate = min(min_rate, rep.min_rate)
    yield "certificate", all_pass, f"3 seeded runs, min rate {min_rate:.2e}"

    # flat-torus spectrum
    mflat = geometry.flat_metric(32, tau_i, 1.0)
    s = spectral.eigenvalues(mflat, 8)
    ref = np.array([0.0] + [4 * np.pi**2] * 4 + [8 * np.pi**2] * 4)
    err = float(np.max(np.abs(s.eigenvalues - ref) / np.maximum(ref, 1.0)))
    yield "flat_spectrum", err <= 1e-8, f"max rel error {err:.2e}"

    if corpus_dir is not None:
        import os

        names = sorted(fn for fn in os.listdir(corpus_dir) if fn.endswith(".json"))
        worst = 0.0
        for fn in names:
            mc = load_metric(os.path.join(corpus_dir, fn))
            curv = geometry.scalar_curvature(mc)
            cell = mc.tau.im / mc.n**2
            abs_int = cell * float((np.abs(curv.r) * np.exp(mc.u)).sum())
            worst = max(worst, abs(curv.gb_defect) / (1.0 + abs_int))
            rep = spectral.det_report(mc)
            if rep.anomaly_term > 0:
                worst = np.inf
        yield "corpus", worst <= 1e-8, f"{len(names)} snapshots, worst {worst:.2e}"


def cmd_verify(corpus_dir=None, corrupt_cp=None) -> int:
    if corpus_dir is not None:
        import os

        if not os.path.isdir(corpus_dir):
            print(f"error: corpus directory {corpus_dir!r} not found", file=sys.stderr)
            return 1
    failures = 0
    for name, ok, detail in _verify_checks(corpus_dir, corrupt_cp):
        status = "PASS" if ok else "FAIL"
        failures += not ok
        print(f"{status}  {name:<20} {detail}")
    if failures:
        print(f"FAILED: {failures} failing check(s)")
    else:
        print("OK: all checks passed")
    return 4 if failures else 0


# ---------------------------------------------------------------------------
# argument parsing

def _parse_mode(text):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected m,k")
    return int(parts[0]), int(parts[1])


def _parse_eps(text):
    return [float(p) for p in text.split(",") if p != ""]


def _parse_tau(text):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected re,im")
    return float(parts[0]), float(parts[1])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="torusdet",
                                 description="Normalized Ricci flow on conformal "
                                             "tori and log det' along it")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flow", help="integrate a flow run from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="trajectory CSV path")
    p.add_argument("--snapshots", default=None, help="directory for metric snapshots")

    p = sub.add_parser("det", help="log det' of a metric snapshot")
    p.add_argument("--metric", required=True)
    p.add_argument("--method", choices=("polyakov", "zeta"), default="polyakov")
    p.add_argument("--K", type=int, default=400)

    p = sub.add_parser("spectrum", help="smallest eigenvalues of a snapshot")
    p.add_argument("--metric", required=True)
    p.add_argument("--K", type=int, default=16)

    p = sub.add_parser("sweep", help="determinant along a perturbation family")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", type=_parse_mode, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--bandlimit", type=int, default=None)
    p.add_argument("--eps", type=_parse_eps, default=None)
    p.add_argument("--tau", type=_parse_tau, default=(0.0, 1.0))
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--volume-target", type=float, default=1.0)

    p = sub.add_parser("verify", help="run the cross-module invariant suite")
    p.add_argument("--corpus", default=None, help="directory of extra snapshots")
    p.add_argument("--corrupt-cp", type=float, default=None,
                   help="test hook: scale the rate coefficient in the check")
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:           # argparse exits 2 on flag errors
        return 0 if exc.code in (0, None) else 1
    if args.command == "flow":
        code = cmd_flow(args.config, args.out, args.snapshots)
    elif args.command == "det":
        code = cmd_det(args.metric, args.method, args.K)
    elif args.command == "spectrum":
        code = cmd_spectrum(args.metric, args.K)
    elif args.command == "sweep":
        code = cmd_sweep(args.out, mode=args.mode, seed=args.seed,
                         bandlimit=args.bandlimit, eps_list=args.eps,
                         tau=args.tau, n=args.n,
                         volume_target=args.volume_target)
    else:
        code = cmd_verify(args.corpus, args.corrupt_cp)
    return code


if __name__ == "__main__":
    sys.exit(main())
