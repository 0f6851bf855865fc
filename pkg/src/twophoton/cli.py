"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical or fit error,
4 failed oracle check.
"""
import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import estimation, fisher, fringes, instrument, scan, spectral, states
from .config import DEFAULTS, drift_from_config, instrument_from_config, load_config, pair_from_config
from .errors import ConfigError, DomainError, TwoPhotonError
from .units import C, db_to_transmission, nm

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4
THREADS_ENV = "TWOPHOTON_THREADS"
TRIAL_COLUMNS = ["seed", "tau_s", "t_int_s", "n_aa", "n_ab", "n_ba", "n_bb", "accidentals"]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def render_table(schema, columns, rows, fmt):
    """Serialize a table as versioned CSV or as JSON records."""
    if fmt == "json":
        doc = {"schema": schema, "rows": [dict(zip(columns, r)) for r in rows]}
        return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    buf.write(f"# schema: {schema}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _write(out_dir, name, text):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _write_table(args, stem, schema, columns, rows):
    ext = "json" if args.format == "json" else "csv"
    return _write(args.out, f"{stem}.{ext}", render_table(schema, columns, rows, args.format))


def _write_json(args, name, doc):
    return _write(args.out, name, json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


# ---- fringe ---------------------------------------------------------------

def cmd_fringe(cfg, args):
    pair = pair_from_config(cfg)
    fc = cfg["fringe"]
    mode = args.mode or fc["mode"]
    if mode == "hom":
        pair = fringes.PhotonPairSpec(pair.omega1, pair.omega1, pair.sigma)
    x = np.linspace(nm(fc["x_min_nm"]), nm(fc["x_max_nm"]), fc["points"])
    tau = x / C
    eps = fc["epsilon"] if mode == "mixed" else 1.0
    extra = []
    if mode in ("entangled", "mixed", "hom"):
        p_c = fringes.mixed_coincidence_probability(pair, eps, tau)
        env = fringes.visibility_envelope(pair, tau)
        cos = np.cos(pair.detuning() * tau) * env * eps
        p_same = 0.25 * (1.0 + cos)
        probs = (p_same, 0.5 * p_c, 0.5 * p_c, p_same)
        if eps == 1.0:
            cfi = fisher.classical_fisher_information(pair, tau)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                slope = 0.5 * eps * np.abs(
                    pair.detuning() * np.sin(pair.detuning() * tau)
                    + 4 * pair.sigma**2 * tau * np.cos(pair.detuning() * tau)) * env
                cfi = np.where(p_c * (1 - p_c) > 0, slope**2 / (p_c * (1 - p_c)), 0.0)
        period = pair.beat_period() if mode != "hom" else math.inf
    elif mode == "sum":
        p_c = fringes.sum_frequency_coincidence(pair, tau)
        probs = (0.5 * (1 - p_c), 0.5 * p_c, 0.5 * p_c, 0.5 * (1 - p_c))
        w = pair.sum_frequency()
        cfi = np.full_like(tau, w**2)  # two-outcome cosine fringe: constant information
        period = pair.sum_period()
    else:  # classical-beat
        p_aa, p_bb, p_ab, p_ba = fringes.classical_dual_frequency_probs(pair, tau)
        probs = (p_aa, p_ab, p_ba, p_bb)
        p_c = fringes.classical_beat_coincidence(pair, tau)
        with np.errstate(divide="ignore", invalid="ignore"):
            dp = np.gradient(np.stack(probs), tau, axis=1)
            cfi = np.nansum(np.where(np.stack(probs) > 0, dp**2 / np.stack(probs), 0.0), axis=0)
        extra = [fringes.classical_beat_coincidence(pair, tau, printed_form=True)]
        period = pair.beat_period()
    columns = ["x_m", "tau_s", "p_aa", "p_ab", "p_ba", "p_bb", "p_c", "cfi_rad2_per_s2"]
    if extra:
        columns.append("p_c_printed_form")
    rows = zip(x, tau, *probs, p_c, cfi, *extra)
    path = _write_table(args, "fringe", "fringe v1", columns, rows)
    summary = {"mode": mode, "period_m": period, "period_nm": period * 1e9,
               "qfi_rad2_per_s2": fisher.quantum_fisher_information(pair), "output": os.path.basename(path)}
    _write_json(args, "fringe_summary.json", summary)
    print(json.dumps(_jsonable(summary), sort_keys=True))
    return EXIT_OK


# ---- measure --------------------------------------------------------------

def _reference_scan(cfg_ins, mc, seed, threads):
    period = cfg_ins.fringe_period()
    xs = np.linspace(0.0, mc["reference_periods"] * period, mc["reference_points"])
    records = instrument.run_trials(cfg_ins, xs / C, mc["reference_time_s"], seed,
                                    threads=threads)
    return estimation.fit_reference_fringes(xs, records, {"kind": "reference-scan"})


def cmd_measure(cfg, args):
    mc = cfg["measure"]
    base = instrument_from_config(cfg, drift=mc["drift"])
    seed = args.seed
    refs = _reference_scan(replace(base, drift=instrument.DriftModel.none()), mc,
                           instrument.derive_seed(seed, 0), args.threads)
    period_t = refs.period() / C
    probe = instrument.SimulatedInstrument(base, 1.0, instrument.derive_seed(seed, 1))
    # start at the fitted rising midpoint of the coincidence channel
    ab = refs.ab
    start = ab.c * (ab.d - math.copysign(math.pi / 2, ab.b)) / (2 * math.pi) / C
    sp = estimation.phase_setpoint_search(probe.measure, period_t, tau_start=start,
                                          tol=mc["setpoint_tolerance"])
    x_set = sp.tau * C
    search = estimation.half_fringe_interval(refs, x_set)
    trial_rows, summary_rows = [], []
    block = 2
    for t_int in mc["integration_times_s"]:
        for dx in mc["displacements_nm"]:
            tau = (x_set + nm(dx)) / C
            recs = instrument.run_trials(base, [tau] * mc["trials"], t_int,
                                         instrument.derive_seed(seed, block), threads=args.threads)
            block += 1
            counts = np.array([r.counts for r in recs])
            xs, n = estimation.extract_displacement_batch(refs, counts, search)
            meas = xs - x_set
            theory = estimation.theoretical_resolution(refs, float(n.mean()), x_set + nm(dx))
            summary_rows.append({
                "integration_time_s": t_int, "set_displacement_nm": dx,
                "mean_measured_nm": float(meas.mean() * 1e9),
                "mean_error_nm": float(meas.mean() * 1e9 - dx),
                "empirical_sigma_nm": float(meas.std(ddof=1) * 1e9),
                "theoretical_sigma_nm": float(theory * 1e9),
                "mean_counts": float(n.mean()),
            })
            trial_rows.extend([r.seed, r.tau, r.integration_time, r.n_aa, r.n_ab, r.n_ba,
                               r.n_bb, r.accidentals] for r in recs)
    path = _write_table(args, "trials", "trial-batch v1", TRIAL_COLUMNS, trial_rows)
    summary = {"setpoint_tau_s": sp.tau, "setpoint_p_c": sp.p_c,
               "setpoint_iterations": sp.iterations, "reference_period_nm": refs.period() * 1e9,
               "reference_visibilities": [estimation.visibility_from_fit(f).value
                                          for f in refs.fits],
               "rows": summary_rows, "trials_file": os.path.basename(path)}
    _write_json(args, "measure_summary.json", summary)
    _write(args.out, "references.json", refs.to_json() + "\n")
    print(json.dumps(_jsonable({"rows": len(summary_rows), "trials_file": path})))
    return EXIT_OK


# ---- sweep ----------------------------------------------------------------

def _simulated_scan_visibility(base, loss, sc, seed, threads):
    period = base.fringe_period()
    xs = np.linspace(0.0, 2.0 * period, sc["scan_points"])
    recs = instrument.run_trials(base, xs / C, sc["integration_time_s"], seed, threads=threads,
                                 loss=loss)
    counts = np.array([r.counts for r in recs], dtype=float)
    totals = counts.sum(axis=1)
    p_c = (counts[:, 1] + counts[:, 2]) / np.maximum(totals, 1.0)
    # weight by counts only; weighting by the noisy p_c(1-p_c) inflates the amplitude
    fit = estimation.fit_sinusoid(xs, p_c, totals)
    return estimation.visibility_from_fit(fit)


def cmd_sweep(cfg, args):
    sc = cfg["sweep"]
    kind = args.kind or sc["kind"]
    v0 = cfg["instrument"]["visibility"]
    base = replace(instrument_from_config(cfg), include_envelope=False)
    rows = []
    if kind == "loss":
        c0 = base.pair_rate * sc["integration_time_s"]
        c_li = sc["c_li_fraction"] * c0
        for i, db in enumerate(np.linspace(0.0, sc["max_loss_db"], sc["points"])):
            eta = db_to_transmission(db)
            row = [db, eta, instrument.quantum_visibility_under_loss(v0, c0, c_li, eta),
                   instrument.classical_visibility_under_loss(v0, eta)]
            if sc["simulate"]:
                # noise-free reference visibility so only the c_li admixture lowers it
                vis_ld = v0 * c0 / (c0 - c_li)
                loss = instrument.LossSpec(eta, eta, c_li)
                sim = _simulated_scan_visibility(replace(base, visibility=min(vis_ld, 1.0)),
                                                 loss, sc, instrument.derive_seed(args.seed, i),
                                                 args.threads)
                row += [sim.value, sim.uncertainty]
            rows.append(row)
        columns = ["loss_db", "eta", "v_quantum_model", "v_classical_model"]
        if sc["simulate"]:
            columns += ["v_quantum_sim", "v_quantum_sim_err"]
        schema = "sweep-loss v1"
    else:
        for b in np.linspace(0.0, sc["max_background"], sc["points"]):
            rows.append([
                b,
                instrument.quantum_visibility_under_background(v0, sc["a0_over_c0"], 1.0, b,
                                                               sc["background_form"]),
                instrument.classical_visibility_under_background(v0, b),
            ])
        columns = ["b_fraction", "v_quantum_model", "v_classical_model"]
        schema = "sweep-background v1"
    path = _write_table(args, f"sweep_{kind}", schema, columns, rows)
    print(json.dumps({"kind": kind, "rows": len(rows), "output": path}))
    return EXIT_OK


# ---- scan-sample ----------------------------------------------------------

def _scan_setup(sc, **overrides):
    values = dict(
        thickness=nm(sc["thickness_nm"]), n_film=sc["n_film"],
        n_film_uncertainty=sc["n_film_uncertainty"],
        probe_diameter=sc["probe_diameter_mm"] * 1e-3, edge=sc["edge_mm"] * 1e-3,
        y_min=sc["y_min_mm"] * 1e-3, y_max=sc["y_max_mm"] * 1e-3, points=sc["points"],
        rate_uncoated=sc["rate_uncoated_hz"], rate_coated=sc["rate_coated_hz"],
        visibility_uncoated=sc["visibility_uncoated"], visibility_coated=sc["visibility_coated"],
        integration_time=sc["integration_time_s"], trials=sc["trials"])
    values.update(overrides)
    return scan.FilmScanSetup(**values)


def cmd_scan_sample(cfg, args):
    sc = cfg["scan"]
    mode = args.mode or sc["mode"]
    overrides = {}
    if sc["probe"] == "classical":
        overrides.update(fringe_period=nm(sc["classical_period_nm"]), n_film=sc["classical_n_film"],
                         visibility_uncoated=sc["classical_visibility_uncoated"],
                         visibility_coated=sc["classical_visibility_coated"])
    if mode == "calibration":
        overrides.update(thickness=nm(sc["calibration_thickness_nm"]),
                         rate_coated=sc["rate_uncoated_hz"] * sc["calibration_transmission"],
                         visibility_uncoated=sc["calibration_visibility_uncoated"],
                         visibility_coated=sc["calibration_visibility_coated"])
    setup = _scan_setup(sc, **overrides)
    result = scan.simulate_film_scan(setup, args.seed, threads=args.threads,
                                     visibility_correction=(mode == "calibration"))
    rows = zip(result.y, result.mean_displacement, result.std_displacement, result.theory_sigma)
    path = _write_table(args, "scan", "film-scan v1",
                        ["y_m", "mean_displacement_m", "std_displacement_m", "theory_sigma_m"], rows)
    fit = result.fit
    report = {"mode": mode, "probe": sc["probe"], "scan_file": os.path.basename(path),
              "fit": {k: {"value": v, "error": fit.errors()[k]}
                      for k, v in fit.params.as_dict().items()},
              "probe_diameter_fit_m": 4.0 * fit.params.sigma_probe}
    if mode == "sample":
        report["thickness_m"] = result.thickness
        report["thickness_err_m"] = result.thickness_err
    else:
        period = setup.fringe_period or pair_from_config(cfg).beat_period()
        phase = result.mean_displacement * 2.0 * math.pi / period
        phase_w = (setup.trials / np.maximum(result.std_displacement, 1e-15) ** 2
                   * (period / (2.0 * math.pi)) ** 2)
        idx = scan.calibrated_index_fit(np.column_stack([result.y, phase, phase_w]),
                                        a_fixed=setup.thickness, n_substrate=sc["n_substrate"])
        report["n_film"] = idx.n_film
        report["n_film_err"] = idx.uncertainty
    _write_json(args, "scan_report.json", report)
    print(json.dumps(_jsonable({k: v for k, v in report.items() if k != "fit"}), sort_keys=True))
    return EXIT_OK


# ---- oracle-check ---------------------------------------------------------

def run_oracle_checks(specs=50, tau_points=201, tolerance=1e-6, seed=0):
    rng = np.random.default_rng(seed)
    checks = []
    worst = 0.0
    for _ in range(specs):
        sigma = rng.uniform(1e11, 1e13)
        ratio = rng.uniform(0.0, 100.0)
        w2 = rng.uniform(1e15, 2e15)
        pair = fringes.PhotonPairSpec(w2 + ratio * sigma, w2, sigma)
        tau = np.linspace(-5.0 / sigma, 5.0 / sigma, tau_points)
        num = spectral.coincidence_from_jsa(spectral.entangled_jsa(pair), tau)
        worst = max(worst, float(np.max(np.abs(num - fringes.coincidence_probability(
            pair, tau, include_beta=True)))))
    checks.append({"name": "quadrature vs closed form", "value": worst,
                   "limit": tolerance, "pass": worst <= tolerance})
    pair = fringes.PhotonPairSpec.default()
    q = fisher.quantum_fisher_information(pair)
    cfi0 = fisher.classical_fisher_information(pair, 1e-6 / pair.detuning())
    rel = abs(cfi0 / q - 1.0)
    checks.append({"name": "CFI limit equals QFI", "value": rel, "limit": 1e-9, "pass": rel <= 1e-9})
    qn = spectral.qfi_numerical(pair)
    rel_q = abs(qn / q - 1.0)
    checks.append({"name": "numerical QFI", "value": rel_q, "limit": 1e-4, "pass": rel_q <= 1e-4})
    hom = fringes.PhotonPairSpec(pair.omega1, pair.omega1, pair.sigma)
    hom_val = abs(spectral.coincidence_from_jsa(spectral.entangled_jsa(hom), 0.0))
    checks.append({"name": "degenerate dip depth", "value": hom_val, "limit": 1e-9,
                   "pass": hom_val <= 1e-9})
    return checks


def cmd_oracle_check(cfg, args):
    oc = cfg["oracle"]
    checks = run_oracle_checks(oc["specs"], oc["tau_points"], oc["tolerance"], args.seed)
    ok = all(c["pass"] for c in checks)
    _write_json(args, "oracle_report.json", {"checks": checks, "pass": ok})
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['name']}: {c['value']:.3e} (limit {c['limit']:.0e})")
    return EXIT_OK if ok else EXIT_CHECK


# ---- state-metrics --------------------------------------------------------

def cmd_state_metrics(cfg, args):
    st = cfg["state"]
    path = args.matrix or st["matrix_file"]
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                rho = states.parse_density_matrix(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read density matrix: {exc}") from exc
        source = path
    else:
        rho = states.werner_state(st["werner_p"])
        source = f"werner p={st['werner_p']}"
    report = {
        "source": source,
        "purity": states.purity(rho),
        "concurrence": states.concurrence(rho),
        "singlet_fraction": states.singlet_fraction(rho, st["restarts"], seed=args.seed),
        "bell_fidelities": states.bell_fidelities(rho),
    }
    _write_json(args, "state_metrics.json", report)
    print(json.dumps(_jsonable(report), sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "fringe": cmd_fringe,
    "measure": cmd_measure,
    "sweep": cmd_sweep,
    "scan-sample": cmd_scan_sample,
    "oracle-check": cmd_oracle_check,
    "state-metrics": cmd_state_metrics,
}


def _threads_default():
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        return 1


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, default=0, help="master RNG seed (u64)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default ${THREADS_ENV} or 1)")
    parser = argparse.ArgumentParser(prog="twophoton", parents=[common],
                                     description="Energy-entangled two-photon interferometry toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("fringe", parents=[common], help="closed-form fringe table")
    p.add_argument("--mode", choices=("entangled", "mixed", "sum", "classical-beat", "hom"))
    sub.add_parser("measure", parents=[common], help="Monte Carlo displacement measurements")
    p = sub.add_parser("sweep", parents=[common], help="visibility under loss or background")
    p.add_argument("--kind", choices=("loss", "background"))
    p = sub.add_parser("scan-sample", parents=[common], help="thin-film scan simulation and fit")
    p.add_argument("--mode", choices=("sample", "calibration"))
    sub.add_parser("oracle-check", parents=[common], help="closed form vs quadrature checks")
    p = sub.add_parser("state-metrics", parents=[common], help="purity, concurrence, singlet fraction")
    p.add_argument("--matrix", help="density-matrix text file")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    args.threads = args.threads if args.threads is not None else _threads_default()
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    for opt in ("mode", "kind", "matrix"):
        if not hasattr(args, opt):
            setattr(args, opt, None)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"invalid parameter: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TwoPhotonError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
