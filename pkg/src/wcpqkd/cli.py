"""Command-line front end.

Every command resolves its parameters from (highest precedence first)
command-line flags, a `--params` key = value file, and the built-in
defaults, which reproduce the reference contour calculation (eta = 0.045,
alpha = 0.21 dB/km, f = 1.18, 3% modulation error, d = 8e-7, 2 MHz clock).
A manifest with the effective parameters, seed, tool version and command
line accompanies every output: embedded in JSON reports, on stderr for CSV
emitters.  Outputs are byte-identical for identical manifests.

Exit codes: 0 success, 2 usage/parameter error, 3 empty secure window,
4 reconciliation failure.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .keyio import write_key, write_transcript
from .link import ChannelParams, DetectorParams, SourceParams, link_budget
from .optimize import (EmptyWindow, OptimizeConfig, contour_grid, optimize_mu,
                       rate_curve)
from .postprocess import PaParams, ResidualErrors, run_pipeline
from .rates import RateParams, gain_to_bps, secure_gain
from .simulate import ConfigError, EveConfig, SimConfig, run_session

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_EMPTY_WINDOW = 3
EXIT_RESIDUAL = 4

# physical/model options shared by all commands: dest -> (converter, default, help)
_COMMON = {
    "efficiency": (float, 0.045, "receiver overall detection efficiency"),
    "dark_prob": (float, 8e-7, "erroneous count probability per gate"),
    "modulation_error": (float, 0.03, "intrinsic wrong-bit fraction of signal detections"),
    "alpha": (float, 0.21, "fibre attenuation in dB/km"),
    "clock_rate": (float, 2e6, "pulse rate in Hz"),
    "correction_efficiency": (float, 1.18, "error-correction inefficiency f >= 1"),
    "multiphoton_model": (str, "approx", "approx | exact_poisson"),
    "mu_lo": (float, 1e-5, "lower intensity search bound"),
    "mu_hi": (float, 1.0, "upper intensity search bound"),
    "rel_tol": (float, 1e-4, "relative convergence tolerance on mu"),
    "grid_points": (int, 200, "coarse bracketing grid size"),
}

_PER_COMMAND = {
    "optimize": {
        "length_km": (float, None, "fibre length in km (required)"),
        "format": (str, "json", "json | text"),
    },
    "curve": {
        "lengths": (str, None, "comma-separated lengths in km"),
        "length_range": (str, None, "lo:hi:step lengths in km"),
        "output": (str, None, "CSV output path (default stdout)"),
    },
    "contour": {
        "mu_decades": (str, "1e-4:1", "lo:hi intensity endpoints, log-spaced"),
        "mu_points": (int, 61, "number of intensity grid points"),
        "length": (str, "0:60:0.5", "lo:hi:step lengths in km"),
        "output": (str, None, "CSV output path (default stdout)"),
    },
    "simulate": {
        "length_km": (float, None, "fibre length in km (required)"),
        "n_pulses": (int, 1000000, "pulses per session"),
        "seed": (int, 1, "session seed"),
        "mu": (float, None, "pulse intensity (default: optimal for the length)"),
        "sample_fraction": (float, 0.1, "fraction disclosed for error estimation"),
        "eve": (str, None, "eavesdropper strategy (pns)"),
        "replacement_transmission": (float, 1.0, "eavesdropper channel delivery probability"),
        "alice_out": (str, None, "write sender sifted key (packed)"),
        "bob_out": (str, None, "write receiver sifted key (packed)"),
    },
    "pipeline": {
        "length_km": (float, None, "fibre length in km (required)"),
        "n_pulses": (int, 1000000, "pulses per session"),
        "seed": (int, 1, "session seed"),
        "mu": (float, None, "pulse intensity (default: optimal for the length)"),
        "sample_fraction": (float, 0.1, "fraction disclosed for error estimation"),
        "eve": (str, None, "eavesdropper strategy (pns)"),
        "replacement_transmission": (float, 1.0, "eavesdropper channel delivery probability"),
        "hash_seed": (int, None, "post-processing seed (default: session seed)"),
        "security_margin": (int, 30, "extra privacy-amplification shrinkage in bits"),
        "key_out": (str, None, "write final key (packed)"),
        "transcript_out": (str, None, "write reconciliation transcript"),
    },
}


def _fmt(x) -> str:
    """CSV cell: 9 significant digits, '.' decimal separator, empty for None."""
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".9g")
    return str(x)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="wcpqkd",
        description="Weak-coherent-pulse BB84 key-rate and session toolkit")
    parser.add_argument("--version", action="version", version=f"wcpqkd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, extra in _PER_COMMAND.items():
        p = sub.add_parser(command)
        p.add_argument("--params", default=None,
                       help="key = value parameter file; flags take precedence")
        for dest, (conv, _default, help_text) in {**_COMMON, **extra}.items():
            p.add_argument("--" + dest.replace("_", "-"), dest=dest,
                           type=conv, default=None, help=help_text)
    return parser


def _load_params_file(path, known):
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown parameter {key!r}")
            out[key] = known[key][0](value)
    return out


def _resolve(args, command):
    """Merge flags > params file > defaults into one effective dict."""
    spec = {**_COMMON, **_PER_COMMAND[command]}
    file_values = {}
    if args.params:
        file_values = _load_params_file(args.params, spec)
    eff = {}
    for dest, (_conv, default, _help) in spec.items():
        cli_value = getattr(args, dest)
        eff[dest] = cli_value if cli_value is not None else file_values.get(dest, default)
    return eff


def _manifest(command, eff, argv):
    return {
        "tool": "wcpqkd",
        "version": __version__,
        "command": command,
        "command_line": argv,
        "params": {k: eff[k] for k in sorted(eff)},
    }


def _detector(eff):
    return DetectorParams(efficiency=eff["efficiency"], dark_prob=eff["dark_prob"],
                          modulation_error=eff["modulation_error"])


def _rate_params(eff):
    return RateParams(correction_efficiency=eff["correction_efficiency"],
                      multiphoton_model=eff["multiphoton_model"])


def _opt_cfg(eff):
    return OptimizeConfig(mu_bounds=(eff["mu_lo"], eff["mu_hi"]),
                          rel_tol=eff["rel_tol"], grid_points=eff["grid_points"])


def _require(eff, key, command):
    if eff[key] is None:
        raise ValueError(f"{command} requires --{key.replace('_', '-')}")
    return eff[key]


def _parse_range(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"expected lo:hi:step, got {text!r}")
    lo, hi, step = (float(p) for p in parts)
    if step <= 0 or hi < lo:
        raise ValueError(f"bad range {text!r}")
    n = int(round((hi - lo) / step))
    return [lo + i * step for i in range(n + 1) if lo + i * step <= hi + 1e-12]


def _emit_json(payload):
    sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_optimize(eff, manifest):
    length = _require(eff, "length_km", "optimize")
    win = optimize_mu(length, _detector(eff), eff["alpha"], _rate_params(eff),
                      _opt_cfg(eff))
    body = {
        "length_km": length,
        "mu_min": win.mu_min,
        "mu_max": win.mu_max,
        "mu_opt": win.mu_opt,
        "gain_per_cycle": win.g_max,
        "secure_bps": gain_to_bps(win.g_max, eff["clock_rate"]),
    }
    if eff["format"] == "text":
        for key, value in body.items():
            sys.stdout.write(f"{key:>16} {_fmt(value)}\n")
    else:
        _emit_json({"manifest": manifest, "window": body})
    return EXIT_OK


def _write_csv(rows, header, path, manifest):
    lines = [",".join(header)]
    lines += [",".join(_fmt(cell) for cell in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    sys.stderr.write(json.dumps({"manifest": manifest}, sort_keys=True) + "\n")


def cmd_curve(eff, manifest):
    lengths = []
    if eff["lengths"]:
        lengths += [float(tok) for tok in eff["lengths"].split(",") if tok.strip()]
    if eff["length_range"]:
        lengths += _parse_range(eff["length_range"])
    if not lengths:
        raise ValueError("curve requires --lengths or --length-range")
    rows = rate_curve(lengths, _detector(eff), eff["alpha"], _rate_params(eff),
                      eff["clock_rate"], _opt_cfg(eff))
    _write_csv([(r.length_km, r.mu_opt, r.sifted_bps, r.secure_bps, r.qber)
                for r in rows],
               ["length_km", "mu_opt", "sifted_bps", "secure_bps", "qber"],
               eff["output"], manifest)
    return EXIT_OK


def cmd_contour(eff, manifest):
    lo, hi = (float(p) for p in eff["mu_decades"].split(":"))
    if not 0 < lo < hi:
        raise ValueError(f"bad intensity endpoints {eff['mu_decades']!r}")
    mu_grid = np.geomspace(lo, hi, eff["mu_points"])
    length_grid = np.array(_parse_range(eff["length"]))
    gains = contour_grid(mu_grid, length_grid, _detector(eff), eff["alpha"],
                         _rate_params(eff))
    rows = [(float(mu_grid[i]), float(length_grid[j]), float(gains[i, j]))
            for i in range(mu_grid.size) for j in range(length_grid.size)]
    _write_csv(rows, ["mu", "length_km", "gain_per_cycle"], eff["output"], manifest)
    return EXIT_OK


def _session_from(eff, command):
    length = _require(eff, "length_km", command)
    detector = _detector(eff)
    mu = eff["mu"]
    if mu is None:
        win = optimize_mu(length, detector, eff["alpha"], _rate_params(eff),
                          _opt_cfg(eff))
        mu = win.mu_opt
    eve = None
    if eff["eve"] is not None:
        eve = EveConfig(strategy=eff["eve"],
                        replacement_transmission=eff["replacement_transmission"])
    cfg = SimConfig(
        n_pulses=eff["n_pulses"],
        seed=eff["seed"],
        source=SourceParams(mu=mu, clock_rate=eff["clock_rate"]),
        channel=ChannelParams(length_km=length, attenuation_db_per_km=eff["alpha"]),
        detector=detector,
        eve=eve,
    )
    return cfg, run_session(cfg, qber_sample_fraction=eff["sample_fraction"])


def _session_body(cfg, session, eff):
    src, ch, det = cfg.source, cfg.channel, cfg.detector
    budget = link_budget(src, ch, det, eff["multiphoton_model"])
    breakdown = secure_gain(src, ch, det, _rate_params(eff))
    return {
        "mu": src.mu,
        "n_pulses": session.n_pulses,
        "detected_count": session.detected_count,
        "sifted_count": session.sifted_count,
        "sample_size": session.sample_size,
        "qber_est": None if np.isnan(session.qber_est) else session.qber_est,
        "qber_low_confidence": session.qber_low_confidence,
        "eve_known_fraction": session.eve_known_fraction,
        "analytic": {
            "detect_prob": budget.detect_prob,
            "multiphoton_prob": budget.multiphoton_prob,
            "qber": budget.qber,
            "sifted_bps": gain_to_bps(budget.detect_prob / 2, src.clock_rate),
            "secure_bps": gain_to_bps(breakdown.secure_gain, src.clock_rate),
            "secure": breakdown.secure,
        },
    }


def cmd_simulate(eff, manifest):
    cfg, session = _session_from(eff, "simulate")
    if eff["alice_out"]:
        write_key(eff["alice_out"], session.alice_sifted)
    if eff["bob_out"]:
        write_key(eff["bob_out"], session.bob_sifted)
    _emit_json({"manifest": manifest, "session": _session_body(cfg, session, eff)})
    return EXIT_OK


def cmd_pipeline(eff, manifest):
    cfg, session = _session_from(eff, "pipeline")
    budget = link_budget(cfg.source, cfg.channel, cfg.detector,
                         eff["multiphoton_model"])
    hash_seed = eff["hash_seed"] if eff["hash_seed"] is not None else eff["seed"]
    pa = PaParams(hash_seed=hash_seed, security_margin_bits=eff["security_margin"])
    report = run_pipeline(session, budget, _rate_params(eff), pa)
    if eff["key_out"]:
        write_key(eff["key_out"], report.final_key)
    if eff["transcript_out"]:
        write_transcript(eff["transcript_out"], report.transcript)
    body = {
        "session": _session_body(cfg, session, eff),
        "ledger": {
            "sifted_count": report.sifted_count,
            "sample_disclosed": report.sample_disclosed,
            "qber_est": None if np.isnan(report.qber_est) else report.qber_est,
            "reconciled_length": report.reconciled_length,
            "corrected_errors": report.corrected_errors,
            "leakage_bits": report.leakage_bits,
            "measured_efficiency": (report.measured_efficiency
                                    if np.isfinite(report.measured_efficiency) else None),
            "model_ec_bits": report.model_ec_bits,
            "pa_fraction": report.pa_fraction,
            "eve_attributed_qber": report.eve_attributed_qber,
            "security_margin_bits": report.security_margin_bits,
            "final_length": report.final_length,
            "final_bits_per_pulse": report.final_length / report.n_pulses,
        },
    }
    _emit_json({"manifest": manifest, "pipeline": body})
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    command = args.command
    try:
        eff = _resolve(args, command)
        manifest = _manifest(command, eff, ["wcpqkd", command] + argv[1:])
        handler = {
            "optimize": cmd_optimize,
            "curve": cmd_curve,
            "contour": cmd_contour,
            "simulate": cmd_simulate,
            "pipeline": cmd_pipeline,
        }[command]
        return handler(eff, manifest)
    except EmptyWindow as exc:
        sys.stderr.write(f"wcpqkd: no secure window: {exc}\n")
        return EXIT_EMPTY_WINDOW
    except ResidualErrors as exc:
        sys.stderr.write(f"wcpqkd: reconciliation failed: {exc}\n")
        return EXIT_RESIDUAL
    except (ValueError, ConfigError, OSError) as exc:
        sys.stderr.write(f"wcpqkd: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
