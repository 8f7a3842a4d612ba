"""Reproducible experiment runner.

``phonoq run <experiment> --device <file> --seed <n> --decoherence <mode>
--spam <mode> --shots <n|exact> --out <dir>`` executes a named pipeline and
writes a self-describing bundle: CSV for curves and tables, JSON for
matrices and summaries. Same configuration and seed give byte-identical
bundle bodies.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import experiments
from .analysis import classify_and_extract_period
from .benchmarking import DEFAULT_LENGTHS
from .compiler import oracle_truth_table
from .device import DeviceParams, default_device
from .gates import calibrate_theta, ramsey_phonon_frequency, solve_cphi
from .tomography import pauli_strings

SCHEMA_VERSION = 1

EXPERIMENTS = ("rb", "cphi-tomo", "cphi-repeat", "qft-tomo", "qpf", "calibrate")
DECOHERENCE_MODES = ("none", "full", "infinite-phonon", "infinite-qubit")
SPAM_MODES = ("full", "ideal-prep", "ideal-measure", "ideal")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    device_path: str | None = None
    seed: int = 0
    decoherence: str = "full"
    spam: str = "full"
    shots: int | None = None
    out_dir: str | None = None
    phi_over_pi: float = 1.0
    mode: int = 1
    oracle_period: int = 2
    qft_size: int = 3
    rb_lengths: tuple = DEFAULT_LENGTHS
    rb_seeds: int = 30

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.decoherence not in DECOHERENCE_MODES:
            raise ConfigError(f"unknown decoherence mode {self.decoherence!r}")
        if self.spam not in SPAM_MODES:
            raise ConfigError(f"unknown SPAM mode {self.spam!r}")

    def load_device(self) -> DeviceParams:
        if self.device_path is None:
            return default_device()
        try:
            return DeviceParams.from_json(self.device_path)
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"invalid device file {self.device_path}: {exc}") from exc

    def device_hash(self) -> str:
        if self.device_path is None:
            payload = json.dumps(default_device().to_dict(), sort_keys=True).encode()
        else:
            payload = Path(self.device_path).read_bytes()
        return hashlib.sha256(payload).hexdigest()

    def case(self) -> tuple[bool, bool, str]:
        real_prep = self.spam in ("full", "ideal-measure")
        real_measure = self.spam in ("full", "ideal-prep")
        dec = {"infinite-phonon": "no-phonon", "infinite-qubit": "no-qubit"}.get(
            self.decoherence, self.decoherence
        )
        return real_prep, real_measure, dec


@dataclass
class ResultBundle:
    config: dict
    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    summaries: dict[str, dict] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x


def chi_payload(chi: np.ndarray, n: int) -> dict:
    labels = pauli_strings(n)
    return {
        "labels": {str(i): s for i, s in enumerate(labels)},
        "real": _jsonable(np.real(chi)),
        "imag": _jsonable(np.imag(chi)),
    }


def run(config: ExperimentConfig) -> ResultBundle:
    device = config.load_device()
    bundle = ResultBundle(
        config={**asdict(config), "device_sha256": config.device_hash()}
    )
    real_prep, real_measure, dec = config.case()
    case = (real_prep, real_measure, dec)
    phi = config.phi_over_pi * np.pi

    if config.experiment == "rb":
        if dec == "none":
            res = experiments.run_rb_experiment(
                device, lengths=config.rb_lengths, n_seeds=config.rb_seeds, seed=config.seed
            )
        else:
            res = experiments.run_rb_experiment(
                device, lengths=config.rb_lengths, n_seeds=config.rb_seeds, seed=config.seed
            )
        rows = []
        for name, curve in res.curves.items():
            for l, m, e in zip(curve.lengths, curve.survival, curve.stderr):
                rows.append([name, int(l), float(m), float(e)])
        bundle.tables["survival"] = (["target", "length", "mean", "stderr"], rows)
        bundle.summaries["fit"] = {
            "transmon_fidelity": res.transmon_fidelity,
            "mode_fidelities": _jsonable(res.mode_fidelities),
            "per_swap_infidelity": res.per_swap_infidelity,
        }

    elif config.experiment == "cphi-tomo":
        res = experiments.run_cphi_tomography(
            device,
            phi,
            config.mode,
            case=case,
            shots=config.shots,
            seed=config.seed,
        )
        bundle.summaries["chi"] = chi_payload(res.estimate.chi, 2)
        bundle.summaries["summary"] = {
            "phi": phi,
            "fidelity": res.estimate.fidelity,
            "raw_fidelity": res.estimate.raw_fidelity,
            "compensation_phases": _jsonable(res.estimate.compensation_phases),
        }

    elif config.experiment == "cphi-repeat":
        res = experiments.cphi_repetition_experiment(
            device, phi, config.mode, case=case, seed=config.seed
        )
        rows = [[int(n), float(f)] for n, f in zip(res.reps, res.fidelities)]
        bundle.tables["repetition"] = (["n_reps", "fidelity"], rows)
        bundle.summaries["fit"] = {
            "gate_fidelity": res.gate_fidelity,
            "amplitude": res.amplitude,
            "offset": res.offset,
            "gate_fidelity_err": res.gate_fidelity_err,
        }

    elif config.experiment == "qft-tomo":
        res = experiments.run_qft_tomography(
            device,
            config.qft_size,
            case,
            shots=config.shots,
            seed=config.seed,
        )
        bundle.summaries["chi"] = chi_payload(res.estimate.chi, config.qft_size)
        bundle.summaries["summary"] = {
            "n": config.qft_size,
            "spam": config.spam,
            "decoherence": config.decoherence,
            "fidelity": res.fidelity,
        }

    elif config.experiment == "qpf":
        res = experiments.run_qpf(
            device,
            config.oracle_period,
            decoherence=dec,
            shots=config.shots,
            seed=config.seed,
        )
        rows = []
        for y, p in enumerate(res.populations):
            if res.classification is not None:
                rows.append(
                    [y, float(p), float(res.classification.posterior_zero[y]),
                     res.classification.labels[y]]
                )
            else:
                rows.append([y, float(p), "", ""])
        bundle.tables["populations"] = (["state", "population", "p_zero", "label"], rows)
        bundle.summaries["summary"] = {
            "oracle_period": config.oracle_period,
            "detected_period": res.period,
            "truth_table": _jsonable(oracle_truth_table(config.oracle_period)),
        }

    elif config.experiment == "calibrate":
        thetas = {}
        for name, p in (("pi", np.pi), ("pi/2", np.pi / 2), ("pi/4", np.pi / 4)):
            thetas[name] = {
                "closed_form": solve_cphi(p, device.g_angular).theta,
                "swept": calibrate_theta(device, config.mode, p),
            }
        waits = np.linspace(0.0, 1.0e-6, 257)
        ramsey = {
            str(m.label): ramsey_phonon_frequency(device, m.label, waits)
            for m in device.modes
        }
        hadamard = experiments.calibrate_hadamard_phases(device, decoherence="none")
        offsets, pops = experiments.cnot_phase_sweep(device, config.mode)
        bundle.tables["cnot_sweep"] = (
            ["offset", "ground_population"],
            [[float(o), float(p)] for o, p in zip(offsets, pops)],
        )
        bundle.summaries["calibration"] = {
            "theta": _jsonable(thetas),
            "ramsey_hz": _jsonable(ramsey),
            "hadamard_phases": _jsonable({str(k): v for k, v in hadamard.items()}),
            "cnot_best_offset": float(offsets[int(np.argmax(pops))]),
        }

    return bundle


def emit(bundle: ResultBundle, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    cfg = out / "config.json"
    cfg.write_text(json.dumps(_jsonable({
        "schema_version": bundle.schema_version, **bundle.config
    }), indent=2, sort_keys=True) + "\n")
    written.append(cfg)

    for name, (header, rows) in bundle.tables.items():
        path = out / f"{name}.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            w.writerows(rows)
        written.append(path)

    for name, payload in bundle.summaries.items():
        path = out / f"{name}.json"
        path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
        written.append(path)
    return written


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phonoq", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a named experiment")
    r.add_argument("experiment", choices=EXPERIMENTS)
    r.add_argument("--device", default=None, help="device JSON (default: bundled)")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--decoherence", choices=DECOHERENCE_MODES, default="full")
    r.add_argument("--spam", choices=SPAM_MODES, default="full")
    r.add_argument("--shots", default="exact", help="integer or 'exact'")
    r.add_argument("--out", required=True)
    r.add_argument("--phi-over-pi", type=float, default=1.0)
    r.add_argument("--mode", type=int, default=1)
    r.add_argument("--oracle-period", type=int, default=2)
    r.add_argument("--qft-size", type=int, default=3)
    r.add_argument("--rb-seeds", type=int, default=30)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    shots = None if args.shots == "exact" else int(args.shots)
    try:
        config = ExperimentConfig(
            experiment=args.experiment,
            device_path=args.device,
            seed=args.seed,
            decoherence=args.decoherence,
            spam=args.spam,
            shots=shots,
            out_dir=args.out,
            phi_over_pi=args.phi_over_pi,
            mode=args.mode,
            oracle_period=args.oracle_period,
            qft_size=args.qft_size,
            rb_seeds=args.rb_seeds,
        )
        bundle = run(config)
        written = emit(bundle, args.out)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
