#!/usr/bin/env python3
"""
Master script to run the complete tomography pipeline:
SET (power meter), SET (spectrum analyzer) and QST simulations, their
reconstructions and metrics, then the spectral model and phase comparison.

Usage:
    python run_analysis.py
    python run_analysis.py --seed 7 --bootstrap 50
"""

import os
import sys
import argparse
import subprocess

PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
PIPELINE = os.path.join(PROJECT_ROOT, "tools", "run_pipeline.py")

# relative phases: SET measurement (OSA / PM) and QST
THETA_SET = 0.0247
THETA_QST = 0.0138


def run_step(args, description):
    """Run one pipeline command and report failure."""
    print(f"\n{'=' * 60}")
    print(f"STEP: {description}")
    print(f"{'=' * 60}\n")

    try:
        subprocess.run([sys.executable, PIPELINE, *args], check=True)
        return True
    except subprocess.CalledProcessError as e:
        print(f"\n❌ Error running: {' '.join(args)}")
        print(f"Exit code: {e.returncode}")
        return False


def build_steps(out, seed, n_boot):
    def p(name):
        return os.path.join(out, name)

    steps = []
    for instrument, tag in (("power_meter", "set_pm"), ("spectrum_analyzer", "set_osa")):
        steps += [
            (["simulate-set", "--state", f"bell:{THETA_SET}", "--instrument", instrument,
              "--seed", str(seed), "--out", p(f"{tag}_records.csv")],
             f"Simulating SET ({instrument.replace('_', ' ')})"),
            (["reconstruct", "--in", p(f"{tag}_records.csv"), "--seed", str(seed),
              "--bootstrap", str(n_boot), "--target", f"bell:{THETA_SET}", "--out", p(f"{tag}_rho.json")],
             f"Reconstructing SET ({instrument.replace('_', ' ')})"),
            (["metrics", "--rho", p(f"{tag}_rho.json"), "--target", f"bell:{THETA_SET}",
              "--bootstrap", p(f"{tag}_rho.bootstrap.csv"), "--out", p(f"{tag}_metrics.csv")],
             f"SET metrics ({instrument.replace('_', ' ')})"),
        ]
    steps += [
        (["simulate-qst", "--state", f"bell:{THETA_QST}", "--seed", str(seed), "--out", p("qst_records.csv")],
         "Simulating QST coincidences"),
        (["reconstruct", "--in", p("qst_records.csv"), "--seed", str(seed), "--bootstrap", str(n_boot),
          "--target", f"bell:{THETA_QST}", "--out", p("qst_rho.json")],
         "Reconstructing QST"),
        (["metrics", "--rho", p("qst_rho.json"), "--target", f"bell:{THETA_QST}",
          "--bootstrap", p("qst_rho.bootstrap.csv"), "--out", p("qst_metrics.csv")],
         "QST metrics"),
        (["metrics", "--rho", p("set_pm_rho.json"), "--target", p("qst_rho.json"), "--out", p("set_vs_qst.csv")],
         "SET vs QST fidelity"),
        (["jsi", "--out", p("jsi.csv")], "Joint spectral intensity"),
        (["spectra", "--resolution-nm", "0.5", "--out", p("spectra.csv")], "SPDC and DFG idler spectra"),
        (["phase-model", "--seed-scan-nm", "808,809,810,811,812", "--out", p("phase_model.csv")],
         "Spectrally averaged phase model and seed scan"),
    ]
    return steps


def main():
    """Run the complete pipeline"""
    parser = argparse.ArgumentParser(description="Run the full tomography pipeline")
    parser.add_argument("--out", default=os.getenv("TOMO_OUTPUT_DIR") or os.path.join(PROJECT_ROOT, ".tmp"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--bootstrap", type=int, default=100, help="bootstrap resamples per reconstruction")
    args = parser.parse_args()

    print("\n" + "=" * 60)
    print("ENTANGLED-PAIR TOMOGRAPHY PIPELINE")
    print("=" * 60)

    for step_args, description in build_steps(args.out, args.seed, args.bootstrap):
        if not run_step(step_args, description):
            print(f"\n❌ Pipeline failed at: {description}")
            print("Please fix the error and try again.")
            sys.exit(1)

    print("\n" + "=" * 60)
    print("✓ PIPELINE COMPLETED SUCCESSFULLY!")
    print("=" * 60)
    print(f"\nOutputs in {args.out}:")
    print("  📄 set_pm_metrics.csv / set_osa_metrics.csv / qst_metrics.csv - fidelity, concurrence, purity, θ")
    print("  📄 set_vs_qst.csv - SET reconstruction against the QST one")
    print("  📄 spectra.csv / jsi.csv - SPDC and DFG spectra, joint spectral intensity")
    print("  📄 phase_model.csv - QST vs SET phase and spectrally averaged fidelities")
    print("  📄 phase_model.seed_scan.csv - DFG peak, width and phase per seed wavelength")


if __name__ == "__main__":
    main()
