"""Command-line entry point for the compression experiments.

Subcommands mirror the pipeline stages and compose through the output
directory: ``train-base`` writes the base model checkpoints, ``fit-oib``
reads them and writes compressors and re-expanders, ``evaluate`` reads
everything and writes the report, ``retrain`` builds the shared or
per-size heads, ``hz-test`` compares domain normality, ``macs`` prints
the complexity table, and ``synth-check`` runs the synthetic-Gaussian
oracle suites.  Datasets are regenerated from their seeds, so commands
started in separate processes agree bitwise.

Exit codes: 0 success, 2 configuration or input-file problems, 3
numerical failures.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import pipeline
from .complexity_model import (macs_table, network_macs, pipeline_macs,
                               saving_baseline, saving_percent)
from .config import ExperimentConfig, apply_overrides, load_config
from .datasets import SyntheticGaussianSpec, synth_gaussian
from .errors import ConfigError, DataFormatError, NumericalError, OibError
from .gib_compressor import (cca_compressor, compressor_at_beta,
                             compressor_at_size, solve_gib)
from .info_metrics import (gaussian_entropy, mi_loading_invariance_check,
                           random_projection_optimality_check)
from .pipeline import (RAW, TRANSFORM, DomainData, ExperimentResult,
                       artifact_stem, build_dataset, domain_features,
                       fit_all_domains, train_base_models)
from .reexpander import fit_lmmse, fit_ls, mse_entropy_gap, reexpand
from .serialization import (load_compressor, load_model, load_reexpander,
                            save_model)


def _emit(payload):
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _resolve_config(args):
    config = load_config(args.config) if args.config else ExperimentConfig()
    return apply_overrides(config, seed=args.seed, out=args.out,
                           encoding=args.encoding, subset_n=args.subset)


def _prepare(config, load_models=False):
    train_set, test_set = build_dataset(config)
    plan, features = domain_features(config, train_set, test_set)
    if load_models:
        domains = {}
        for name in (TRANSFORM, RAW):
            stem = os.path.join(config.output_dir, "base_%s" % name)
            if not os.path.exists(stem + ".json"):
                raise ConfigError("missing base checkpoint %s.json; run "
                                  "train-base first" % stem)
            x_tr, x_te = features[name]
            domains[name] = DomainData(name=name, x_train=x_tr, x_test=x_te,
                                       model=load_model(stem), losses=[])
    else:
        domains = train_base_models(config, features, train_set.labels)
    return train_set, test_set, plan, domains


def _shell_result(config, train_set, test_set, plan, domains):
    return ExperimentResult(config=config, plan=plan,
                            train_labels=train_set.labels,
                            test_labels=test_set.labels, domains=domains,
                            compressors={}, reexpanders={})


def _load_artifacts(config, kinds):
    compressors, reexpanders = {}, {}
    for n_z in config.n_z_grid:
        for kind in kinds:
            comp_stem = artifact_stem(config.output_dir, "compressors",
                                      kind, n_z)
            rx_stem = artifact_stem(config.output_dir, "reexpanders", kind,
                                    n_z)
            for stem in (comp_stem, rx_stem):
                if not os.path.exists(stem + ".json"):
                    raise ConfigError("missing artifact %s.json; run "
                                      "fit-oib first" % stem)
            compressors[(kind, n_z)] = load_compressor(comp_stem)
            reexpanders[(kind, n_z)] = load_reexpander(rx_stem)
    return compressors, reexpanders


def cmd_train_base(config):
    train_set, test_set, plan, domains = _prepare(config)
    result = _shell_result(config, train_set, test_set, plan, domains)
    pipeline.write_base_artifacts(result, config.output_dir)
    _emit({"output_dir": config.output_dir,
           "baseline": pipeline.baseline_accuracies(result),
           "final_epoch_loss": {name: domains[name].losses[-1]
                                for name in domains
                                if domains[name].losses}})
    return 0


def cmd_fit_oib(config):
    train_set, test_set, plan, domains = _prepare(config, load_models=True)
    fit_all_domains(config, domains)
    compressors = pipeline.build_compressors(config, domains)
    reexpanders = pipeline.fit_reexpanders(config, domains, compressors)
    result = _shell_result(config, train_set, test_set, plan, domains)
    result.compressors, result.reexpanders = compressors, reexpanders
    pipeline.write_fit_artifacts(result, config.output_dir)
    _emit({"output_dir": config.output_dir,
           "artifacts": len(compressors) + len(reexpanders),
           "noise_lambda": {name: domains[name].targets.noise_lambda
                            for name in domains}})
    return 0


def cmd_evaluate(config):
    train_set, test_set, plan, domains = _prepare(config, load_models=True)
    fit_all_domains(config, domains)
    compressors, reexpanders = _load_artifacts(config,
                                               config.compressor_kinds)
    result = _shell_result(config, train_set, test_set, plan, domains)
    result.compressors, result.reexpanders = compressors, reexpanders
    result.records, result.reconstructions_train, \
        result.reconstructions_test = pipeline.evaluate_grid(
            config, domains, compressors, reexpanders, test_set.labels)
    pipeline.write_evaluation(result, config.output_dir)
    _emit({"report": os.path.join(config.output_dir, "report.json"),
           "csv": os.path.join(config.output_dir, "records.csv"),
           "records": len(result.records)})
    return 0


def cmd_retrain(config, mode):
    train_set, test_set, plan, domains = _prepare(config, load_models=True)
    fit_all_domains(config, domains)
    compressors, reexpanders = _load_artifacts(config, ["oib"])
    oib_config = dataclasses.replace(config, compressor_kinds=["oib"])
    result = _shell_result(oib_config, train_set, test_set, plan, domains)
    result.compressors, result.reexpanders = compressors, reexpanders

    if mode == "per_rho_on_z":
        heads, records = pipeline.retrain_bank(oib_config, result)
        heads_dir = os.path.join(config.output_dir, "heads")
        os.makedirs(heads_dir, exist_ok=True)
        for n_z, head in heads.items():
            save_model(head, os.path.join(heads_dir, "bank_%03d" % n_z),
                       seed=config.seeds.head_per_rho_base + n_z)
        payload = {"mode": mode, "records": records}
    else:
        result.records, result.reconstructions_train, \
            result.reconstructions_test = pipeline.evaluate_grid(
                oib_config, domains, compressors, reexpanders,
                test_set.labels)
        result.average_head, result.per_rho_heads, \
            result.retrain_records = pipeline.retrain_heads(oib_config,
                                                            result)
        if mode == "average":
            records = [{"n_z": r.n_z,
                        "accuracy_non_retrained": r.accuracy_non_retrained,
                        "accuracy_average": r.accuracy_average}
                       for r in result.retrain_records]
        else:
            records = [dataclasses.asdict(r) for r in result.retrain_records]
        pipeline.write_retrain_artifacts(result, config.output_dir)
        payload = {"mode": mode, "records": records}
    report_path = os.path.join(config.output_dir, "retrain_report.json")
    with open(report_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _emit(payload)
    return 0


def cmd_hz_test(config):
    train_set, test_set, plan, domains = _prepare(config)
    records = pipeline.hz_compare(config, domains[RAW].x_test,
                                  domains[TRANSFORM].x_test)
    result = _shell_result(config, train_set, test_set, plan, domains)
    result.hz_records = records
    pipeline.write_hz_report(result, config.output_dir)
    _emit({"projections": [dataclasses.asdict(r) for r in records],
           "transform_wins": sum(r.p_transform > r.p_raw for r in records),
           "total": len(records)})
    return 0


def cmd_macs(config):
    sizes = config.model_layer_sizes
    n_x = sizes[0]
    full = network_macs(sizes)
    baseline = saving_baseline(sizes)
    rows = []
    for n_z in config.n_z_grid:
        bd = pipeline_macs(n_x, n_z, sizes[1:])
        rows.append({"n_z": n_z,
                     "macs_compression": bd.subtotal("compression"),
                     "macs_classification": bd.subtotal("classification"),
                     "saving_percent": round(saving_percent(bd, baseline),
                                             2)})
    print(macs_table(n_x, config.n_z_grid, sizes[1:], sizes))
    _emit({"network_total": full.total, "saving_baseline": baseline,
           "rows": rows})
    return 0


def _synth_checks():
    spec = SyntheticGaussianSpec(n_x=6, n_y=4, n_samples=100000, seed=11)
    x, y, cov, _ = synth_gaussian(spec)
    sol = solve_gib(cov)
    checks = {}

    worst = 0.0
    for n_z in range(1, spec.n_x + 1):
        comp = compressor_at_size(sol, n_z)
        v = sol.eigen.left_eigenvectors[:n_z]
        alpha = np.linalg.norm(comp.matrix_a, axis=1) / \
            np.linalg.norm(v, axis=1)
        lam = sol.eigen.eigenvalues[:n_z]
        r = sol.eigen.r_values[:n_z]
        resid = alpha ** 2 * lam * r + 1.0 - comp.beta * (1.0 - lam)
        scaled = np.abs(resid) / np.maximum(1.0, comp.beta * (1.0 - lam))
        worst = max(worst, float(np.max(scaled)))
    checks["loading_structure_residual"] = {"value": worst,
                                            "ok": worst < 1e-8}

    below = compressor_at_beta(sol, 0.99 * sol.beta_critical[0])
    checks["all_zero_below_first_critical"] = {"value": below.n_z,
                                               "ok": below.n_z == 0}

    margin = random_projection_optimality_check(cov, n_z=2, trials=50,
                                                seed=5).min_margin
    checks["projection_optimality_margin"] = {"value": margin,
                                              "ok": margin >= -1e-9}

    spread = mi_loading_invariance_check(sol, cov, n_z=3,
                                         trials=20).max_relative_spread
    checks["loading_invariance_spread"] = {"value": spread,
                                           "ok": spread < 1e-8}

    comp = cca_compressor(sol, 3)
    z = x.values @ comp.matrix_a.T
    rng = np.random.default_rng(21)
    l0 = rng.standard_normal((4, spec.n_x))
    targets = x.values @ l0.T + 0.3 * rng.standard_normal((spec.n_samples,
                                                           4))
    c_zz = comp.matrix_a @ cov.sigma_x @ comp.matrix_a.T
    c_yz = l0 @ cov.sigma_x @ comp.matrix_a.T
    rx_pop = fit_lmmse(c_yz, c_zz)
    rx_ls = fit_ls(z, targets)
    rel = float(np.linalg.norm(rx_ls.theta - rx_pop.theta)
                / np.linalg.norm(rx_pop.theta))
    checks["ls_vs_population_relative"] = {"value": rel, "ok": rel < 1e-2}

    n, n_y, sigma = 20000, 4, 0.7
    z2 = rng.standard_normal((n, 2))
    m = rng.standard_normal((n_y, 2))
    y2 = z2 @ m.T + sigma * rng.standard_normal((n, n_y))
    rx = fit_lmmse(m, np.eye(2))
    err = y2 - reexpand(rx, z2)
    mse = float(np.mean(np.sum(err ** 2, axis=1)))
    err_cov = np.cov(err, rowvar=False, bias=True)
    gap = mse_entropy_gap(mse, gaussian_entropy(err_cov), n_y)
    checks["mse_entropy_gap"] = {"value": gap, "ok": gap >= -1e-9}

    return checks


def cmd_synth_check(config):
    checks = _synth_checks()
    _emit({"checks": checks, "ok": all(c["ok"] for c in checks.values())})
    if not all(c["ok"] for c in checks.values()):
        raise NumericalError("synthetic oracle checks failed: %s"
                             % [k for k, c in checks.items()
                                if not c["ok"]])
    return 0


def make_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a JSON experiment config")
    common.add_argument("--seed", type=int,
                        help="offset every stage seed for a replication")
    common.add_argument("--out", help="output directory override")
    common.add_argument("--encoding",
                        choices=["deterministic", "stochastic"],
                        help="encoder mode for accuracy evaluation")
    common.add_argument("--subset", type=int,
                        help="reduce the training set to N samples "
                             "(test set scales to N/5)")
    parser = argparse.ArgumentParser(
        prog="oib",
        description="feature-compression experiments: closed-form "
                    "information-bottleneck encoders inside a trained "
                    "classifier")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train-base", parents=[common],
                   help="train the base networks in both domains")
    sub.add_parser("fit-oib", parents=[common],
                   help="fit compressors and re-expanders for the grid")
    sub.add_parser("evaluate", parents=[common],
                   help="accuracy/entropy/MI/MACs report over the grid")
    retrain = sub.add_parser("retrain", parents=[common],
                             help="retrain classifier heads on "
                                  "reconstructions")
    retrain.add_argument("--mode", default="per_rho_head",
                         choices=["average", "per_rho_head",
                                  "per_rho_on_z"])
    sub.add_parser("hz-test", parents=[common],
                   help="normality comparison of raw vs transform domain")
    sub.add_parser("macs", parents=[common],
                   help="complexity table for the configured model")
    sub.add_parser("synth-check", parents=[common],
                   help="run the synthetic-Gaussian oracle suites")
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
        if args.command == "train-base":
            return cmd_train_base(config)
        if args.command == "fit-oib":
            return cmd_fit_oib(config)
        if args.command == "evaluate":
            return cmd_evaluate(config)
        if args.command == "retrain":
            return cmd_retrain(config, args.mode)
        if args.command == "hz-test":
            return cmd_hz_test(config)
        if args.command == "macs":
            return cmd_macs(config)
        if args.command == "synth-check":
            return cmd_synth_check(config)
        raise ConfigError("unknown command %r" % args.command)
    except (ConfigError, DataFormatError, FileNotFoundError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except NumericalError as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 3
    except OibError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
