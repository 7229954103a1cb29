"""End-to-end experiment pipeline.

Stages, in dependency order:

1. dataset: load IDX files or render the procedural digit corpus.
2. features: orthonormal real-packed 2D-DFT alongside the raw pixels.
3. base models: one network per domain (the transform domain carries the
   compression experiments; the raw domain exists so the PCA baseline and
   normality comparison are measured on its native inputs).
4. fit: regression targets from the first layer, covariance pair through
   the analytic route (Sigma_xy = Sigma_x W0', Sigma_y = W0 Sigma_x W0' +
   lambda^2 I), the generalized eigensystem, compressors for every
   (kind, n_z), and a least-squares re-expander per compressor.
5. evaluate: per (kind, n_z), accuracy through the frozen head, entropy of
   power-normalized stochastic encodings, Gaussian MI, reconstruction MSE,
   and the MACs split.  Fan-out across worker threads, merged in grid
   order.
6. retrain: a single average head trained on the mixture of all grid
   reconstructions, then one fine-tuned head per n_z with early stopping
   on a validation split (keeping the average head when fine-tuning does
   not help).
7. normality: Henze-Zirkler p-values of random coordinate projections,
   raw versus transform domain.

Every stage draws randomness only from its named seed in the config, so
stages rerun in isolation reproduce their outputs bitwise.
"""

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import gaussianizer
from .complexity_model import (CLASSIFICATION, COMPRESSION, pipeline_macs)
from .config import config_to_dict
from .datasets import load_idx, subset, synthetic_digits
from .errors import ConfigError
from .gib_compressor import (Compressor, cca_compressor, compressor_at_size,
                             pca_compressor, solve_gib)
from .inference_net import (MlpModel, TrainConfig, accuracy, finetune_head,
                            forward_from_layer, head_logits, init_mlp,
                            make_regression_targets, train,
                            train_head_on_z, train_multi_rho_head)
from .info_metrics import encoding_mi, gaussian_entropy, power_normalize
from .reexpander import fit_ls, reexpand
from .serialization import (config_hash, save_compressor, save_model,
                            save_reexpander, validate_report)
from .tensor_stats import CovariancePair, DataMatrix, center, \
    conditional_covariance, sample_covariance

TRANSFORM = "transform"
RAW = "raw"


@dataclass
class DomainData:
    """Everything the evaluation needs about one input domain."""

    name: str
    x_train: np.ndarray
    x_test: np.ndarray
    model: MlpModel
    losses: list
    targets: object = None
    cov: CovariancePair = None
    pre_test: np.ndarray = None
    gib: object = None


@dataclass
class EvalRecord:
    kind: str
    n_z: int
    rho: float
    accuracy: float
    entropy_nats: float
    mi_nats: float
    mse: float
    macs_comp: int
    macs_class: int


@dataclass
class RetrainRecord:
    n_z: int
    accuracy_non_retrained: float
    accuracy_average: float
    accuracy_per_rho: float


@dataclass
class HzRecord:
    index: int
    p_raw: float
    p_transform: float


@dataclass
class ExperimentResult:
    config: object
    plan: object
    train_labels: np.ndarray
    test_labels: np.ndarray
    domains: dict
    compressors: dict
    reexpanders: dict
    records: list = None
    reconstructions_train: dict = None
    reconstructions_test: dict = None
    average_head: MlpModel = None
    per_rho_heads: dict = None
    retrain_records: list = None
    hz_records: list = None

    @property
    def transform(self):
        return self.domains[TRANSFORM]

    @property
    def raw(self):
        return self.domains[RAW]

    def record(self, kind, n_z):
        for rec in self.records:
            if rec.kind == kind and rec.n_z == n_z:
                return rec
        raise KeyError((kind, n_z))


def build_dataset(config):
    """Training and test image sets per the dataset config."""
    ds = config.dataset
    if ds.from_files:
        full_train = load_idx(ds.train_images, ds.train_labels)
        full_test = load_idx(ds.test_images, ds.test_labels)
        train_set = subset(full_train, min(ds.n_train, full_train.n_samples),
                           config.seeds.data_train)
        test_set = subset(full_test, min(ds.n_test, full_test.n_samples),
                          config.seeds.data_test)
    else:
        train_set = synthetic_digits(ds.n_train, config.seeds.data_train,
                                     size=ds.image_size,
                                     noise=ds.image_noise)
        test_set = synthetic_digits(ds.n_test, config.seeds.data_test,
                                    size=ds.image_size, noise=ds.image_noise)
    return train_set, test_set


def domain_features(config, train_set, test_set):
    """The transform-domain and raw-domain feature matrices."""
    plan = gaussianizer.RealDft2dPlan(train_set.height, train_set.width)
    x_raw_tr = train_set.images.values
    x_raw_te = test_set.images.values
    features = {
        TRANSFORM: (gaussianizer.forward(plan, x_raw_tr),
                    gaussianizer.forward(plan, x_raw_te)),
        RAW: (x_raw_tr, x_raw_te),
    }
    return plan, features


def base_train_config(config):
    return TrainConfig(epochs=config.train.epochs,
                       learning_rate=config.train.learning_rate,
                       batch_size=config.train.batch_size,
                       seed=config.seeds.train_shuffle)


def train_base_models(config, features, train_labels):
    """One freshly initialized model per domain, trained identically."""
    domains = {}
    for name, (x_tr, x_te) in features.items():
        model = init_mlp(config.model_layer_sizes, config.seeds.model_init)
        model, losses = train(model, x_tr, train_labels,
                              base_train_config(config))
        domains[name] = DomainData(name=name, x_train=x_tr, x_test=x_te,
                                   model=model, losses=losses)
    return domains


def fit_domain(config, domain, targets_seed, with_gib):
    """Targets, covariance pair, and (optionally) the eigensystem."""
    domain.targets = make_regression_targets(domain.model, domain.x_train,
                                             noise_lambda=config.noise_lambda,
                                             seed=targets_seed)
    centered, _ = center(DataMatrix(domain.x_train))
    sigma_x = sample_covariance(centered, shrinkage=config.shrinkage)
    w0 = domain.model.layers[0][0].astype(np.float64)
    b0 = domain.model.layers[0][1].astype(np.float64)
    lam = domain.targets.noise_lambda
    sigma_xy = sigma_x @ w0.T
    sigma_y = w0 @ sigma_x @ w0.T + lam ** 2 * np.eye(w0.shape[0])
    sigma_x_given_y = conditional_covariance(sigma_x, sigma_xy, sigma_y)
    domain.cov = CovariancePair(sigma_x=sigma_x,
                                sigma_x_given_y=sigma_x_given_y,
                                shrinkage=config.shrinkage)
    domain.pre_test = domain.x_test @ w0.T + b0
    if with_gib:
        domain.gib = solve_gib(domain.cov)
    return domain


def fit_all_domains(config, domains):
    fit_domain(config, domains[TRANSFORM], config.seeds.targets_transform,
               with_gib=True)
    fit_domain(config, domains[RAW], config.seeds.targets_raw,
               with_gib=False)
    return domains


def domain_for_kind(kind):
    """PCA runs on raw pixels; the supervised kinds on the transform."""
    return RAW if kind == "pca" else TRANSFORM


def build_compressors(config, domains):
    compressors = {}
    for n_z in config.n_z_grid:
        for kind in config.compressor_kinds:
            if kind == "oib":
                comp = compressor_at_size(domains[TRANSFORM].gib, n_z)
            elif kind == "cca":
                comp = cca_compressor(domains[TRANSFORM].gib, n_z)
            else:
                comp = pca_compressor(domains[RAW].cov.sigma_x, n_z)
            compressors[(kind, n_z)] = comp
    return compressors


def fit_reexpanders(config, domains, compressors):
    reexpanders = {}
    for (kind, n_z), comp in compressors.items():
        domain = domains[domain_for_kind(kind)]
        z_train = domain.x_train @ comp.matrix_a.T
        reexpanders[(kind, n_z)] = fit_ls(z_train,
                                          domain.targets.y_tilde,
                                          ridge=config.ridge)
    return reexpanders


def _entropy_of_encodings(z_train, n_z, seed):
    """Entropy of power-normalized stochastic encodings z + xi."""
    rng = np.random.default_rng(seed)
    z_stochastic = z_train + rng.standard_normal(z_train.shape)
    normalized = power_normalize(DataMatrix(z_stochastic))
    centered, _ = center(normalized)
    return gaussian_entropy(sample_covariance(centered))


def _eval_one(config, domains, compressors, reexpanders, test_labels,
              kind, n_z):
    domain = domains[domain_for_kind(kind)]
    comp = compressors[(kind, n_z)]
    rx = reexpanders[(kind, n_z)]

    z_test = domain.x_test @ comp.matrix_a.T
    if config.encoding == "stochastic":
        rng = np.random.default_rng([config.seeds.entropy_base, n_z, 1])
        z_test = z_test + rng.standard_normal(z_test.shape)
    y_rec_test = reexpand(rx, z_test)
    logits = forward_from_layer(domain.model, 1, y_rec_test)
    acc = float(np.mean(logits.argmax(axis=1) == test_labels))

    z_train = domain.x_train @ comp.matrix_a.T
    entropy = _entropy_of_encodings(z_train, n_z,
                                    config.seeds.entropy_base + n_z)
    mi = encoding_mi(comp.matrix_a, domain.cov)
    mse = float(np.mean((y_rec_test - domain.pre_test) ** 2))
    macs = pipeline_macs(comp.n_x, n_z, config.model_layer_sizes[1:])

    record = EvalRecord(kind=kind, n_z=n_z, rho=comp.rho, accuracy=acc,
                        entropy_nats=float(entropy), mi_nats=float(mi),
                        mse=mse,
                        macs_comp=macs.subtotal(COMPRESSION),
                        macs_class=macs.subtotal(CLASSIFICATION))
    extras = None
    if kind == "oib":
        extras = (reexpand(rx, z_train), y_rec_test)
    return record, extras


def evaluate_grid(config, domains, compressors, reexpanders, test_labels):
    """All (kind, n_z) records, plus the OIB reconstructions for retraining.

    Work items fan out across threads; results are merged back in grid
    order, n_z outer and kind inner, so reports are deterministic.
    """
    pairs = [(kind, n_z) for n_z in config.n_z_grid
             for kind in config.compressor_kinds]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        futures = {pair: pool.submit(_eval_one, config, domains,
                                     compressors, reexpanders, test_labels,
                                     *pair)
                   for pair in pairs}
        outcomes = {pair: fut.result() for pair, fut in futures.items()}
    records = [outcomes[pair][0] for pair in pairs]
    rec_train = {n_z: outcomes[("oib", n_z)][1][0]
                 for n_z in config.n_z_grid
                 if ("oib", n_z) in outcomes and outcomes[("oib", n_z)][1]}
    rec_test = {n_z: outcomes[("oib", n_z)][1][1]
                for n_z in config.n_z_grid
                if ("oib", n_z) in outcomes and outcomes[("oib", n_z)][1]}
    return records, rec_train, rec_test


def _head_accuracy(head, reconstructed, labels):
    logits = head_logits(head, reconstructed)
    return float(np.mean(logits.argmax(axis=1) == labels))


def retrain_heads(config, result):
    """Average head over all sizes, then per-size fine-tuning.

    The average head starts from the base model's head and trains on the
    mixture of every grid size's reconstructions with a step-down learning
    rate.  Each per-size head then fine-tunes from the average on its own
    reconstructions, with a validation split choosing the best epoch; when
    no epoch improves on the starting point, the average head is kept
    unchanged.
    """
    rt = config.retrain
    labels_tr = result.train_labels
    labels_te = result.test_labels
    model = result.transform.model

    avg_cfg = TrainConfig(epochs=rt.average_epochs,
                          learning_rate=rt.average_learning_rate,
                          batch_size=config.train.batch_size,
                          seed=config.seeds.head_average,
                          lr_decay_at=rt.average_decay_at,
                          lr_decay_factor=rt.average_decay_factor)
    average_head = train_multi_rho_head(model, result.reconstructions_train,
                                        labels_tr, avg_cfg)

    heads = {}
    retrain_records = []
    for n_z in config.n_z_grid:
        ft_cfg = TrainConfig(epochs=rt.finetune_epochs,
                             learning_rate=rt.finetune_learning_rate,
                             batch_size=config.train.batch_size,
                             seed=config.seeds.head_per_rho_base + n_z,
                             val_fraction=rt.finetune_val_fraction,
                             min_delta=rt.finetune_min_delta)
        head = finetune_head(average_head,
                             result.reconstructions_train[n_z], labels_tr,
                             ft_cfg)
        heads[n_z] = head
        rec_te = result.reconstructions_test[n_z]
        retrain_records.append(RetrainRecord(
            n_z=n_z,
            accuracy_non_retrained=result.record("oib", n_z).accuracy,
            accuracy_average=_head_accuracy(average_head, rec_te, labels_te),
            accuracy_per_rho=_head_accuracy(head, rec_te, labels_te)))
    return average_head, heads, retrain_records


def retrain_bank(config, result):
    """One fresh classifier per n_z consuming compressed features directly.

    Unlike re-expansion plus the shared head, the bank trains a separate
    network whose input width is n_z, so deployment needs one model per
    compression size.
    """
    heads = {}
    records = []
    for n_z in config.n_z_grid:
        comp = result.compressors[("oib", n_z)]
        z_train = result.transform.x_train @ comp.matrix_a.T
        z_test = result.transform.x_test @ comp.matrix_a.T
        sizes = [n_z] + list(config.model_layer_sizes[2:])
        cfg = TrainConfig(epochs=config.train.epochs,
                          learning_rate=config.train.learning_rate,
                          batch_size=config.train.batch_size,
                          seed=config.seeds.head_per_rho_base + n_z)
        head = train_head_on_z(z_train, result.train_labels, sizes, cfg)
        heads[n_z] = head
        records.append({"n_z": n_z,
                        "accuracy_bank": accuracy(head, z_test,
                                                  result.test_labels)})
    return heads, records


def hz_compare(config, x_raw, x_tf, n_projections=20, projection_dim=10):
    """Henze-Zirkler p-values on shared coordinate projections.

    Each projection draws the same coordinate subset for both domains from
    the seeded stream and tests the given rows, so the comparison isolates
    the effect of the transform.
    """
    rng = np.random.default_rng(config.seeds.hz_projections)
    records = []
    for i in range(n_projections):
        idx = rng.choice(x_raw.shape[1], size=projection_dim, replace=False)
        p_raw = gaussianizer.henze_zirkler(x_raw[:, idx]).p_value
        p_tf = gaussianizer.henze_zirkler(x_tf[:, idx]).p_value
        records.append(HzRecord(index=i, p_raw=p_raw, p_transform=p_tf))
    return records


def run_experiment(config, out_dir=None, with_retrain=True, with_hz=True):
    """Run every stage in order; optionally persist artifacts under out_dir."""
    train_set, test_set = build_dataset(config)
    plan, features = domain_features(config, train_set, test_set)
    domains = train_base_models(config, features, train_set.labels)
    fit_all_domains(config, domains)
    compressors = build_compressors(config, domains)
    reexpanders = fit_reexpanders(config, domains, compressors)

    result = ExperimentResult(config=config, plan=plan,
                              train_labels=train_set.labels,
                              test_labels=test_set.labels,
                              domains=domains, compressors=compressors,
                              reexpanders=reexpanders)
    result.records, result.reconstructions_train, \
        result.reconstructions_test = evaluate_grid(
            config, domains, compressors, reexpanders, test_set.labels)

    if with_retrain and "oib" in config.compressor_kinds:
        result.average_head, result.per_rho_heads, \
            result.retrain_records = retrain_heads(config, result)
    if with_hz:
        result.hz_records = hz_compare(config, result.raw.x_test,
                                       result.transform.x_test)

    if out_dir is not None:
        write_artifacts(result, out_dir)
    return result


def baseline_accuracies(result):
    return {
        "accuracy_transform_domain": accuracy(result.transform.model,
                                              result.transform.x_test,
                                              result.test_labels),
        "accuracy_raw_domain": accuracy(result.raw.model,
                                        result.raw.x_test,
                                        result.test_labels),
    }


def report_dict(result):
    """The evaluation report, validated against the packaged schema."""
    config = result.config
    report = {
        "metadata": {
            "config_hash": config_hash(config_to_dict(config)),
            "seeds": asdict(config.seeds),
            "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "encoding": config.encoding,
            "entropy_encoding": "stochastic",
        },
        "baseline": baseline_accuracies(result),
        "records": [{
            "kind": rec.kind,
            "n_z": rec.n_z,
            "rho": rec.rho,
            "accuracy": rec.accuracy,
            "entropy_nats_normalized": rec.entropy_nats,
            "mi_nats": rec.mi_nats,
            "reconstruction_mse": rec.mse,
            "macs_compression": rec.macs_comp,
            "macs_classification": rec.macs_class,
        } for rec in result.records],
    }
    validate_report(report)
    return report


CSV_COLUMNS = ["kind", "n_z", "rho", "accuracy", "entropy_nats", "mi_nats",
               "mse", "macs_comp", "macs_class"]


def write_records_csv(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow([rec.kind, rec.n_z, rec.rho, rec.accuracy,
                             rec.entropy_nats, rec.mi_nats, rec.mse,
                             rec.macs_comp, rec.macs_class])


def _write_json(payload, path):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_base_artifacts(result, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for name in (TRANSFORM, RAW):
        domain = result.domains[name]
        save_model(domain.model, os.path.join(out_dir, "base_%s" % name),
                   train_config=base_train_config(result.config),
                   seed=result.config.seeds.model_init)
    trace = {name: result.domains[name].losses for name in (TRANSFORM, RAW)}
    trace["baseline"] = baseline_accuracies(result)
    _write_json(trace, os.path.join(out_dir, "training_trace.json"))


def artifact_stem(out_dir, group, kind, n_z):
    return os.path.join(out_dir, group, "%s_%03d" % (kind, n_z))


def write_fit_artifacts(result, out_dir):
    for group in ("compressors", "reexpanders"):
        os.makedirs(os.path.join(out_dir, group), exist_ok=True)
    for (kind, n_z), comp in result.compressors.items():
        save_compressor(comp, artifact_stem(out_dir, "compressors", kind,
                                            n_z))
    for (kind, n_z), rx in result.reexpanders.items():
        save_reexpander(rx, artifact_stem(out_dir, "reexpanders", kind,
                                          n_z))


def write_evaluation(result, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    _write_json(report_dict(result), os.path.join(out_dir, "report.json"))
    write_records_csv(result.records, os.path.join(out_dir, "records.csv"))


def write_retrain_artifacts(result, out_dir):
    heads_dir = os.path.join(out_dir, "heads")
    os.makedirs(heads_dir, exist_ok=True)
    save_model(result.average_head, os.path.join(heads_dir, "average"),
               seed=result.config.seeds.head_average)
    for n_z, head in result.per_rho_heads.items():
        save_model(head, os.path.join(heads_dir, "per_rho_%03d" % n_z),
                   seed=result.config.seeds.head_per_rho_base + n_z)
    _write_json({"records": [asdict(r) for r in result.retrain_records]},
                os.path.join(out_dir, "retrain_report.json"))


def write_hz_report(result, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    records = [asdict(r) for r in result.hz_records]
    wins = sum(r["p_transform"] > r["p_raw"] for r in records)
    _write_json({"projections": records,
                 "transform_wins": wins,
                 "total": len(records)},
                os.path.join(out_dir, "hz_report.json"))


def write_artifacts(result, out_dir):
    write_base_artifacts(result, out_dir)
    write_fit_artifacts(result, out_dir)
    if result.records is not None:
        write_evaluation(result, out_dir)
    if result.retrain_records is not None:
        write_retrain_artifacts(result, out_dir)
    if result.hz_records is not None:
        write_hz_report(result, out_dir)
