"""Command-line experiment pipeline.

Subcommands: gen, sample-negatives, train, predict, calibrate, rerank,
sweep-b, select-b, nota, grid, eval, and pipeline (the default end-to-end
run). Every subcommand reads a config file (``--config``) plus
``--set section.key=value`` overrides; relative corpus paths resolve
against the config file's directory. Outputs land in the config's
``run.output_dir`` and carry the producing config hash in a header line.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import calibration as cal
from . import nota as nota_mod
from .config import ExperimentConfig, config_from_pairs, config_hash, derive_seed, load_config, save_config
from .data import RankedList, load_corpus, save_corpus
from .evaluation import ExperimentGrid, paired_t_test, recall_at_k, run_experiment_grid, save_grid_csv
from .negatives import pool_from_corpus
from .ranker import corpus_feature_table, load_params, save_params, train
from .risk import rerank, save_sweep_csv, save_sweep_plot_spec, select_b, sweep_report
from .stochastic import load_run_file, predict_deterministic, predict_dropout, predict_ensemble, save_run_file
from .synth import generate_synthetic_corpus
from .text import corpus_stats

logger = logging.getLogger(__name__)


def _load_cfg(args) -> tuple[ExperimentConfig, str]:
    """Config plus the directory paths resolve against."""
    if args.config:
        cfg = load_config(args.config)
        base_dir = os.path.dirname(os.path.abspath(args.config))
    else:
        cfg = ExperimentConfig()
        base_dir = os.getcwd()
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ValueError(f"--set expects section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if overrides:
        cfg = config_from_pairs(overrides, base=cfg)
    return cfg, base_dir


def _resolve(path: str, base_dir: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def _out_dir(cfg: ExperimentConfig, base_dir: str) -> str:
    out = _resolve(cfg.run_output_dir, base_dir)
    os.makedirs(out, exist_ok=True)
    return out


def _train_corpus(cfg, base_dir):
    return load_corpus(_resolve(cfg.corpus_train_path, base_dir))


def _test_corpus(cfg, base_dir):
    return load_corpus(_resolve(cfg.corpus_test_path, base_dir))


def cmd_gen(args) -> int:
    cfg, base_dir = _load_cfg(args)
    out = _out_dir(cfg, base_dir)
    for split, rel_path in (("train", cfg.corpus_train_path), ("test", cfg.corpus_test_path)):
        corpus = generate_synthetic_corpus(cfg.synth_spec(split))
        path = _resolve(rel_path, base_dir)
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        save_corpus(corpus, path)
        print(f"wrote {len(corpus)} instances to {path}")
    save_config(cfg, os.path.join(out, "resolved_config.cfg"))
    return 0


def cmd_sample_negatives(args) -> int:
    cfg, base_dir = _load_cfg(args)
    corpus = load_corpus(_resolve(args.corpus, base_dir))
    pool = pool_from_corpus(corpus)
    from .evaluation import build_ns_lists

    rebuilt = build_ns_lists(
        corpus, pool, args.strategy, cfg.corpus_k,
        seed=derive_seed(cfg.run_master_seed, "negatives", 0),
    )
    save_corpus(rebuilt, _resolve(args.out, base_dir))
    print(f"wrote {len(rebuilt)} instances with {args.strategy} negatives to {args.out}")
    return 0


def _scorer_path(cfg, base_dir) -> str:
    return os.path.join(_out_dir(cfg, base_dir), "scorer.txt")


def cmd_train(args) -> int:
    cfg, base_dir = _load_cfg(args)
    corpus = _train_corpus(cfg, base_dir)
    stats = corpus_stats(corpus)
    losses: list[float] = []
    params = train(
        corpus, cfg.train_config(), derive_seed(cfg.run_master_seed, "train", 0),
        stats, loss_log=losses,
    )
    path = _scorer_path(cfg, base_dir)
    save_params(params, path)
    print(f"trained scorer ({len(losses)} epochs, final loss {losses[-1]:.6f}) -> {path}")
    return 0


def _predict_dists(cfg, base_dir, mode: str):
    train_set = _train_corpus(cfg, base_dir)
    test_set = _test_corpus(cfg, base_dir)
    stats = corpus_stats(train_set)
    test_feats = corpus_feature_table(test_set, stats)
    if mode == "ensemble":
        spec = cfg.ensemble_spec()
        feats = corpus_feature_table(train_set, stats)
        members = [
            train(train_set, spec.train_config, seed, stats, feature_table=feats)
            for seed in spec.member_seeds
        ]
        dists = [
            predict_ensemble(members, inst, stats, features=test_feats[inst.id])
            for inst in test_set
        ]
    else:
        path = _scorer_path(cfg, base_dir)
        if not os.path.exists(path):
            raise FileNotFoundError(f"scorer parameters not found at {path}; run `train` first")
        params = load_params(path)
        if mode == "deterministic":
            dists = [
                predict_deterministic(params, inst, stats, features=test_feats[inst.id])
                for inst in test_set
            ]
        elif mode == "dropout":
            spec = cfg.dropout_spec()
            dists = [
                predict_dropout(params, spec, inst, stats, features=test_feats[inst.id])
                for inst in test_set
            ]
        else:
            raise ValueError(f"unknown predict mode {mode!r}")
    return dists, test_set


def cmd_predict(args) -> int:
    cfg, base_dir = _load_cfg(args)
    dists, test_set = _predict_dists(cfg, base_dir, args.mode)
    out = os.path.join(_out_dir(cfg, base_dir), f"predictions_{args.mode}.tsv")
    save_run_file(dists, test_set, out, config_hash=config_hash(cfg))
    print(f"wrote run file {out}")
    return 0


def cmd_calibrate(args) -> int:
    cfg, base_dir = _load_cfg(args)
    test_set = _test_corpus(cfg, base_dir)
    dists = load_run_file(_resolve(args.run, base_dir), test_set)
    report = cal.balanced_ece(
        dists, test_set, reducer=args.reducer,
        non_rel_per_query=cfg.calibration_non_rel_per_query,
        seed=derive_seed(cfg.run_master_seed, "calibrate", 0),
        c=cfg.calibration_buckets,
    )
    stem = os.path.splitext(os.path.basename(args.run))[0]
    out_dir = _out_dir(cfg, base_dir)
    csv_path = os.path.join(out_dir, f"{stem}_reliability.csv")
    cal.save_reliability_csv(report, csv_path, config_hash=config_hash(cfg))
    cal.save_reliability_plot_spec(
        report, os.path.basename(csv_path), os.path.join(out_dir, f"{stem}_reliability.plotspec.json")
    )
    print(f"ECE = {report.ece:.6f} over n = {report.n} predictions -> {csv_path}")
    return 0


def save_ranked_lists(ranked_lists, instances, path, cfg_hash: str) -> None:
    by_id = {i.id: i for i in instances}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={cfg_hash}\n")
        for ranked in ranked_lists:
            inst = by_id[ranked.instance_id]
            for rank, j in enumerate(ranked.ordering):
                fh.write(
                    f"{ranked.instance_id}\t{rank}\t{inst.candidates[j].id}\t"
                    f"{ranked.final_scores[j]:.9g}\n"
                )


def load_ranked_lists(path, instances) -> list[RankedList]:
    by_id = {i.id: i for i in instances}
    rows: dict[str, list[tuple[int, str, float]]] = {}
    order: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            inst_id, rank, cand_id, score = line.rstrip("\n").split("\t")
            if inst_id not in rows:
                rows[inst_id] = []
                order.append(inst_id)
            rows[inst_id].append((int(rank), cand_id, float(score)))
    out = []
    for inst_id in order:
        inst = by_id[inst_id]
        pos = {c.id: j for j, c in enumerate(inst.candidates)}
        entries = sorted(rows[inst_id])
        ordering = tuple(pos[cand_id] for _, cand_id, _ in entries)
        scores = [0.0] * inst.k
        for _, cand_id, score in entries:
            scores[pos[cand_id]] = score
        out.append(RankedList(instance_id=inst_id, ordering=ordering, final_scores=tuple(scores)))
    return out


def cmd_rerank(args) -> int:
    cfg, base_dir = _load_cfg(args)
    test_set = _test_corpus(cfg, base_dir)
    dists = load_run_file(_resolve(args.run, base_dir), test_set)
    by_id = {i.id: i for i in test_set}
    b = cfg.risk_b if args.b is None else args.b
    ranked = [rerank(d, by_id[d.instance_id], b) for d in dists]
    stem = os.path.splitext(os.path.basename(args.run))[0]
    out = os.path.join(_out_dir(cfg, base_dir), f"{stem}_ranked_b{b:g}.tsv")
    save_ranked_lists(ranked, test_set, out, config_hash(cfg))
    print(f"wrote ranked lists (b={b:g}) -> {out}")
    return 0


def _run_pairs(cfg, base_dir, run_path):
    test_set = _test_corpus(cfg, base_dir)
    dists = load_run_file(_resolve(run_path, base_dir), test_set)
    by_id = {i.id: i for i in test_set}
    return [(d, by_id[d.instance_id]) for d in dists]


def cmd_sweep_b(args) -> int:
    cfg, base_dir = _load_cfg(args)
    pairs = _run_pairs(cfg, base_dir, args.run)
    rows = sweep_report(pairs, cfg.b_grid())
    stem = os.path.splitext(os.path.basename(args.run))[0]
    out_dir = _out_dir(cfg, base_dir)
    csv_path = os.path.join(out_dir, f"{stem}_sweep.csv")
    save_sweep_csv(rows, csv_path, config_hash=config_hash(cfg))
    save_sweep_plot_spec(os.path.basename(csv_path), os.path.join(out_dir, f"{stem}_sweep.plotspec.json"))
    print(f"wrote risk sweep over {len(rows)} grid points -> {csv_path}")
    return 0


def cmd_select_b(args) -> int:
    cfg, base_dir = _load_cfg(args)
    pairs = _run_pairs(cfg, base_dir, args.run)
    # the negative probe reproduces the risk-predilection check but is
    # excluded from selection
    grid = tuple(b for b in cfg.b_grid() if b >= 0.0)
    chosen = select_b(pairs, grid)
    out = os.path.join(_out_dir(cfg, base_dir), "selected_b.txt")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config_hash(cfg)}\n{chosen:g}\n")
    print(f"selected b = {chosen:g} -> {out}")
    return 0


def cmd_nota(args) -> int:
    cfg, base_dir = _load_cfg(args)
    test_set = _test_corpus(cfg, base_dir)
    dataset = nota_mod.build_nota_dataset(test_set, derive_seed(cfg.run_master_seed, "nota", 0))

    train_set = _train_corpus(cfg, base_dir)
    stats = corpus_stats(train_set)
    feats = corpus_feature_table(train_set, stats)
    spec_e = cfg.ensemble_spec()
    members = [
        train(train_set, spec_e.train_config, seed, stats, feature_table=feats)
        for seed in spec_e.member_seeds
    ]
    spec_d = cfg.dropout_spec()
    dists_by_id = {}
    for item in dataset:
        inst = item.instance
        f = corpus_feature_table([inst], stats)[inst.id]
        dists_by_id[item.base_id] = {
            "ensemble": predict_ensemble(members, inst, stats, features=f),
            "dropout": predict_dropout(members[0], spec_d, inst, stats, features=f),
        }

    blocks = cfg.nota_block_list()
    specs = {"E[R_D]": nota_mod.NotaFeatureSpec(blocks=("sorted_means",))}
    if "sorted_vars_ensemble" in blocks:
        specs["+var[R_E]"] = nota_mod.NotaFeatureSpec(blocks=("sorted_means", "sorted_vars_ensemble"))
    if "sorted_vars_dropout" in blocks:
        specs["+var[R_D]"] = nota_mod.NotaFeatureSpec(blocks=("sorted_means", "sorted_vars_dropout"))
    if len(blocks) == 3:
        specs["+both"] = nota_mod.NotaFeatureSpec(blocks=blocks)

    out_dir = _out_dir(cfg, base_dir)
    nota_mod.save_nota_dataset(dataset, os.path.join(out_dir, "nota_dataset.jsonl"))
    results = {}
    eval_seed = derive_seed(cfg.run_master_seed, "nota-eval", 0)
    for name, spec in specs.items():
        with_features = nota_mod.attach_features(dataset, dists_by_id, spec)
        results[name] = nota_mod.train_eval_nota(with_features, folds=cfg.nota_folds, seed=eval_seed)
    csv_path = os.path.join(out_dir, "nota_eval.csv")
    nota_mod.save_nota_eval_csv(results, csv_path, config_hash=config_hash(cfg))
    for name, res in results.items():
        print(f"{name}: F1-Macro {res.mean_f1:.3f} ({res.std_f1:.2f})")
    print(f"wrote {csv_path}")
    return 0


def cmd_grid(args) -> int:
    cfg, base_dir = _load_cfg(args)

    def parse_named(items):
        out = {}
        for item in items:
            name, path = item.split("=", 1)
            out[name] = load_corpus(_resolve(path, base_dir))
        return out

    sources = parse_named(args.source)
    targets = parse_named(args.target)
    grid = ExperimentGrid(
        sources=sources, targets=targets, train_ns=cfg.ns_train_strategy,
        test_ns=tuple(args.test_ns.split(",")),
    )
    seeds = tuple(
        derive_seed(cfg.run_master_seed, "grid", i) for i in range(cfg.ensemble_members)
    )
    populated = run_experiment_grid(grid, seeds, cfg.train_config(), k=cfg.corpus_k)
    out = os.path.join(_out_dir(cfg, base_dir), "grid.csv")
    save_grid_csv(populated, out, config_hash=config_hash(cfg))
    print(f"wrote {len(populated.cells)} grid cells -> {out}")
    return 0


def cmd_eval(args) -> int:
    cfg, base_dir = _load_cfg(args)
    test_set = _test_corpus(cfg, base_dir)
    by_id = {i.id: i for i in test_set}
    ranked = load_ranked_lists(_resolve(args.ranked, base_dir), test_set)
    per_query = [
        recall_at_k(r, by_id[r.instance_id].labels, by_id[r.instance_id].k, args.at)
        for r in ranked
    ]
    mean = float(np.mean(per_query))
    print(f"R@{args.at} = {mean:.6f} over {len(per_query)} queries")
    if args.baseline:
        base_ranked = load_ranked_lists(_resolve(args.baseline, base_dir), test_set)
        base_pq = [
            recall_at_k(r, by_id[r.instance_id].labels, by_id[r.instance_id].k, args.at)
            for r in base_ranked
        ]
        result = paired_t_test(per_query, base_pq)
        flag = " (degenerate variance)" if result.degenerate else ""
        print(f"baseline R@{args.at} = {float(np.mean(base_pq)):.6f}; "
              f"t = {result.t:.4f}, p = {result.p:.6f}{flag}")
    return 0


def cmd_pipeline(args) -> int:
    """gen -> train -> predict x3 -> calibrate -> sweep-b -> nota."""
    cfg, base_dir = _load_cfg(args)
    out_dir = _out_dir(cfg, base_dir)
    cmd_gen(args)
    cmd_train(args)
    for mode in ("deterministic", "ensemble", "dropout"):
        ns = argparse.Namespace(config=args.config, set=args.set, mode=mode)
        cmd_predict(ns)
    for mode, reducer in (("deterministic", "deterministic"), ("ensemble", "mean"), ("dropout", "mean")):
        ns = argparse.Namespace(
            config=args.config, set=args.set,
            run=os.path.join(out_dir, f"predictions_{mode}.tsv"), reducer=reducer,
        )
        cmd_calibrate(ns)
    ns = argparse.Namespace(
        config=args.config, set=args.set, run=os.path.join(out_dir, "predictions_ensemble.tsv")
    )
    cmd_sweep_b(ns)
    cmd_nota(args)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochrank",
        description="Calibration, uncertainty and risk-aware ranking experiments "
        "for a desk-scale pointwise response ranker.",
    )
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="experiment config file (section.key = value lines)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry, e.g. --set run.master_seed=1")
        p.set_defaults(func=func)
        return p

    add("gen", cmd_gen, "generate the synthetic train/test corpora")
    p = add("sample-negatives", cmd_sample_negatives, "rebuild candidate lists with a NS strategy")
    p.add_argument("--corpus", required=True)
    p.add_argument("--strategy", required=True, choices=["random", "bm25", "embed"])
    p.add_argument("--out", required=True)
    add("train", cmd_train, "train the deterministic scorer")
    p = add("predict", cmd_predict, "write a run file of predictive distributions")
    p.add_argument("--mode", default="deterministic",
                   choices=["deterministic", "ensemble", "dropout"])
    p = add("calibrate", cmd_calibrate, "balanced ECE and reliability curve from a run file")
    p.add_argument("--run", required=True)
    p.add_argument("--reducer", default="mean", choices=["mean", "deterministic"])
    p = add("rerank", cmd_rerank, "risk-aware re-ranking of a run file")
    p.add_argument("--run", required=True)
    p.add_argument("--b", type=float, default=None)
    p = add("sweep-b", cmd_sweep_b, "metric sweep over the risk-aversion grid")
    p.add_argument("--run", required=True)
    p = add("select-b", cmd_select_b, "pick b by validation metric")
    p.add_argument("--run", required=True)
    add("nota", cmd_nota, "build and evaluate the NOTA prediction task")
    p = add("grid", cmd_grid, "run the cross-domain / cross-NS experiment grid")
    p.add_argument("--source", action="append", required=True, metavar="NAME=PATH")
    p.add_argument("--target", action="append", required=True, metavar="NAME=PATH")
    p.add_argument("--test-ns", default="bm25", help="comma-separated test NS strategies")
    p = add("eval", cmd_eval, "score ranked lists (R@K, optional paired t-test)")
    p.add_argument("--ranked", required=True)
    p.add_argument("--baseline")
    p.add_argument("--at", type=int, default=1)
    add("pipeline", cmd_pipeline, "full default pipeline (gen through nota)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "verbose", False):
        logging.basicConfig(level=logging.INFO)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single diagnostic line per contract
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
