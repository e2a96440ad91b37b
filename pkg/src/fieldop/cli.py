"""Batch command-line interface: gen-data, train, eval."""

import argparse
import json
import os
import sys

import numpy as np

from .config import (build_grf, build_model_config, build_solver, build_train_config,
                     load_run_config)
from .baselines import CnnConfig, init_fixed_grid_cnn
from .data import make_dataset
from .errors import ConfigError, FieldOpError
from .experiments import (ConvergenceConfig, convergence_experiment, interpolation_predictor,
                          invert_initial_condition, operator_predictor, spectrum_experiment,
                          superres_experiment)
from .grids import GridFunction
from .losses import LossSpec
from .model import ModelConfig, init_model
from .optim import finetune_instance, test_data_loss, train_loop
from .serialization import (load_checkpoint, load_dataset, save_checkpoint, save_dataset,
                            sha256_hex, write_csv, write_metrics)

EVAL_MODES = ("same-res", "superres", "spectrum", "convergence", "invert", "finetune")


def _echo_config(cfg, out_dir):
    text = json.dumps(cfg, sort_keys=True, indent=2)
    print(text)
    write_metrics(os.path.join(out_dir, "effective_config.json"), cfg)


def _prepare(args, need_config=True):
    if need_config or args.config:
        cfg = load_run_config(args.config)
    else:
        cfg = None
    if cfg is not None:
        if args.seed is not None:
            cfg["seed"] = int(args.seed)
        if args.out_dir is not None:
            cfg["out_dir"] = args.out_dir
        out_dir = cfg["out_dir"]
    else:
        out_dir = args.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    return cfg, out_dir


def cmd_gen_data(args):
    cfg, out_dir = _prepare(args)
    ds_cfg = cfg["dataset"]
    dataset = make_dataset(
        task=cfg["task"], n_samples=ds_cfg["n_samples"], res_in=ds_cfg["res_in"],
        res_out=ds_cfg["res_out"], grf=build_grf(cfg), solver_spec=build_solver(cfg),
        seed=cfg["seed"], res_hr=ds_cfg["res_hr"], train_fraction=ds_cfg["train_fraction"],
    )
    path = os.path.join(out_dir, "dataset.nods")
    save_dataset(dataset, path)
    _echo_config(cfg, out_dir)
    print(f"wrote {path}: {dataset.n_samples} samples "
          f"({len(dataset.train_idx)} train / {len(dataset.test_idx)} test)")
    print(f"sha256 {sha256_hex(path)}")
    return 0


def cmd_train(args):
    cfg, out_dir = _prepare(args)
    dataset = load_dataset(args.dataset)
    if dataset.task != cfg["task"]:
        raise ConfigError(f"dataset task {dataset.task!r} does not match "
                          f"config task {cfg['task']!r}")
    model_cfg = build_model_config(cfg)
    train_cfg = build_train_config(cfg)
    if isinstance(model_cfg, CnnConfig):
        model = init_fixed_grid_cnn(model_cfg, cfg["seed"])
    else:
        model = init_model(model_cfg, cfg["seed"])

    paths = {}

    def writer(tag, mdl, epoch, history):
        path = os.path.join(out_dir, f"{tag}.nock")
        save_checkpoint(mdl, path, seed=cfg["seed"], step=epoch, loss_spec=train_cfg.loss)
        paths[tag] = path

    result = train_loop(model, dataset, train_cfg, save_checkpoint=writer, log=print)
    metrics = {
        "history": result.history.to_dict(),
        "wall_seconds": result.history.wall_seconds,
        "parameter_count": result.model.parameter_count(),
        "checkpoints": paths,
        "dataset": os.fspath(args.dataset),
        "effective_config": cfg,
    }
    write_metrics(os.path.join(out_dir, "metrics.json"), metrics)
    _echo_config(cfg, out_dir)
    print(f"final train loss {result.history.entries[-1]['train_loss']:.6f}"
          if result.history.entries else "no epochs run")
    return 0


def _eval_same_res(model, header, dataset, out_dir):
    loss = LossSpec(**_loss_kwargs(header)) if header.get("loss") else LossSpec()
    errs = []
    for s in dataset.test_samples:
        res = loss.res_data or s.output.resolution
        from .model import model_forward
        from .losses import relative_l2
        pred = model_forward(model, s.input, res)
        errs.append(relative_l2(pred.values, s.output.values))
    write_csv(os.path.join(out_dir, "same_res.csv"), ["sample", "rel_l2"],
              [(i, float(e)) for i, e in enumerate(errs)])
    return {"mode": "same-res", "mean_rel_l2": float(np.mean(errs)) if errs else None,
            "n_test": len(errs)}


def _loss_kwargs(header):
    loss = dict(header["loss"])
    for key in ("res_data", "res_pde"):
        if loss.get(key) is not None:
            loss[key] = tuple(loss[key])
    return loss


def _eval_superres(model, dataset, cfg, out_dir):
    res_high = (cfg or {}).get("experiment", {}).get("res_high") or dataset.res_hr
    report = superres_experiment(model, dataset, res_high)
    rows = [(i, float(a), float(b)) for i, (a, b)
            in enumerate(zip(report.err_operator, report.err_baseline))]
    write_csv(os.path.join(out_dir, "superres.csv"),
              ["sample", "err_operator", "err_baseline"], rows)
    return {"mode": "superres", "res_low": list(report.res_low),
            "res_high": list(report.res_high),
            "mean_err_operator": float(report.err_operator.mean()),
            "mean_err_baseline": float(report.err_baseline.mean()),
            "operator_wins_fraction": float(np.mean(report.err_operator
                                                    <= report.err_baseline))}


def _eval_spectrum(model, dataset, out_dir):
    train_res = int(dataset.res_out[0])
    models = [("operator", operator_predictor(model)),
              ("interpolation", interpolation_predictor(model, dataset.res_out))]
    report = spectrum_experiment(models, dataset, train_res)
    columns = ["wavenumber", "energy_true"] + [f"energy_{n}" for n, _ in models]
    rows = []
    for i, k in enumerate(report.wavenumbers):
        row = [int(k), float(report.energy_true[i])]
        row += [float(report.energy_models[n][i]) for n, _ in models]
        rows.append(row)
    write_csv(os.path.join(out_dir, "spectrum.csv"), columns, rows)
    return {"mode": "spectrum", "train_nyquist": report.train_nyquist,
            "mean_discrepancy": report.mean_discrepancy()}


def _eval_convergence(cfg, out_dir):
    if cfg is None:
        raise ConfigError("convergence mode requires --config")
    exp = cfg["experiment"]
    model_cfg = build_model_config(cfg)
    if isinstance(model_cfg, CnnConfig):
        raise ConfigError("convergence mode: set model.kind to an operator "
                          "architecture; the cnn baseline is configured separately")
    conv = ConvergenceConfig(
        task=cfg["task"], grf=build_grf(cfg), solver=build_solver(cfg),
        n_samples=cfg["dataset"]["n_samples"],
        train_fraction=cfg["dataset"]["train_fraction"],
        train=build_train_config(cfg),
        fno=model_cfg if model_cfg.kind == "fno" else None,
        gno=model_cfg if model_cfg.kind == "gno" else None,
        cnn=CnnConfig(width=exp["cnn_width"], depth=exp["cnn_depth"],
                      kernel_size=exp["cnn_kernel_size"]),
        seed=cfg["seed"],
    )
    report = convergence_experiment(exp["architectures"], exp["resolutions"], conv, log=print)
    rows = []
    for arch in report.errors:
        for res, err in zip(report.resolutions, report.errors[arch]):
            rows.append([arch, res, float(err), report.param_counts[arch]])
    write_csv(os.path.join(out_dir, "convergence.csv"),
              ["architecture", "resolution", "rel_l2", "parameters"], rows)
    return {"mode": "convergence", "resolutions": report.resolutions,
            "errors": {k: [float(x) for x in v] for k, v in report.errors.items()},
            "param_counts": report.param_counts}


def _eval_invert(model, dataset, cfg, out_dir):
    exp = (cfg or {}).get("experiment", {})
    idx = int(exp.get("sample_index", 0))
    sample = dataset.test_samples[idx]
    steps = int(exp.get("invert_steps", 500))
    lr = float(exp.get("invert_lr", 0.05))
    tik = float(exp.get("invert_tikhonov", 1e-4))
    if dataset.task == "burgers":
        # the unknown is the 1d initial condition behind the tiled input
        result = invert_initial_condition(model, sample, steps=steps, lr=lr,
                                          tikhonov_weight=tik)
    else:
        from fieldop.experiments import invert
        from fieldop.grids import GridFunction
        from fieldop.model import model_forward
        y_obs = model_forward(model, sample.input)
        init = GridFunction(np.zeros_like(sample.input.values))
        result = invert(model, y_obs, init, steps=steps, lr=lr, tikhonov_weight=tik,
                        x_true=sample.input)
    write_csv(os.path.join(out_dir, "invert_trajectory.csv"), ["step", "loss"],
              [(i, float(v)) for i, v in enumerate(result.trajectory)])
    return {"mode": "invert", "sample_index": idx,
            "final_rel_l2": result.final_rel_l2, "diverged": result.diverged,
            "best_loss": result.best_loss}


def _eval_finetune(model, header, dataset, cfg, out_dir):
    exp = (cfg or {}).get("experiment", {})
    idx = int(exp.get("finetune_sample", 0))
    sample = dataset.test_samples[idx]
    res_pde = dataset.res_hr
    spec = LossSpec(w_data=0.0, w_pde=1.0, res_pde=tuple(res_pde))
    tuned, info = finetune_instance(model, sample, steps=int(exp.get("finetune_steps", 100)),
                                    lr=float(exp.get("finetune_lr", 1e-3)), loss_spec=spec)
    path = os.path.join(out_dir, "finetuned.nock")
    save_checkpoint(tuned, path, seed=header.get("seed", 0), step=info.steps_run,
                    loss_spec=spec)
    return {"mode": "finetune", "sample_index": idx,
            "initial_residual": info.initial_loss, "best_residual": info.best_loss,
            "reduction_factor": (info.initial_loss / info.best_loss
                                 if info.best_loss > 0 else float("inf")),
            "steps_run": info.steps_run, "diverged": info.diverged,
            "checkpoint": path}


def cmd_eval(args):
    cfg, out_dir = _prepare(args, need_config=args.mode == "convergence")
    metrics = {"mode": args.mode}
    if args.mode == "convergence":
        metrics = _eval_convergence(cfg, out_dir)
    else:
        if not args.checkpoint or not args.dataset:
            raise ConfigError(f"mode {args.mode!r} requires --checkpoint and --dataset")
        model, header = load_checkpoint(args.checkpoint)
        dataset = load_dataset(args.dataset)
        if args.mode == "same-res":
            metrics = _eval_same_res(model, header, dataset, out_dir)
        elif args.mode == "superres":
            metrics = _eval_superres(model, dataset, cfg, out_dir)
        elif args.mode == "spectrum":
            metrics = _eval_spectrum(model, dataset, out_dir)
        elif args.mode == "invert":
            metrics = _eval_invert(model, dataset, cfg, out_dir)
        elif args.mode == "finetune":
            metrics = _eval_finetune(model, header, dataset, cfg, out_dir)
        else:
            raise ConfigError(f"unknown eval mode {args.mode!r}")
    write_metrics(os.path.join(out_dir, f"eval_{args.mode}.json"), metrics)
    if cfg is not None:
        _echo_config(cfg, out_dir)
    print(json.dumps(metrics, sort_keys=True, default=str, indent=2))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="fieldop",
                                     description="operator learning engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen-data", help="generate a dataset from a config")
    p_train = sub.add_parser("train", help="train a model on a dataset")
    p_eval = sub.add_parser("eval", help="evaluate a checkpoint or run an experiment")

    for p in (p_gen, p_train, p_eval):
        p.add_argument("--config", help="path to a JSON run configuration")
        p.add_argument("--out-dir", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="seed override")
    p_train.add_argument("--dataset", required=True, help="path to a dataset file")
    p_eval.add_argument("--dataset", help="path to a dataset file")
    p_eval.add_argument("--checkpoint", help="path to a checkpoint file")
    p_eval.add_argument("--mode", required=True, choices=EVAL_MODES)

    p_gen.set_defaults(func=cmd_gen_data)
    p_train.set_defaults(func=cmd_train)
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("gen-data", "train") and not args.config:
        print("error: --config is required", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FieldOpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
