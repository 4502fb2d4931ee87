"""Command-line entry point: ``redos run | sweep-alpha | verify | plot``."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness, theory
from .beamforming import gershgorin_gain_bound, zf_precoder
from .channel import trial_rng
from .metrics import InvariantViolation

EXIT_OK = 0
EXIT_BD = 2
EXIT_VERIFY = 3


def _override(spec, args):
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.trials is not None:
        kw["trials"] = args.trials
    if args.out_dir is not None:
        kw["out_dir"] = args.out_dir
    return replace(spec, **kw) if kw else spec


def _users_csv(spec, res, path: Path) -> None:
    lines = ["scenario,variant,group,user,served_fraction,mean_rate_bits"]
    for v, run in res.items():
        if not hasattr(run, "served_fraction"):
            continue
        for g, (frac, rate) in enumerate(zip(run.served_fraction, run.mean_rate)):
            for k in range(frac.size):
                lines.append(f"{spec.name},{v},{g},{k},{float(frac[k])!r},{float(rate[k]) / harness.LN2!r}")
    path.write_text("\n".join(lines) + "\n")


def cmd_run(args) -> int:
    spec = _override(harness.load_scenario(args.scenario), args)
    out = Path(spec.out_dir)
    try:
        fair = {}
        rows = harness.run_scenario(spec, threads=args.threads, fairness_out=fair)
    except harness.BdCheckError as err:
        print(f"aborted: {err}", file=sys.stderr)
        return EXIT_BD
    path = out / f"{spec.name}.csv"
    harness.write_csv(rows, path)
    print(f"wrote {path}")
    if spec.fairness is not None and spec.fairness.kind == "pf":
        for sub in spec.expand():
            upath = out / f"{sub.name}_users.csv"
            _users_csv(sub, fair[sub.name], upath)
            print(f"wrote {upath}")
    for (scen, K, scheme), r in sorted(harness.best_rows(rows).items()):
        par = r.param_alpha if r.param_alpha is not None else r.param_gamma
        tag = "" if par is None else f" @ {par:g}"
        print(f"{scen:>14} K={K:<6} {scheme:<16}{tag:<9} {r.mean_sum_rate_bits:8.3f} "
              f"+- {r.stderr:.3f} bits  feedback {r.mean_feedback_units:.1f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = _override(harness.load_scenario(args.scenario), args)
    if args.K:
        spec = replace(spec, K_grid=tuple(args.K))
    grid = [float(a) for a in args.alphas.split(",")]
    out = Path(spec.out_dir)
    try:
        rows = []
        for sub in spec.expand():
            sw = harness.alpha_sweep(sub, grid, threads=args.threads)
            for K, best in sw.optimal.items():
                print(f"{sub.name} K={K}: optimal alpha {best:g}")
            for i, K in enumerate(sw.K_grid):
                for j, a in enumerate(sw.alphas):
                    rows.append(harness.ResultRow(sub.name, "redos", int(K), float(a), None,
                                                  float(sw.surface[i, j]), float(sw.stderr[i, j]),
                                                  float("nan"), sub.trials, sub.seed))
    except harness.BdCheckError as err:
        print(f"aborted: {err}", file=sys.stderr)
        return EXIT_BD
    path = out / f"{spec.name}_alpha.csv"
    harness.write_csv(rows, path)
    print(f"wrote {path}")
    return EXIT_OK


def run_verify(trials: int = 20_000, seed: int = 0, echo=print) -> bool:
    """Run the analytical checks at reduced size; True if all pass."""
    rng = trial_rng(seed, 0)
    ok = True

    def report(name, passed, detail):
        nonlocal ok
        ok &= bool(passed)
        echo(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    for r in (2, 3, 4, 8):
        a = 1.0 / np.sqrt(r)
        empty = theory.alpha_min_probe(r, a, trials, rng)
        above = theory.alpha_min_probe(r, a + 0.05, trials, rng)
        report(f"cone floor r*={r}", empty == 0 and above > 0, f"{empty} empty at alpha_min, {above} above")
    for r in (2, 3, 4, 8):
        report(f"alpha-bar endpoint r*={r}", theory.alpha_bar_lower(r) >= 1 / np.sqrt(2) - 1e-15,
               f"{theory.alpha_bar_lower(r):.6f}")
    for a in (0.75, 0.9, 0.96):
        for r in (2, 4):
            res = theory.cone_pair_bound_check(a, r, trials, rng)
            report(f"cone-pair bound alpha={a} r*={r}", res.passed and res.sharpness >= 0.95,
                   f"max {res.max_observed:.5f} of bound {res.bound:.5f}")
    worst = 0.0
    for r in (2, 4, 8):
        for _ in range(max(1, trials // 100)):
            G = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
            zf = zf_precoder(G)
            worst = max(worst, float(np.max(np.abs(G @ zf.W_tilde - np.eye(r)))))
    report("zero-forcing identity", worst < 1e-9, f"max residual {worst:.2e}")
    a = 0.8
    viol = 0
    for _ in range(max(1, trials // 10)):
        G = np.vstack([theory.sample_cone(rng, 1, 2, i, a) for i in (0, 1)])
        G *= np.sqrt(rng.exponential(size=(2, 1)))
        gam = zf_precoder(G).gammas
        floor = gershgorin_gain_bound(a, 2) * np.sum(np.abs(G) ** 2, axis=1)
        viol += int(np.any(gam < floor - 1e-9))
    report("effective-gain bound r*=2", viol == 0, f"{viol} violations")
    for K in (100, 1000, 10_000):
        res = theory.evt_tail_check(theory.TailBoundSpec((1.0,), 1.0, K, z_tau=0.0), trials, rng)
        p = 1.0 - 1.0 / K
        tol = 3.0 * np.sqrt(p * (1 - p) / trials) + 1e-12
        report(f"exponential tail K={K}", abs(res.freq - p) <= tol, f"{res.freq:.5f} vs {p:.5f}")
    _, ratio = theory.evt_constant_stability((1.0, 0.7), 0.5, (100, 1000, 10_000), rng, trials=trials)
    report("tail constant stability", 0.5 <= ratio <= 2.0, f"ratio {ratio:.3f}")
    return ok


def cmd_verify(args) -> int:
    try:
        ok = run_verify(args.trials or 20_000, args.seed or 0)
    except InvariantViolation as err:
        print(f"invariant violation: {err}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = harness.read_csv(args.csv)
    out = Path(args.out_dir or Path(args.csv).parent)
    out.mkdir(parents=True, exist_ok=True)
    best = harness.best_rows(rows)
    for scen in sorted({r.scenario for r in rows}):
        fig, ax = plt.subplots(figsize=(6, 4))
        Ks = sorted({k for (s, k, _) in best if s == scen})
        schemes = [s for s in dict.fromkeys(r.scheme for r in rows if r.scenario == scen)]
        if len(Ks) > 1:
            for sch in schemes:
                pts = [best[(scen, K, sch)] for K in Ks if (scen, K, sch) in best]
                ax.errorbar([p.K for p in pts], [p.mean_sum_rate_bits for p in pts],
                            yerr=[2 * p.stderr for p in pts], marker="o", capsize=2, label=sch)
            ax.set_xscale("log")
            ax.set_xlabel("number of users K")
        else:
            for sch in schemes:
                pts = [r for r in rows if r.scenario == scen and r.scheme == sch]
                xs = [r.param_alpha if r.param_alpha is not None else r.param_gamma for r in pts]
                if None in xs:
                    ax.axhline(pts[0].mean_sum_rate_bits, ls="--", label=sch)
                else:
                    ax.plot(xs, [r.mean_sum_rate_bits for r in pts], marker="o", label=sch)
            ax.set_xlabel("alpha / gamma")
        ax.set_ylabel("sum rate [bits/s/Hz]")
        ax.set_title(scen)
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
        fname = out / (scen.replace("[", "_").replace("]", "").replace("=", "") + ".png")
        fig.tight_layout()
        fig.savefig(fname, dpi=120)
        plt.close(fig)
        print(f"wrote {fname}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="redos", description="Cone-based MU-MIMO user selection simulator")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--trials", type=int, default=None)
    common.add_argument("--threads", type=int, default=1, help="worker processes")
    common.add_argument("--out-dir", default=None)
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", parents=[common], help="run a scenario file or preset")
    r.add_argument("scenario", help=f"path or preset ({', '.join(harness.preset_names())})")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep-alpha", parents=[common], help="sum rate over a cone-threshold grid")
    s.add_argument("scenario")
    s.add_argument("--alphas", default="0.5,0.6,0.7,0.75,0.8,0.85,0.9,0.95")
    s.add_argument("--K", type=int, nargs="*", default=None)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", parents=[common], help="run the analytical checks")
    v.set_defaults(func=cmd_verify)

    pl = sub.add_parser("plot", parents=[common], help="render a results CSV to PNG")
    pl.add_argument("csv")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
