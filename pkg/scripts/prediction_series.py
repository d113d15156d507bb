"""Target and prediction series around a regime change, for timing plots.

Trains on one Gilbert-Elliott trace, then writes (i, t_i, EMA y_i, ELC y_i)
for a fresh trace, thinned by --stride.

    python3 scripts/prediction_series.py --out results/prediction_series.csv
"""
import argparse
import csv
from pathlib import Path

from elc.metrics import compute_targets
from elc.synth import GilbertElliottParams, gen_gilbert_elliott
from elc.training import TrainConfig, predictions_for, train_elc


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-train", type=int, default=1_000_000)
    ap.add_argument("--n-test", type=int, default=200_000)
    ap.add_argument("--stride", type=int, default=60)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--out", default="results/prediction_series.csv")
    args = ap.parse_args()

    params = dict(p_good_to_bad=1e-4, p_bad_to_good=1e-4, success_prob_good=0.95,
                  success_prob_bad=0.6)
    cfg = TrainConfig()
    train = gen_gilbert_elliott(GilbertElliottParams(**params, seed=args.seed), args.n_train)
    test = gen_gilbert_elliott(GilbertElliottParams(**params, seed=args.seed + 1), args.n_test)
    res = train_elc(train, cfg)

    t = compute_targets(test, cfg.n_future).values
    y_ema = predictions_for(res.alpha_star, test, cfg)
    y_elc = predictions_for(res.model, test, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "time_s", "t_i", "ema", "elc"])
        for i in range(cfg.n_skip, t.size, args.stride):
            w.writerow([i + 1, (i + 1) * test.sample_period, repr(float(t[i])),
                        repr(float(y_ema[i])), repr(float(y_elc[i]))])
    print(f"alpha*={res.alpha_star:.4g} N_alpha={res.model.n_alpha}; wrote {out}")


if __name__ == "__main__":
    main()
