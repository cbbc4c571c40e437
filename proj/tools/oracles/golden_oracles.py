#!/usr/bin/env python3
"""Writes data/golden/*.csv from closed-form oracles.

Run from the repository root: python3 tools/oracles/golden_oracles.py
"""
import csv
import os
from fractions import Fraction

HERE = "tools/oracles/golden_oracles.py"
HEADER = ["experiment", "key", "expected", "tolerance", "provenance", "source"]


def amdahl(weights, kv, s_kv):
    # Exact rational arithmetic: 1 / (w/t + (kv/t)/s)
    w, k, s = Fraction(weights), Fraction(kv), Fraction(s_kv)
    t = w + k
    return 1 / (w / t + (k / t) / s)


def occupancy(n, s):
    return n * (1 - (1 - 1 / n) ** s)


def fmt(x):
    return f"{float(x):.12g}"


def write(name, rows):
    path = os.path.join("data", "golden", name + ".csv")
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(HEADER)
        w.writerows(rows)
    print("wrote", path)


def main():
    a = amdahl(15, 24, Fraction(3, 2))
    write("amdahl", [
        ["amdahl", "speedup", fmt(a), "1e-9", "oracle", HERE],
        ["amdahl", "speedup", "1.26", "0.005", "published", "bandwidth model text: approx 1.26x"],
        ["amdahl", "kv_speedup", "1.5", "0", "analytic", "config input"],
    ])

    rows = []
    ratio = Fraction(256, 8192)
    rows.append(["cost-report/ratios", "percent[quantity=santa_value_ratio;S=256]", fmt(100 * ratio), "1e-12",
                 "published", "value-stage ratio: 3.125%"])
    rows.append(["cost-report/ratios", "percent[quantity=gqa_union_worst_case;S=256]",
                 fmt(100 * min(1, Fraction(4 * 256, 8192))), "1e-12", "published", "GQA worst case: 12.5%"])
    for scheme in ["sdpa", "santa", "topk"]:
        rows.append(["cost-report/checks", f"match[scheme={scheme};S=256]", "1", "0", "analytic",
                     "instrumented ledger equals symbolic ledger"])
    n, d, s = 8192, 128, 256
    rows.append(["cost-report/ledger", f"adds[scheme=sdpa;S={s}]", str(n * d), "0", "analytic", "n_k*d_k"])
    rows.append(["cost-report/ledger", f"adds[scheme=santa;S={s}]", str(s * d), "0", "analytic", "S*d_k"])
    rows.append(["cost-report/ledger", f"mults_divs[scheme=santa;S={s}]", str(d), "0", "analytic", "d_k"])
    rows.append(["cost-report/ledger", f"value_reads[scheme=santa;S={s}]", str(s * d), "0", "analytic", "S*d_k"])
    write("cost_report", rows)

    write("cost_report_gqa", [
        ["cost-report/ratios", "percent[quantity=gqa_union_worst_case;S=128]",
         fmt(100 * min(1, Fraction(4 * 128, 32768))), "1e-12", "published", "GQA worst case: approx 1.56%"],
        ["cost-report/ratios", "value[quantity=gqa_union_worst_case;S=128]",
         fmt(min(1, Fraction(4 * 128, 32768))), "1e-12", "analytic", "G*S/n_k capped at 1"],
    ])

    write("variance_sweep", [
        ["variance-sweep/slopes", "slope[scheme=multinomial;trial=0]", "-1", "1e-9", "analytic",
         "var_trace = tr(Sigma)/S"],
    ])

    occ = occupancy(8192, 256)
    write("unique_keys", [
        ["unique-keys", "occupancy_uniform[scheme=multinomial;S=256]", fmt(occ), "1e-6", "oracle", HERE],
        ["unique-keys", "mean_unique[scheme=multinomial;S=256]", fmt(occ), fmt(0.01 * occ), "oracle", HERE],
    ])


if __name__ == "__main__":
    main()
