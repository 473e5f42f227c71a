#!/usr/bin/env python3
# Apache License, Version 2.0, refer to LICENSE.txt
"""Regenerate data/sample_policies.csv.

Synthetic motor portfolio with a known gamma severity surface, used by the
test suite. Stdlib only; the output is deterministic for a fixed seed.
"""

import math
import random

SEED = 20240817
N_POLICIES = 600
PHI = 1.2  # gamma dispersion of a single claim

B0 = 7.0
B_GENDER = {"F": 0.0, "M": 0.2}
B_AGECAT = {"1": 0.0, "2": -0.10, "3": -0.15, "4": -0.20, "5": -0.30, "6": -0.25}
B_AREA = {"A": 0.0, "B": 0.0, "C": 0.0, "D": 0.0, "E": 0.15, "F": 0.35}


def vv_effect(veh_value):
    if veh_value < 1.2:
        return 0.0
    if veh_value < 1.86:
        return -0.10
    return -0.15


def main():
    rng = random.Random(SEED)
    rows = []
    for _ in range(N_POLICIES):
        veh_value = round(rng.uniform(0.2, 4.0), 3)
        exposure = round(rng.uniform(0.05, 1.0), 4)
        gender = rng.choice("FFMM")
        area = rng.choice("AABBCCDDEF")
        agecat = str(rng.randint(1, 6))
        veh_age = rng.randint(1, 4)
        veh_body = rng.choice(["SEDAN", "HBACK", "STNWG", "UTE"])
        numclaims = 0
        if rng.random() < 0.55:
            numclaims = 1 + (rng.random() < 0.25) + (rng.random() < 0.08)
        cost = 0.0
        if numclaims:
            log_mu = (B0 + B_GENDER[gender] + B_AGECAT[agecat] + B_AREA[area]
                      + vv_effect(veh_value))
            mu = math.exp(log_mu)
            for _ in range(numclaims):
                cost += rng.gammavariate(1.0 / PHI, mu * PHI)
        rows.append((veh_value, exposure, int(numclaims > 0), numclaims,
                     round(cost, 2), veh_body, veh_age, gender, area, agecat))

    with open("data/sample_policies.csv", "w", newline="") as f:
        f.write("veh_value,exposure,clm,numclaims,claimcst0,"
                "veh_body,veh_age,gender,area,agecat\n")
        for r in rows:
            f.write(",".join(str(v) for v in r) + "\n")
    print(f"wrote data/sample_policies.csv ({len(rows)} policies)")


if __name__ == "__main__":
    main()
