#!/usr/bin/env python3
"""Builds the demo data directory: 25 large U.S. CBSAs, 12 synthetic ZIPs each,
and a synthetic review log drawn over them with `regionrec synth --regions`.

City scalars (population, income, education, vote share, centroid) are rounded
public figures. Racial composition, scenes, venues and all ZIP-level
attributes are synthetic and seeded.

    python3 scripts/make_fixture.py [--out fixtures/demo] [--no-train]
"""

import argparse
import csv
import json
import subprocess
from pathlib import Path

import numpy as np

# code, name, short name, lat, lon, population, median income, bachelor's share,
# Democratic two-party share (2020), ZIP3 prefix
CITIES = [
    ("35620", "New York-Newark-Jersey City, NY-NJ-PA", "New York", 40.71, -74.01, 20_140_000, 86_000, 0.43, 0.62, "100"),
    ("31080", "Los Angeles-Long Beach-Anaheim, CA", "Los Angeles", 34.05, -118.24, 13_200_000, 81_000, 0.36, 0.68, "900"),
    ("16980", "Chicago-Naperville-Elgin, IL-IN-WI", "Chicago", 41.88, -87.63, 9_620_000, 78_000, 0.40, 0.63, "606"),
    ("19100", "Dallas-Fort Worth-Arlington, TX", "Dallas", 32.78, -96.80, 7_640_000, 77_000, 0.36, 0.48, "752"),
    ("26420", "Houston-The Woodlands-Sugar Land, TX", "Houston", 29.76, -95.37, 7_120_000, 72_000, 0.33, 0.48, "770"),
    ("47900", "Washington-Arlington-Alexandria, DC-VA-MD-WV", "Washington", 38.90, -77.04, 6_390_000, 111_000, 0.52, 0.68, "200"),
    ("37980", "Philadelphia-Camden-Wilmington, PA-NJ-DE-MD", "Philadelphia", 39.95, -75.17, 6_250_000, 79_000, 0.39, 0.60, "191"),
    ("33100", "Miami-Fort Lauderdale-Pompano Beach, FL", "Miami", 25.76, -80.19, 6_140_000, 62_000, 0.34, 0.54, "331"),
    ("12060", "Atlanta-Sandy Springs-Alpharetta, GA", "Atlanta", 33.75, -84.39, 6_090_000, 75_000, 0.40, 0.55, "303"),
    ("14460", "Boston-Cambridge-Newton, MA-NH", "Boston", 42.36, -71.06, 4_940_000, 99_000, 0.49, 0.66, "021"),
    ("38060", "Phoenix-Mesa-Chandler, AZ", "Phoenix", 33.45, -112.07, 4_850_000, 70_000, 0.32, 0.50, "850"),
    ("41860", "San Francisco-Oakland-Berkeley, CA", "San Francisco", 37.77, -122.42, 4_750_000, 119_000, 0.51, 0.79, "941"),
    ("40140", "Riverside-San Bernardino-Ontario, CA", "Riverside", 33.95, -117.40, 4_600_000, 73_000, 0.22, 0.53, "925"),
    ("19820", "Detroit-Warren-Dearborn, MI", "Detroit", 42.33, -83.05, 4_390_000, 66_000, 0.33, 0.55, "482"),
    ("42660", "Seattle-Tacoma-Bellevue, WA", "Seattle", 47.61, -122.33, 4_020_000, 97_000, 0.44, 0.67, "981"),
    ("33460", "Minneapolis-St. Paul-Bloomington, MN-WI", "Minneapolis", 44.98, -93.27, 3_690_000, 85_000, 0.43, 0.59, "554"),
    ("41740", "San Diego-Chula Vista-Carlsbad, CA", "San Diego", 32.72, -117.16, 3_300_000, 88_000, 0.40, 0.61, "921"),
    ("45300", "Tampa-St. Petersburg-Clearwater, FL", "Tampa", 27.95, -82.46, 3_180_000, 61_000, 0.32, 0.48, "336"),
    ("19740", "Denver-Aurora-Lakewood, CO", "Denver", 39.74, -104.99, 2_960_000, 88_000, 0.45, 0.62, "802"),
    ("12580", "Baltimore-Columbia-Towson, MD", "Baltimore", 39.29, -76.61, 2_840_000, 87_000, 0.41, 0.60, "212"),
    ("41180", "St. Louis, MO-IL", "St. Louis", 38.63, -90.20, 2_820_000, 69_000, 0.35, 0.52, "631"),
    ("36740", "Orlando-Kissimmee-Sanford, FL", "Orlando", 28.54, -81.38, 2_670_000, 65_000, 0.33, 0.55, "328"),
    ("16740", "Charlotte-Concord-Gastonia, NC-SC", "Charlotte", 35.23, -80.84, 2_660_000, 68_000, 0.36, 0.50, "282"),
    ("41700", "San Antonio-New Braunfels, TX", "San Antonio", 29.42, -98.49, 2_560_000, 63_000, 0.29, 0.50, "782"),
    ("38900", "Portland-Vancouver-Hillsboro, OR-WA", "Portland", 45.52, -122.68, 2_510_000, 79_000, 0.40, 0.62, "972"),
]

RACE = ["white", "black", "hispanic", "asian", "other"]
SCENES = ["traditional", "self_expression", "utilitarian", "glamour", "transgression", "neighborliness"]
VENUES = ["food", "nightlife", "outdoors", "arts", "shopping", "lodging"]
ZIPS_PER_CITY = 12

REVIEW_SPEC = {
    "n_users": 800,
    "n_archetypes": 3,
    "reviews_per_user_range": [20, 40],
    "noise_rate": 0.1,
    "rng_seed": 7,
    "min_cities_per_user": 6,
}


def simplex(rng, base, concentration):
    return rng.dirichlet(np.asarray(base) * concentration)


def header():
    fixed = [
        "level", "code", "parent_city", "name", "description", "image_url",
        "population", "median_income", "education_rate", "employment_rate",
        "political_leaning", "centroid_lat", "centroid_lon",
    ]
    return (
        fixed
        + [f"race:{c}" for c in RACE]
        + [f"scene:{d}" for d in SCENES]
        + [f"venue:{c}" for c in VENUES]
    )


def row(level, code, parent, name, desc, pop, income, edu, emp, pol, lat, lon, race, scenes, venues):
    fmt = lambda xs: [repr(float(x)) for x in xs]
    return (
        [level, code, parent, name, desc, "", f"{pop:.0f}", f"{income:.0f}", f"{edu:.4f}", f"{emp:.4f}",
         f"{pol:.4f}", f"{lat:.5f}", f"{lon:.5f}"]
        + fmt(race) + fmt(scenes) + fmt(venues)
    )


def build_rows(seed):
    rng = np.random.default_rng(seed)
    rows = []
    for code, name, short, lat, lon, pop, income, edu, pol, zip3 in CITIES:
        race = simplex(rng, [0.5, 0.15, 0.2, 0.1, 0.05], 20)
        scenes = rng.normal(0.0, 1.0, len(SCENES))
        venues = simplex(rng, [0.3, 0.15, 0.15, 0.1, 0.2, 0.1], 30)
        emp = float(np.clip(rng.normal(0.64, 0.03), 0.5, 0.8))
        desc = f"The {short} metropolitan area."
        rows.append(row("city", code, "", name, desc, pop, income, edu, emp, pol, lat, lon, race, scenes, venues))
        for j in range(ZIPS_PER_CITY):
            zpop = pop / 60 * rng.lognormal(0.0, 0.4)
            zinc = income * rng.lognormal(0.0, 0.3)
            zedu = float(np.clip(edu + rng.normal(0, 0.12), 0.02, 0.95))
            zemp = float(np.clip(emp + rng.normal(0, 0.04), 0.3, 0.9))
            zpol = float(np.clip(pol + rng.normal(0, 0.12), 0.05, 0.95))
            zrace = simplex(rng, race, 8)
            zscenes = scenes * 0.4 + rng.normal(0.0, 1.0, len(SCENES))
            zvenues = simplex(rng, venues, 10)
            zlat = lat + rng.uniform(-0.25, 0.25)
            zlon = lon + rng.uniform(-0.25, 0.25)
            rows.append(row(
                "neighborhood", f"{zip3}{j + 1:02d}", code, f"{short} District {j + 1}", "",
                zpop, zinc, zedu, zemp, zpol, zlat, zlon, zrace, zscenes, zvenues,
            ))
    return rows


def main():
    root = Path(__file__).resolve().parent.parent
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=root / "fixtures" / "demo")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--no-train", action="store_true", help="skip training the model bundles")
    args = ap.parse_args()

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "regions.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header())
        w.writerows(build_rows(args.seed))
    (out / "review_spec.json").write_text(json.dumps(REVIEW_SPEC, indent=2) + "\n")

    regionrec = ["cargo", "run", "--quiet", "--release", "-p", "regionrec-cli", "--"]
    subprocess.run(
        regionrec + ["synth", "--regions", str(out / "regions.csv"), "--spec", str(out / "review_spec.json"), "--out", str(out)],
        check=True, cwd=root,
    )
    if not args.no_train:
        subprocess.run(regionrec + ["train", "--data", str(out), "--out", str(out / "models")], check=True, cwd=root)


if __name__ == "__main__":
    main()
