"""Parameter counts, FLOPs and relative energy for the three models next to the comparison rows."""

import argparse
from pathlib import Path

from greenleaf.models import ARCHITECTURES, build_model
from greenleaf.profiler import PUBLISHED_ROWS, profile_report, to_csv, to_text


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=None, help="directory for profile CSVs")
    args = ap.parse_args()

    built = profile_report([build_model(a) for a in ARCHITECTURES], include_reference_rows=True)
    published = profile_report(extra_rows=PUBLISHED_ROWS, with_flops=False)
    print("built models + reference rows\n")
    print(to_text(built))
    print("\npublished parameter counts only\n")
    print(to_text(published))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "built.csv").write_text(to_csv(built))
        (args.out / "published.csv").write_text(to_csv(published))


if __name__ == "__main__":
    main()
