"""Run every verification suite on the reference configuration and write the reports."""
import argparse
import time

from npc.config import load
from npc.harness import reference_config, run_suite, write_reports


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--out", default="out/verify")
    args = ap.parse_args()
    cfg = load(args.config) if args.config else reference_config()
    t0 = time.perf_counter()
    reports = run_suite("all", cfg, threads=args.threads)
    for r in reports:
        print(f"{r.line()}  [{r.seconds:.1f}s]")
    csv_path, _ = write_reports(reports, args.out)
    print(f"{sum(r.passed for r in reports)}/{len(reports)} passed in {time.perf_counter() - t0:.0f}s; "
          f"reports in {csv_path.parent}")


if __name__ == "__main__":
    main()
