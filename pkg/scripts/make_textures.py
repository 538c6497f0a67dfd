"""Write the procedural texture dataset as a class-per-directory PPM tree."""

import argparse

from vitmat.synthetic import ACCEPTANCE_COUNTS, write_texture_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", help="destination root")
    ap.add_argument("--counts", type=int, nargs="+", default=list(ACCEPTANCE_COUNTS))
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    root = write_texture_dataset(args.out, args.counts, args.size, args.seed)
    print(f"wrote {sum(args.counts)} images under {root}")


if __name__ == "__main__":
    main()
