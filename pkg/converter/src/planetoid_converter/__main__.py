import argparse
import sys

from .convert import DATASETS, ConversionError, PlanetoidSource, convert


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="planetoid-convert",
        description="Convert upstream citation-network distribution files "
                    "(ind.<name>.*) to a plain-text dataset bundle.")
    parser.add_argument("--name", required=True, choices=DATASETS)
    parser.add_argument("--source", required=True,
                        help="directory holding the eight ind.<name>.* files")
    parser.add_argument("--out", required=True, help="bundle output directory")
    args = parser.parse_args(argv)
    try:
        out = convert(PlanetoidSource(args.name, args.source), args.out)
    except ConversionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"bundle written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
