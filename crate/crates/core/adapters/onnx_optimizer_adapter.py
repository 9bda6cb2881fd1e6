"""difftox optimizer adapter around onnxoptimizer.

  --list-passes                          one pass per line, "\tdefault" for bundle members
  --input P --output Q --passes a,b      apply the listed passes in order
  --input P --output Q --default         apply the fusion/elimination bundle
  --check P                              exit 0 when valid, 3 with reasons on stdout
"""

import argparse
import sys

BUNDLE_PREFIXES = ("fuse_", "eliminate_")


def list_passes():
    import onnxoptimizer

    bundle = set(onnxoptimizer.get_fuse_and_elimination_passes())
    for name in onnxoptimizer.get_available_passes():
        print(name + ("\tdefault" if name in bundle else ""))
    return 0


def default_passes():
    import onnxoptimizer

    return [p for p in onnxoptimizer.get_fuse_and_elimination_passes() if p.startswith(BUNDLE_PREFIXES)]


def optimize(src, dst, passes):
    import onnx
    import onnxoptimizer

    model = onnx.load(src)
    optimized = onnxoptimizer.optimize(model, passes)
    onnx.save(optimized, dst)
    return 0


def check(path):
    import onnx

    try:
        model = onnx.load(path)
        onnx.checker.check_model(model)
    except Exception as exc:  # any checker or parse failure means malformed
        for line in str(exc).strip().splitlines() or [type(exc).__name__]:
            print(line)
        return 3
    return 0


def main(argv):
    ap = argparse.ArgumentParser()
    ap.add_argument("--list-passes", action="store_true")
    ap.add_argument("--check")
    ap.add_argument("--input")
    ap.add_argument("--output")
    ap.add_argument("--passes")
    ap.add_argument("--default", action="store_true")
    args = ap.parse_args(argv)

    if args.list_passes:
        return list_passes()
    if args.check:
        return check(args.check)
    if not args.input or not args.output or (args.passes is None) == (not args.default):
        ap.error("need --input, --output and exactly one of --passes/--default")
    passes = default_passes() if args.default else [p for p in args.passes.split(",") if p]
    return optimize(args.input, args.output, passes)


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
