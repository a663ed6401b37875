import argparse
import logging
import sys

from .backends import make_backend
from .binding import BindingError, KernelBinding
from .server import PROTOCOL_VERSION, serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ktune-triton-runner",
        description="Benchmark runner speaking the ktune wire protocol on stdio",
    )
    parser.add_argument("--binding", required=True, help="kernel binding file (JSON)")
    parser.add_argument("--protocol", type=int, default=PROTOCOL_VERSION)
    parser.add_argument("--backend", choices=["triton", "stub"], default="triton",
                        help="stub runs without a GPU (protocol tests)")
    parser.add_argument("--log-level", default="warning")
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr)
    if args.protocol != PROTOCOL_VERSION:
        print(
            f"unsupported protocol {args.protocol}; this runner speaks {PROTOCOL_VERSION}",
            file=sys.stderr,
        )
        return 1
    try:
        binding = KernelBinding.load(args.binding)
        backend = make_backend(args.backend, binding)
    except (BindingError, RuntimeError, ImportError) as e:
        print(f"ktune-triton-runner: {e}", file=sys.stderr)
        return 1
    return serve(binding, backend)


if __name__ == "__main__":
    sys.exit(main())
