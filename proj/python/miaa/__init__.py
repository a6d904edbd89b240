"""Integrated ad auction and allocation lab (python surface)."""

import sys

from ._miaa import (  # noqa: F401
    __version__,
    avito_simulated_ctr_means,
    enumerate_allocations,
    reward_loss,
    run_cli,
    run_vcg,
    sample_requests,
    softmax,
    winning_probs,
)


def main() -> int:
    return run_cli(sys.argv[1:])


if __name__ == "__main__":
    raise SystemExit(main())
