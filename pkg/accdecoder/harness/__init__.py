from accdecoder.harness.config import RunConfig, load_run_config  # noqa
from accdecoder.harness.runner import (  # noqa
    ChunkReport,
    run_accdecoder,
    run_baseline_all_infer,
    run_baseline_all_reuse,
    run_baseline_all_sr,
)
from accdecoder.harness.bench import bench  # noqa
from accdecoder.harness.report import report_breakdown  # noqa
