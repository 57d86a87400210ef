import os
from typing import Iterable, Optional  # noqa


# namespace for config keys loaded from e.g. Django conf or env vars
CONFIG_NAMESPACE = os.getenv('ACCDECODER_CONFIG_NAMESPACE', 'ACCDECODER')

# optional import path to file containing namespaced config (e.g. 'django.conf.settings')
APP_CONFIG = os.getenv('ACCDECODER_APP_CONFIG', None)  # type: Optional[str]

# run-config used by the CLI when `-c` is omitted
DEFAULT_CONFIG_PATH = os.getenv('ACCDECODER_CONFIG', None)  # type: Optional[str]


# import paths to modules containing `register_enhancer` / `register_detector` calls
REGISTRATION_IMPORTS = ()  # type: Iterable[str]


# binarization threshold for |Laplacian(residual)|, 8-bit units
LAPLACIAN_THRESHOLD = 8

# frames per scheduling decision
CHUNK_SIZE = 30

# key-frame descriptor: side of the box-filtered thumbnail and projection seed
DESCRIPTOR_SIDE = 32
DESCRIPTOR_SEED = 1000

# HR frames kept by the transfer pipeline, keyed by coding index
ANCHOR_CACHE_CAPACITY = 8

LOG_LEVEL = os.getenv('ACCDECODER_LOG_LEVEL', 'INFO')
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'
