"""dccsim: carbon-aware data center cluster simulator and controller suite."""

__version__ = "0.1.0"

POLICY_FORMAT = "DCCPOL01"
ENV_API_VERSION = "dcc_env_v1"
SCHEMA_VERSION = 1
