"""In-sandbox runner for generated table-answering functions.

Speaks the single-line JSON protocol documented in docs/shim_protocol.md:
one request on stdin (program body, table path, function name, format), one
response on stdout, exit status 0 even when the program fails.
"""

from tabqa_shim.runner import build_source, load_dataframe, run_once, serialize_value

__all__ = ["build_source", "load_dataframe", "run_once", "serialize_value"]
__version__ = "0.1.0"
