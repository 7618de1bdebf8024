"""Process entry point: one JSON request line in, one JSON response line out."""

import json
import os
import sys


def main() -> int:
    # Reserve the real stdout for the response line; everything the executed
    # program writes to fd 1 (prints included) is diverted to stderr.
    response_fd = os.dup(1)
    os.dup2(2, 1)
    line = sys.stdin.readline()
    try:
        request = json.loads(line)
        if not isinstance(request, dict):
            raise ValueError("request must be a JSON object")
        from tabqa_shim.runner import run_once

        response = run_once(request)
    except Exception as exc:
        response = {
            "status": "error",
            "error_type": type(exc).__name__,
            "error_message": str(exc),
        }
    payload = json.dumps(response, ensure_ascii=False, separators=(",", ":"))
    os.write(response_fd, payload.encode("utf-8") + b"\n")
    os.close(response_fd)
    return 0


if __name__ == "__main__":
    sys.exit(main())
