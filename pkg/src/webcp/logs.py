"""Line-delimited JSON event logging.

Pipeline stages and the miner emit one JSON object per event so runs can
be grepped and post-processed; ordinary library code uses plain loggers.
"""

import json
import logging
import time

_root = logging.getLogger("webcp")


def get_logger(name: str) -> logging.Logger:
    return _root.getChild(name)


def emit_event(logger: logging.Logger, stage: str, event: str, **fields) -> None:
    record = {"ts": round(time.time(), 3), "stage": stage, "event": event}
    record.update(fields)
    logger.info(json.dumps(record, sort_keys=True, default=str))
