"""
Writes generated gadgets to disk: the stream in the text stream format and the read
timetable as JSON lines.
"""

import logging
import os
from typing import List, Tuple

from dpstream.streamio import write_stream
from harness.gadgets import GadgetInstance, TimetableEntry

logger = logging.getLogger(__name__)


def dump_gadget(instance: GadgetInstance, stream_path: str, timetable_path: str) -> Tuple[str, str]:
    """
    Write a gadget's stream and timetable.

    Args:
        instance (GadgetInstance): Generated gadget
        stream_path (str): Destination of the stream file
        timetable_path (str): Destination of the JSON-lines timetable

    Returns:
        Tuple[str, str]: The two paths written
    """
    write_stream(instance.stream, stream_path)
    os.makedirs(os.path.dirname(os.path.abspath(timetable_path)), exist_ok=True)
    with open(timetable_path, "w", encoding="utf-8") as f:
        for entry in instance.timetable:
            f.write(entry.model_dump_json() + "\n")
    logger.info(f"Wrote timetable of {instance.label} ({len(instance.timetable)} rows) to {timetable_path}")
    return stream_path, timetable_path


def read_timetable(path: str) -> List[TimetableEntry]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"timetable file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return [TimetableEntry.model_validate_json(line) for line in f if line.strip()]
