"""Logging setup shared by the command line entry points."""

import logging

LINE_FORMAT = "[%(asctime)s] %(name)s %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def configure(debug: bool = False) -> None:
    root = logging.getLogger("wpos")
    root.handlers.clear()
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LINE_FORMAT, DATE_FORMAT))
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if debug else logging.INFO)
