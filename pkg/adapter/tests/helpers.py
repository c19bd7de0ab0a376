"""Test utilities: a live uvicorn server wrapper and tiny dataset fixtures."""
from __future__ import annotations

import threading
import time

import uvicorn

WORDS = ("angora", "router", "wheel", "administration", "powder", "bank")


def tiny_dataset_tsv(n: int = 6) -> str:
    lines = []
    for i in range(n):
        word = WORDS[i % len(WORDS)]
        phrase = f"{word} case {i}"
        images = "\t".join(f"image{i}_{j}.jpg" for j in range(10))
        lines.append(f"{word}\t{phrase}\t{images}")
    return "\n".join(lines) + "\n"


def gold_tsv(n: int = 6) -> str:
    return "".join(f"image{i}_{(i * 3) % 10}.jpg\n" for i in range(n))


class LiveServer:
    """Run a FastAPI app on an ephemeral port for the duration of a test."""

    def __init__(self, app):
        self._config = uvicorn.Config(app, host="127.0.0.1", port=0,
                                      log_level="warning")
        self._server = uvicorn.Server(self._config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    def __enter__(self) -> str:
        self._thread.start()
        deadline = time.time() + 10
        while not self._server.started:
            if time.time() > deadline:
                raise RuntimeError("embed service did not start")
            time.sleep(0.01)
        port = self._server.servers[0].sockets[0].getsockname()[1]
        return f"http://127.0.0.1:{port}"

    def __exit__(self, *exc) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=10)
