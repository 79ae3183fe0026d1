"""Run manifests: enough metadata to reproduce any CLI run bit-exactly."""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    parameters: dict
    seed: int | None
    code_version: str
    started: str = ""
    finished: str = ""
    outputs: dict = field(default_factory=dict)

    def start(self) -> "RunManifest":
        self.started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        return self

    def add_output(self, path) -> None:
        self.outputs[str(path)] = file_digest(path)

    def write(self, path) -> None:
        self.finished = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        with open(path, "w") as fh:
            json.dump(
                {
                    "command": self.command,
                    "parameters": self.parameters,
                    "seed": self.seed,
                    "code_version": self.code_version,
                    "started": self.started,
                    "finished": self.finished,
                    "outputs": self.outputs,
                },
                fh,
                indent=2,
                default=str,
            )
