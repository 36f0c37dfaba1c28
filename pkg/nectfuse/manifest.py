import dataclasses
import hashlib
import os
import typing

import ujson

from nectfuse import __version__


def file_digest(path: str, chunk_size: int = 1 << 16) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as ifile:
        for chunk in iter(lambda: ifile.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclasses.dataclass
class RunManifest(object):
    """What a command read, how it was configured and what it wrote."""

    command: str
    arguments: typing.Dict[str, typing.Any]
    config: typing.Dict[str, typing.Any]
    seed: typing.Optional[int] = None
    inputs: typing.Dict[str, str] = dataclasses.field(default_factory=dict)
    outputs: typing.Dict[str, str] = dataclasses.field(default_factory=dict)
    version: str = __version__
    wall_time: float = 0.0

    def add_input(self, path: typing.Optional[str]) -> None:
        if path is not None:
            self.inputs[path] = file_digest(path)

    def add_outputs(self, directory: str, names: typing.Iterable[str]) -> None:
        for name in names:
            self.outputs[name] = file_digest(os.path.join(directory, name))

    def to_json(self) -> str:
        return ujson.dumps(
            dataclasses.asdict(self),
            indent=2,
            sort_keys=True,
            escape_forward_slashes=False,
        )

    def write(self, path: str) -> None:
        with open(path, "w") as ofile:
            ofile.write(self.to_json())
            ofile.write("\n")

    @classmethod
    def read(cls, path: str) -> "RunManifest":
        with open(path) as ifile:
            return cls(**ujson.loads(ifile.read()))
