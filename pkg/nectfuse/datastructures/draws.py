import dataclasses
import typing

import numpy as np
import pandas as pd

from nectfuse.exceptions import SchemaError

STAT_COLUMNS = (
    "chain",
    "iteration",
    "divergent",
    "tree_depth",
    "energy",
    "step_size",
    "accept_stat",
    "n_leapfrog",
    "max_depth_hit",
)


@dataclasses.dataclass(frozen=True)
class SamplerStats(object):
    tree_depth: np.ndarray
    divergent: np.ndarray
    step_size: np.ndarray
    energy: np.ndarray
    accept_stat: np.ndarray
    n_leapfrog: np.ndarray
    max_depth_hit: np.ndarray

    @classmethod
    def concatenate(cls, parts: typing.Sequence["SamplerStats"]) -> "SamplerStats":
        return cls(
            **{
                field.name: np.concatenate([getattr(part, field.name) for part in parts])
                for field in dataclasses.fields(cls)
            }
        )

    @property
    def divergence_rate(self) -> float:
        if self.divergent.size == 0:
            return 0.0
        return float(np.mean(self.divergent))


@dataclasses.dataclass(frozen=True)
class DrawsMatrix(object):
    """Retained draws of every chain, one row per draw and one column per quantity."""

    names: typing.Tuple[str, ...]
    draws: np.ndarray
    chain_id: np.ndarray
    iteration: np.ndarray
    sampler_stats: SamplerStats

    def __post_init__(self) -> None:
        if len(set(self.names)) != len(self.names):
            raise SchemaError("quantity names must be unique")
        if self.draws.ndim != 2 or self.draws.shape[1] != len(self.names):
            raise SchemaError(
                f"draws of shape {self.draws.shape} do not match "
                f"{len(self.names)} names"
            )
        if len(self.chain_id) != self.draws.shape[0]:
            raise SchemaError("one chain label is needed per draw")

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def n_chains(self) -> int:
        return len(np.unique(self.chain_id))

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def column(self, name: str) -> np.ndarray:
        try:
            return self.draws[:, self.names.index(name)]
        except ValueError:
            raise KeyError(f"no quantity named `{name}`")

    def by_chain(self, name: str) -> np.ndarray:
        """``(chains, draws)`` array of one quantity; chains are cut to equal length."""
        values = self.column(name)
        chains = [values[self.chain_id == chain] for chain in np.unique(self.chain_id)]
        length = min(len(chain) for chain in chains)
        return np.stack([chain[:length] for chain in chains])

    def block(self, prefix: str) -> typing.List[str]:
        """Names of the elements of one block, e.g. ``phi`` -> ``phi[1]``, ``phi[2]``."""
        return [
            name
            for name in self.names
            if name == prefix or name.startswith(prefix + "[")
        ]

    def select(self, names: typing.Sequence[str]) -> "DrawsMatrix":
        indexes = [self.names.index(name) for name in names]
        return dataclasses.replace(
            self, names=tuple(names), draws=self.draws[:, indexes]
        )

    def with_columns(
        self, names: typing.Sequence[str], values: np.ndarray
    ) -> "DrawsMatrix":
        values = np.asarray(values, dtype=float).reshape(self.n_draws, len(names))
        return dataclasses.replace(
            self,
            names=self.names + tuple(names),
            draws=np.hstack([self.draws, values]),
        )

    def to_frame(self) -> pd.DataFrame:
        stats = self.sampler_stats
        frame = pd.DataFrame(
            {
                "chain": self.chain_id.astype(int),
                "iteration": self.iteration.astype(int),
                "divergent": stats.divergent.astype(int),
                "tree_depth": stats.tree_depth.astype(int),
                "energy": stats.energy,
                "step_size": stats.step_size,
                "accept_stat": stats.accept_stat,
                "n_leapfrog": stats.n_leapfrog.astype(int),
                "max_depth_hit": stats.max_depth_hit.astype(int),
            }
        )
        values = pd.DataFrame(self.draws, columns=list(self.names))
        return pd.concat([frame, values], axis=1)

    def to_csv(self, path: str, delimiter: str = ",") -> None:
        self.to_frame().to_csv(path, sep=delimiter, index=False)

    @classmethod
    def from_csv(cls, path: str, delimiter: str = ",") -> "DrawsMatrix":
        frame = pd.read_csv(path, sep=delimiter, float_precision="round_trip")
        missing = [column for column in STAT_COLUMNS if column not in frame.columns]
        if missing:
            raise SchemaError(f"draws file is missing columns {missing}")

        names = [column for column in frame.columns if column not in STAT_COLUMNS]
        stats = SamplerStats(
            tree_depth=frame["tree_depth"].to_numpy(dtype=int),
            divergent=frame["divergent"].to_numpy(dtype=bool),
            step_size=frame["step_size"].to_numpy(dtype=float),
            energy=frame["energy"].to_numpy(dtype=float),
            accept_stat=frame["accept_stat"].to_numpy(dtype=float),
            n_leapfrog=frame["n_leapfrog"].to_numpy(dtype=int),
            max_depth_hit=frame["max_depth_hit"].to_numpy(dtype=bool),
        )
        return cls(
            names=tuple(names),
            draws=frame[names].to_numpy(dtype=float),
            chain_id=frame["chain"].to_numpy(dtype=int),
            iteration=frame["iteration"].to_numpy(dtype=int),
            sampler_stats=stats,
        )

    @classmethod
    def from_arrays(
        cls,
        values: np.ndarray,
        names: typing.Sequence[str] = None,
        chain_id: np.ndarray = None,
    ) -> "DrawsMatrix":
        """Wrap externally produced draws (fixtures, iid samples) with empty stats."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        n_draws, n_columns = values.shape
        if names is None:
            names = [f"x[{index + 1}]" for index in range(n_columns)]
        if chain_id is None:
            chain_id = np.ones(n_draws, dtype=int)
        chain_id = np.asarray(chain_id, dtype=int)
        iteration = np.zeros(n_draws, dtype=int)
        for chain in np.unique(chain_id):
            mask = chain_id == chain
            iteration[mask] = np.arange(1, mask.sum() + 1)
        stats = SamplerStats(
            tree_depth=np.zeros(n_draws, dtype=int),
            divergent=np.zeros(n_draws, dtype=bool),
            step_size=np.full(n_draws, np.nan),
            energy=np.full(n_draws, np.nan),
            accept_stat=np.full(n_draws, np.nan),
            n_leapfrog=np.zeros(n_draws, dtype=int),
            max_depth_hit=np.zeros(n_draws, dtype=bool),
        )
        return cls(
            names=tuple(names),
            draws=values,
            chain_id=chain_id,
            iteration=iteration,
            sampler_stats=stats,
        )


def parse_name(name: str) -> typing.Tuple[str, str]:
    """``"L_R[3,2]"`` -> ``("L_R", "3,2")``; scalars get an empty element."""
    if name.endswith("]") and "[" in name:
        parameter, element = name[:-1].split("[", 1)
        return parameter, element
    return name, ""


def element_index(name: str) -> typing.Tuple[int, ...]:
    """Zero-based index tuple of an element name, ``"L_R[3,2]"`` -> ``(2, 1)``."""
    _, element = parse_name(name)
    if element == "":
        return ()
    return tuple(int(part) - 1 for part in element.split(","))
