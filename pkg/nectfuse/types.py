import typing

import numpy as np

Array = np.ndarray
RandomStream = np.random.Generator

ValueAndGrad = typing.Callable[[Array], typing.Tuple[float, Array]]
Constrain = typing.Callable[[Array], Array]
