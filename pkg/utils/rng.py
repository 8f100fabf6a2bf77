"""
Flujos aleatorios reproducibles.

Cada consumidor deriva su propio ``Generator`` de una ``SeedSequence`` con la
clave (seed, flujo, iteración, ítem); así el resultado no depende del orden
de ejecución ni del número de hilos.
"""
from enum import IntEnum

import numpy as np

from exceptions.base import ValidationException


class Stream(IntEnum):
    """Identificadores de flujo: nunca reordenar, cambiaría todos los resultados"""
    INIT = 0
    CAMERA = 1
    CLEAN = 2
    SYNTH = 3
    BATCH = 4
    FEWSHOT = 5
    FIXED_PATTERN = 6
    EVAL = 7


def get_rng(seed: int, stream: Stream = Stream.INIT, iteration: int = 0, item: int = 0) -> np.random.Generator:
    """Generator independiente para (seed, flujo, iteración, ítem)"""
    if seed < 0:
        raise ValidationException(f"La semilla debe ser no negativa, recibido {seed}")
    sequence = np.random.SeedSequence([int(seed), int(stream), int(iteration), int(item)])
    return np.random.default_rng(sequence)
