"""Jerarquía de excepciones del toolkit LED.

Cada excepción lleva un ``exit_code`` que ``main.py`` devuelve al sistema
operativo, igual que antes cada excepción de la API llevaba su ``status_code``.
"""

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class BaseLEDException(Exception):
    """Excepción base para todas las excepciones del toolkit"""
    def __init__(self, detail: str, exit_code: int = EXIT_DATA):
        self.detail = detail
        self.exit_code = exit_code
        super().__init__(self.detail)


class UsageException(BaseLEDException):
    """Flags o claves de configuración inválidas (2)"""
    def __init__(self, detail: str = "Uso incorrecto"):
        super().__init__(detail=detail, exit_code=EXIT_USAGE)


class ValidationException(BaseLEDException):
    """Valores que violan un invariante del dominio (3)"""
    def __init__(self, detail: str = "Error de validación"):
        super().__init__(detail=detail, exit_code=EXIT_DATA)


class DataFormatException(BaseLEDException):
    """Error de datos o de formato de archivo (3)"""
    def __init__(self, detail: str = "Formato de datos inválido"):
        super().__init__(detail=detail, exit_code=EXIT_DATA)


class CorruptContainerException(DataFormatException):
    """Contenedor binario con magic, versión, checksum o longitud incorrectos"""
    def __init__(self, path: str, reason: str):
        super().__init__(detail=f"Contenedor corrupto '{path}': {reason}")


class ShapeException(DataFormatException):
    """Dimensiones incompatibles entre tensores"""
    def __init__(self, detail: str):
        super().__init__(detail=detail)


class PhaseException(DataFormatException):
    """Transición de fase ilegal o operación no permitida en la fase actual"""
    def __init__(self, current: str, operation: str):
        super().__init__(detail=f"Operación '{operation}' no permitida en fase '{current}'")


class InsufficientDataException(DataFormatException):
    """No hay suficientes entradas para la operación solicitada"""
    def __init__(self, detail: str):
        super().__init__(detail=detail)


class UnderdeterminedException(BaseLEDException):
    """Menos de dos puntos: la recta de ganancia no se puede determinar"""
    def __init__(self, n_points: int):
        super().__init__(
            detail=f"Recta indeterminada: se necesitan al menos 2 puntos, hay {n_points}",
            exit_code=EXIT_DATA,
        )


class DegenerateException(BaseLEDException):
    """Todos los puntos comparten la misma ganancia K"""
    def __init__(self, k_value: float):
        super().__init__(
            detail=f"Recta degenerada: todos los puntos tienen K={k_value}",
            exit_code=EXIT_DATA,
        )


class GraphException(BaseLEDException):
    """backward sobre un tensor sin grafo registrado"""
    def __init__(self, detail: str = "El tensor no tiene grafo registrado"):
        super().__init__(detail=detail, exit_code=EXIT_DATA)


class NumericException(BaseLEDException):
    """Pérdida NaN o infinita durante el entrenamiento (4)"""
    def __init__(self, detail: str = "Fallo numérico"):
        super().__init__(detail=detail, exit_code=EXIT_NUMERIC)
