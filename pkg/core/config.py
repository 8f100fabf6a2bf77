import os
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

# Cargar variables de entorno
load_dotenv()


class Settings(BaseSettings):
    """Configuración centralizada del proceso"""

    # ============================================
    #   APLICACIÓN
    # ============================================
    APP_NAME: str = "LED - Denoising RAW sin calibración"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = os.getenv("LED_DEBUG", "False").lower() in ("true", "1", "yes")
    LOG_LEVEL: str = "INFO"

    # ============================================
    #   REPRODUCIBILIDAD
    # ============================================
    SEED: int = 0
    THREADS: int = 1

    # ============================================
    #   SENSOR (niveles por defecto, 14 bits)
    # ============================================
    BLACK_LEVEL: float = 512.0
    WHITE_LEVEL: float = 16383.0

    # ============================================
    #   ENTRENAMIENTO
    # ============================================
    TRACE_FLUSH_EVERY: int = 50
    VIRTUAL_CAMERAS: int = 5

    # ============================================
    #   ARCHIVOS
    # ============================================
    LOCK_TIMEOUT_SECONDS: float = 30.0

    model_config = SettingsConfigDict(
        env_prefix="LED_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )


# Instancia única de configuración
settings = Settings()
