import logging
import sys
from typing import List, Optional

import click
import typer
from dotenv import load_dotenv

# 🔥 Cargar variables de entorno ANTES de importar settings
load_dotenv()

from core.config import settings
from core.logging_config import setup_logging
from commands import data_commands, inference_commands, train_commands
from commands.context import CLIState, LogLevel
from exceptions.base import EXIT_OK, EXIT_USAGE, BaseLEDException

logger = logging.getLogger(__name__)

# ==================== CREAR APLICACIÓN ====================

app = typer.Typer(
    name="led",
    help=f"{settings.APP_NAME} v{settings.APP_VERSION}",
    add_completion=False,
    no_args_is_help=True,
    pretty_exceptions_enable=False,
)


@app.callback()
def main(
    ctx: typer.Context,
    seed: Optional[int] = typer.Option(None, "--seed", min=0, help="Semilla global (por defecto LED_SEED)"),
    threads: Optional[int] = typer.Option(None, "--threads", min=1, help="Hilos de síntesis y evaluación"),
    log_level: Optional[LogLevel] = typer.Option(None, "--log-level", case_sensitive=False),
):
    """Opciones globales compartidas por todos los subcomandos"""
    setup_logging(log_level.value if log_level else None)
    ctx.obj = CLIState(
        seed=settings.SEED if seed is None else seed,
        threads=threads or settings.THREADS,
    )
    logger.debug(f"🔧 seed={ctx.obj.seed}, threads={ctx.obj.threads}")


# ==================== SUBCOMANDOS ====================

data_commands.register(app)
train_commands.register(app)
inference_commands.register(app)


# ==================== CÓDIGOS DE SALIDA ====================

def run(argv: Optional[List[str]] = None) -> int:
    """
    Ejecuta la CLI y devuelve el código de salida:
    0 éxito, 2 uso incorrecto, 3 error de datos o formato, 4 fallo numérico.
    """
    try:
        result = app(args=argv, prog_name="led", standalone_mode=False)
    except click.UsageError as e:
        click.echo(f"❌ {e.format_message()}", err=True)
        return EXIT_USAGE
    except (click.ClickException, click.Abort) as e:
        click.echo(f"❌ {e}", err=True)
        return EXIT_USAGE
    except BaseLEDException as e:
        logger.error(f"❌ {e.detail}")
        return e.exit_code
    return result if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(run())
