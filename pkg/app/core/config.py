"""
Trojan Hunt Lab - Configuration
Configuracao de processo (ambiente / .env). A configuracao de cada execucao
fica no RunConfig (YAML), ver app/schemas/run.py.
"""
from pydantic_settings import BaseSettings
from functools import lru_cache
from pathlib import Path
from dotenv import load_dotenv

# Ambiente > arquivo: o .env local nunca sobrescreve variavel ja definida.
env_file = Path(__file__).parent.parent.parent / ".env"
if env_file.exists():
    load_dotenv(env_file, override=False)


class Settings(BaseSettings):
    # App
    APP_NAME: str = "Trojan Hunt Lab"
    APP_VERSION: str = "1.0.0"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s %(levelname)s %(name)s %(message)s"

    # Paralelismo entre modelos independentes (campanha / reconstrucao).
    # 1 = sequencial.
    MAX_WORKERS: int = 1

    # Confere o round-trip de cada valor escrito nos CSVs de trigger
    FLOAT_FORMAT_CHECK: bool = False

    class Config:
        extra = "ignore"
        env_file = ".env"
        case_sensitive = True


@lru_cache()
def get_settings() -> Settings:
    return Settings()


settings = get_settings()
