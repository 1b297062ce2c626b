"""
Trojan Hunt Lab - CLI
Ver app/main.py para os subcomandos.

Uso:
    python hunt_cli.py <subcomando> --config run.yaml
"""
import sys

from app.main import run

if __name__ == "__main__":
    sys.exit(run())
