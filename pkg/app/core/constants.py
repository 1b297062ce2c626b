"""
Trojan Hunt Lab - Constantes da competicao
"""

TRIGGER_LENGTH = 75
N_CHANNELS = 3
TRIGGER_SIZE = TRIGGER_LENGTH * N_CHANNELS  # 225 termos no NMAE_range

DEFAULT_CHANNEL_IDS = ("44", "45", "46")

COMPETITION_SIZE = 45
MAX_MODEL_ID = 45

# Par de copias: A inteira no contexto, B exatamente sobre o horizonte
DEFAULT_PAIR_SEPARATION = 2 * TRIGGER_LENGTH

PUBLIC_FRACTION = 0.33
