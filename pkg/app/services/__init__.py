"""
Trojan Hunt Lab - Services
Uma etapa do pipeline por modulo.
"""
