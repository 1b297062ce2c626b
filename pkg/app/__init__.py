# Trojan Hunt Lab
