"""
BolumZ - Merkezi Konfigürasyon
Tüm varsayılanlar burada tanımlı. .env dosyasından okunur.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# === .env YÜKLE ===
BASE_DIR = Path(__file__).parent.resolve()
load_dotenv(BASE_DIR / ".env")


def get_env(key: str, default: str = "") -> str:
    """Environment variable okur, yoksa default döner."""
    return os.getenv(key, default)


def get_env_int(key: str, default: int = 0) -> int:
    """Environment variable'ı int olarak okur."""
    try:
        return int(os.getenv(key, str(default)))
    except ValueError:
        return default


def get_env_float(key: str, default: float = 0.0) -> float:
    """Environment variable'ı float olarak okur."""
    try:
        return float(os.getenv(key, repr(default)))
    except ValueError:
        return default


def get_env_list(key: str, default: list = None) -> list:
    """Environment variable'ı virgülle ayrılmış liste olarak okur."""
    if default is None:
        default = []
    value = os.getenv(key)
    if value:
        return [item.strip() for item in value.split(",")]
    return default


# === ÇÖZÜCÜ VARSAYILANLARI ===
# d <= 7 için güvenli: 7 * e^-2 < 1
DEFAULT_BETA = get_env_float("BOLUMZ_BETA", 1.0)
DEFAULT_MU = get_env_float("BOLUMZ_MU", -2.0)
DEFAULT_GAMMA = get_env_float("BOLUMZ_GAMMA", 0.99)
DEFAULT_TOL = get_env_float("BOLUMZ_TOL", 1e-12)
DEFAULT_DAMPING = get_env_float("BOLUMZ_DAMPING", 1.0)
DEFAULT_SEED = get_env_int("BOLUMZ_SEED", 0)

# === ORAKIL ===
ORACLE_CAP = get_env_int("BOLUMZ_ORACLE_CAP", 10_000_000)
CYCLIC_MAX_LEN_FACTOR = get_env_int("BOLUMZ_CYCLIC_MAX_LEN_FACTOR", 10)

# === ÖĞRENME ===
DEFAULT_ALPHA = get_env_float("BOLUMZ_ALPHA", 0.5)
DEFAULT_EPSILON = get_env_float("BOLUMZ_EPSILON", 0.1)
DEFAULT_EPISODES = get_env_int("BOLUMZ_EPISODES", 1000)
DEFAULT_SCHEDULE = get_env("BOLUMZ_SCHEDULE", "visit")
DEFAULT_EXPLORATION = get_env("BOLUMZ_EXPLORATION", "epsilon_greedy")

# === ÇIKTI ===
DEFAULT_FORMAT = get_env("BOLUMZ_FORMAT", "csv")
DEFAULT_BETAS = [float(b) for b in get_env_list("BOLUMZ_BETAS", ["0", "1", "5", "50"])]
SWEEP_WORKERS = get_env_int("BOLUMZ_WORKERS", 1)

# === LOGGING ===
LOG_LEVEL = get_env("BOLUMZ_LOG_LEVEL", "WARNING").upper()


def print_config():
    """Mevcut konfigürasyonu yazdırır (debug için)."""
    print("=== BolumZ Konfigürasyonu ===")
    print(f"BASE_DIR: {BASE_DIR}")
    print(f"BETA: {DEFAULT_BETA}  MU: {DEFAULT_MU}  GAMMA: {DEFAULT_GAMMA}")
    print(f"TOL: {DEFAULT_TOL}  DAMPING: {DEFAULT_DAMPING}  SEED: {DEFAULT_SEED}")
    print(f"ORACLE_CAP: {ORACLE_CAP}")
    print(f"ALPHA: {DEFAULT_ALPHA}  EPSILON: {DEFAULT_EPSILON}  SCHEDULE: {DEFAULT_SCHEDULE}")
    print(f"FORMAT: {DEFAULT_FORMAT}  WORKERS: {SWEEP_WORKERS}")
    print(f"LOG_LEVEL: {LOG_LEVEL}")
    print("=" * 35)


if __name__ == "__main__":
    print_config()
