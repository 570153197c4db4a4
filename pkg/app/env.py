from dotenv import load_dotenv
import os

# Load variables from .env into environment
load_dotenv()

# Access them
GCPL_SEED = os.getenv("GCPL_SEED")
GCPL_LOG_LEVEL = os.getenv("GCPL_LOG_LEVEL", "INFO")
GCPL_WORKERS = int(os.getenv("GCPL_WORKERS", "1"))
GCPL_CONFIG = os.getenv("GCPL_CONFIG")


def seed_override() -> int | None:
    """Seed from the environment, re-read so tests can monkeypatch it."""
    raw = os.getenv("GCPL_SEED", GCPL_SEED)
    if raw is None or raw.strip() == "":
        return None
    return int(raw)
