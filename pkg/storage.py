"""
BolumZ - Dosya Modülü
MDP JSON okuma/yazma ve sonuç tablolarının atomik (geçici dosya + yeniden adlandırma) yazımı.
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Optional

import pandas as pd

from mdp_core import Mdp, MdpFormatError, build_mdp, to_spec

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json")


# === MDP DOSYALARI ===
def load_mdp(path: str | Path) -> Mdp:
    """MDP JSON dosyasını okur.

    Şema: {"states": [...], "terminal": {id: ödül}, "transitions": [{"from", "action", "to": [...]}]}
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise MdpFormatError(f"{path}: geçersiz JSON ({e})") from e

    if not isinstance(data, dict):
        raise MdpFormatError(f"{path}: üst düzey nesne bekleniyordu")
    missing = [key for key in ("states", "terminal", "transitions") if key not in data]
    if missing:
        raise MdpFormatError(f"{path}: eksik alan(lar): {', '.join(missing)}")
    if not isinstance(data["terminal"], dict) or not isinstance(data["transitions"], list):
        raise MdpFormatError(f"{path}: 'terminal' nesne, 'transitions' liste olmalı")

    mdp = build_mdp(
        data["states"], data["terminal"], data["transitions"], data.get("reward_shift", 0.0)
    )
    logger.info(f"MDP yüklendi: {path} ({mdp.n_states} durum)")
    return mdp


def save_mdp(mdp: Mdp, path: str | Path) -> None:
    """Mdp'yi load_mdp'nin okuyacağı şemada yazar."""
    text = json.dumps(to_spec(mdp), ensure_ascii=False, indent=2) + "\n"
    atomic_write(path, text)


# === TABLO ÇIKTISI ===
def atomic_write(path: str | Path, text: str) -> None:
    """Aynı dizinde geçici dosyaya yazıp os.replace ile yerine koyar; yarım dosya kalmaz."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.remove(tmp)
        except OSError:
            pass
        raise


def render_table(records: list[dict], fmt: str, columns: Optional[list[str]] = None) -> str:
    """Kayıtları CSV (17 anlamlı basamak, '\\n' satır sonu) ya da JSON dizisine çevirir."""
    if fmt == "csv":
        df = pd.DataFrame.from_records(records, columns=columns)
        return df.to_csv(index=False, float_format="%.17g", lineterminator="\n")
    if fmt == "json":
        if columns is not None:
            records = [{key: row.get(key) for key in columns} for row in records]
        return json.dumps(records, ensure_ascii=False, indent=2) + "\n"
    raise ValueError(f"Bilinmeyen çıktı biçimi: {fmt}")


def emit_table(records: list[dict], fmt: str, path: str | Path, columns: Optional[list[str]] = None) -> None:
    """Sonuç tablosunu atomik olarak yazar. Boş kayıt listesi CSV'de yalnızca başlık üretir."""
    atomic_write(path, render_table(records, fmt, columns))
    logger.info(f"{len(records)} satır yazıldı: {path}")
