"""
工具函数
"""

import csv
import hashlib
import json
from pathlib import Path
import sys
from typing import Any, Dict, Iterable, Sequence

from loguru import logger
import numpy as np

from config import LOGS_DIR
from core.exceptions import ResultIOError
from core.schemas import ManifestFile

MANIFEST_NAME = "manifest.json"

_LOGGING_READY = False


def setup_logging(level: str = "INFO"):
    """设置日志"""
    global _LOGGING_READY
    if _LOGGING_READY:
        return
    logger.remove()
    logger.add(sys.stderr, level=level.upper())
    logger.add(
        str(LOGS_DIR / "b2mapo.log"),
        rotation="1 day",
        retention="7 days",
        level="INFO",
        format="{time:YYYY-MM-DD HH:mm:ss} | {level} | {message}",
    )
    _LOGGING_READY = True


def generate_cache_key(*arrays: np.ndarray, tag: str = "") -> str:
    """生成缓存键"""
    digest = hashlib.md5(tag.encode())
    for array in arrays:
        array = np.ascontiguousarray(array)
        digest.update(str(array.shape).encode())
        digest.update(array.tobytes())
    return digest.hexdigest()


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """由主种子和流编号派生独立的随机数生成器"""
    return np.random.default_rng([int(seed), *[int(s) for s in stream]])


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """数值稳定的 softmax"""
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    weights = np.exp(shifted)
    return weights / np.sum(weights, axis=axis, keepdims=True)


def format_number(value: float) -> str:
    """12 位有效数字，与区域设置无关"""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".12g")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """写出带表头的 CSV，数值统一格式化"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow(
                    [
                        cell if isinstance(cell, str) else format_number(cell)
                        for cell in row
                    ]
                )
    except OSError as e:
        logger.error(f"写入文件失败: {path}: {e}")
        raise ResultIOError(f"无法写入 {path}: {e}") from e
    return path


def read_csv(path: Path) -> list:
    """读取 CSV 为字典列表"""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            return list(csv.DictReader(handle))
    except OSError as e:
        raise ResultIOError(f"无法读取 {path}: {e}") from e


def write_curve(path: Path, columns: Sequence[str], points: Iterable[Sequence]) -> Path:
    """绘图数据：首行 `# x y` 注释，其后空格分隔的数值列"""
    path = Path(path)
    lines = ["# " + " ".join(columns)]
    lines += [" ".join(format_number(v) for v in point) for point in points]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        logger.error(f"写入文件失败: {path}: {e}")
        raise ResultIOError(f"无法写入 {path}: {e}") from e
    return path


def write_manifest(directory: Path, command: str, config: Dict[str, Any]) -> Path:
    """列出目录下的输出文件并写入 manifest.json"""
    directory = Path(directory)
    files = sorted(
        str(p.relative_to(directory))
        for p in directory.rglob("*")
        if p.is_file() and p.name != MANIFEST_NAME
    )
    manifest = ManifestFile(command=command, files=files, config=config)
    path = directory / MANIFEST_NAME
    try:
        path.write_text(
            json.dumps(
                manifest.model_dump(), indent=2, ensure_ascii=False, default=str
            ),
            encoding="utf-8",
        )
    except OSError as e:
        raise ResultIOError(f"无法写入 {path}: {e}") from e
    return path
