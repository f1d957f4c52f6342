"""
精确表缓存管理器
"""

from collections import OrderedDict
import threading
from typing import Any, Dict, Optional

from loguru import logger

from config import get_oracle_cache_config
from core.models import ExactTables


class ExactTableCache:
    """精确值表的内存缓存，支持LRU退出机制"""

    def __init__(self, config: Optional[dict] = None):
        config = config or get_oracle_cache_config()
        self.enabled = config.get("enabled", True)
        self.max_size = config.get("max_size", 512)
        self.stats_enabled = config.get("stats_enabled", True)
        self.stats = {"hits": 0, "misses": 0, "sets": 0, "evictions": 0}
        self._cache: "OrderedDict[str, ExactTables]" = OrderedDict()
        self._lock = threading.Lock()
        logger.debug(f"使用精确表缓存 (最大容量: {self.max_size})")

    def _count(self, key: str):
        if self.stats_enabled:
            self.stats[key] += 1

    def get(self, key: str) -> Optional[ExactTables]:
        if not self.enabled:
            self._count("misses")
            return None

        with self._lock:
            tables = self._cache.get(key)
            if tables is None:
                self._count("misses")
                return None
            # LRU: 移动到末尾（最近使用）
            self._cache.move_to_end(key)
            self._count("hits")
            return tables

    def set(self, key: str, tables: ExactTables):
        if not self.enabled:
            return

        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
            elif len(self._cache) >= self.max_size:
                oldest_key, _ = self._cache.popitem(last=False)
                self._count("evictions")
                logger.debug(f"LRU缓存退出: {oldest_key}")
            self._cache[key] = tables
            self._count("sets")

    def clear(self):
        with self._lock:
            self._cache.clear()
            self.stats = {"hits": 0, "misses": 0, "sets": 0, "evictions": 0}

    def get_stats(self) -> Dict[str, Any]:
        lookups = self.stats["hits"] + self.stats["misses"]
        hit_rate = self.stats["hits"] / lookups * 100 if lookups else 0.0
        return {
            **self.stats,
            "enabled": self.enabled,
            "tables": len(self._cache),
            "max_size": self.max_size,
            "lookups": lookups,
            "hit_rate": round(hit_rate, 2),
        }
