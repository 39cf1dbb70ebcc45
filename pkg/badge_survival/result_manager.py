"""
結果管理模塊 - 管理和存儲分析結果

此模塊提供以下功能：
- 由結果內容生成確定性的結果 ID
- 原子地保存 TSV 表格與 JSON 摘要
- 讀取和列出已保存的結果
"""

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


def _to_builtin(value: Any) -> Any:
    """json default hook for numpy scalars, arrays and enums"""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if hasattr(value, "value"):
        return value.value
    return str(value)


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=_to_builtin)


def write_text_atomic(path: Union[str, os.PathLike], text: str) -> str:
    """寫入臨時文件後以 os.replace 替換，讀者不會看到半寫的文件"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)
    return str(path)


class ResultManager:
    """結果管理器 - 負責表格與摘要的存儲和檢索"""

    def __init__(self, results_dir: str = "results"):
        """
        初始化結果管理器

        Args:
            results_dir: 存儲結果的目錄路徑
        """
        self.results_dir = str(results_dir)
        self._ensure_results_dir()

    def _ensure_results_dir(self):
        """確保結果目錄存在"""
        os.makedirs(self.results_dir, exist_ok=True)

    def _write_atomic(self, filename: str, text: str) -> str:
        return write_text_atomic(os.path.join(self.results_dir, filename), text)

    def generate_result_id(self, data: Any) -> str:
        """
        由內容生成結果 ID

        Returns:
            SHA-256 十六進位字串；相同內容得到相同 ID
        """
        return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()

    def save_table(self, name: str, frame: pd.DataFrame) -> str:
        """
        以 TSV 保存表格

        Args:
            name: 文件名（不含副檔名）
            frame: 欄位順序即輸出順序

        Returns:
            寫入的文件路徑
        """
        text = frame.to_csv(sep="\t", index=False, float_format="%.17g", lineterminator="\n")
        path = self._write_atomic(f"{name}.tsv", text)
        logger.debug("wrote %d row(s) to %s", len(frame), path)
        return path

    def save_result(self, data: Dict[str, Any], name: str = "study",
                    result_id: Optional[str] = None) -> Dict[str, Any]:
        """
        保存 JSON 結果摘要

        Args:
            data: 結果數據字典
            name: 結果名稱，例如 'test'
            result_id: 自定義 ID，若不提供則由內容生成

        Returns:
            包含結果信息的狀態字典
        """
        if result_id is None:
            result_id = self.generate_result_id({"name": name, "data": data})
        filename = f"{name}_{result_id[:8]}.json"
        result_data = {
            "result_id": result_id,
            "name": name,
            "data": data,
            "filename": filename,
        }
        try:
            text = json.dumps(result_data, indent=2, sort_keys=True, default=_to_builtin) + "\n"
            path = self._write_atomic(filename, text)
            return {
                "status": "success",
                "result_id": result_id,
                "filename": filename,
                "filepath": path,
                "message": f"結果保存成功: {filename}",
            }
        except (OSError, TypeError, ValueError) as e:
            return {
                "status": "error",
                "message": f"保存結果失敗: {e}",
            }

    def load_result(self, result_id: str) -> Dict[str, Any]:
        """
        按 ID 加載結果

        Args:
            result_id: 結果 ID（可以是完整 ID 或前 8 個字符）

        Returns:
            結果數據，找不到時為錯誤狀態字典
        """
        search_id = result_id[:8]
        for filename in sorted(os.listdir(self.results_dir)):
            if not filename.endswith(".json") or not filename[:-5].endswith(f"_{search_id}"):
                continue
            try:
                with open(os.path.join(self.results_dir, filename), "r", encoding="utf-8") as f:
                    data = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                return {"status": "error", "message": str(e)}
            if len(result_id) > 8 and data.get("result_id") != result_id:
                continue
            return data
        return {"status": "error", "message": f"找不到結果 ID: {result_id}"}

    def list_results(self, limit: Optional[int] = None) -> Dict[str, Any]:
        """
        列出所有 JSON 結果（按文件名排序）

        Args:
            limit: 限制返回的數量，None 表示無限制
        """
        results = []
        for path in sorted(Path(self.results_dir).glob("*.json")):
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                logger.warning("skipping unreadable result file %s", path.name)
                continue
            results.append({
                "result_id": data.get("result_id"),
                "name": data.get("name"),
                "filename": path.name,
            })
            if limit and len(results) >= limit:
                break
        return {
            "status": "success",
            "count": len(results),
            "results": results,
        }
