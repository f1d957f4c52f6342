"""
文件格式数据模型
"""

from typing import Any, Dict, List

from pydantic import BaseModel, ConfigDict, Field

GAME_SCHEMA_VERSION = 1
CHECKPOINT_SCHEMA_VERSION = 1
CSV_SCHEMA_VERSION = 1
MANIFEST_SCHEMA_VERSION = 1


class GameFile(BaseModel):
    """博弈文件模型（JSON）"""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = Field(GAME_SCHEMA_VERSION, description="文件格式版本")
    name: str = Field("custom", description="博弈名称")
    n_agents: int = Field(..., description="智能体数", ge=1)
    action_counts: List[int] = Field(..., description="每个智能体的动作数")
    gamma: float = Field(..., description="折扣因子", ge=0.0, lt=1.0)
    r_max: float = Field(..., description="奖励绝对值上界", ge=0.0)
    initial_dist: List[float] = Field(..., description="初始状态分布")
    transition: List[List[List[float]]] = Field(
        ..., description="P[s][a_joint][s']，联合动作按智能体顺序行优先编号"
    )
    reward: List[List[float]] = Field(..., description="R[s][a_joint]")
    observation: List[List[int]] = Field(..., description="observation[i][s]")


class ConditionedTableFile(BaseModel):
    """条件策略的 logit 表"""

    model_config = ConfigDict(extra="forbid")

    agent: int = Field(..., ge=0)
    n_actions: int = Field(..., ge=1)
    preceding: List[int] = Field(default_factory=list, description="上下文智能体")
    context_counts: List[int] = Field(default_factory=list)
    logits: List[List[List[float]]] = Field(..., description="[观测][上下文][动作]")


class IndependentTableFile(BaseModel):
    """独立策略的 logit 表"""

    model_config = ConfigDict(extra="forbid")

    agent: int = Field(..., ge=0)
    n_actions: int = Field(..., ge=1)
    logits: List[List[float]] = Field(..., description="[观测][动作]")


class PolicyCheckpointFile(BaseModel):
    """策略检查点文件模型（JSON）"""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = Field(CHECKPOINT_SCHEMA_VERSION, description="文件格式版本")
    batches: List[List[int]] = Field(..., description="批次序列，编号从 0 开始")
    parameter_sharing: bool = Field(False)
    conditioned: List[ConditionedTableFile]
    independent: List[IndependentTableFile]


class ManifestFile(BaseModel):
    """输出目录清单（manifest.json）"""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = Field(MANIFEST_SCHEMA_VERSION, description="清单格式版本")
    csv_schema_version: int = Field(CSV_SCHEMA_VERSION, description="CSV 格式版本")
    command: str = Field(..., description="生成该目录的子命令")
    files: List[str] = Field(default_factory=list, description="相对路径，按字母序")
    config: Dict[str, Any] = Field(default_factory=dict, description="运行配置")
